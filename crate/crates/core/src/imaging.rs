//! Image generation from solved spectra, phase/magnitude corrections,
//! multi-frequency fusion, and MIP display projections.
//!
//! Phase convention for the disaggregation integral: the e^{−j k k̂·r'}
//! factor uses r' relative to the spectrum's region center, i.e. the
//! center-offset phase e^{−j k k̂·center} is absorbed into the spectrum.
//! Corrections and fusion assume this convention throughout.

use crate::error::{CoreError, Result};
use crate::linalg::{CVec3, Component, Vec3};
use crate::pws::PlaneWaveSpectrum;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Raised-cosine angular window about a center direction: weight 1 inside
/// (1 − taper)·θ_max, smooth roll-off to 0 at θ_max, 0 beyond.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub center_direction: Vec3,
    /// Cutoff angle θ_max in radians, in (0, π].
    pub cutoff_angle: f64,
    /// Fraction of the cap over which the roll-off acts, in [0, 1].
    pub taper_fraction: f64,
}

impl SpectralWindow {
    /// Isotropic window: passes the full sphere unchanged.
    pub fn isotropic() -> Self {
        SpectralWindow {
            center_direction: Vec3::new(0.0, 0.0, 1.0),
            cutoff_angle: PI,
            taper_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_angle > 0.0 && self.cutoff_angle <= PI) {
            return Err(CoreError::Config("cutoff angle must lie in (0, π]".into()));
        }
        if !(0.0..=1.0).contains(&self.taper_fraction) {
            return Err(CoreError::Config("taper fraction must lie in [0, 1]".into()));
        }
        if (self.center_direction.norm() - 1.0).abs() > 1e-9 {
            return Err(CoreError::Config("window center must be a unit vector".into()));
        }
        Ok(())
    }
}

/// Window weight F(k̂·k̂^(c)) ∈ [0, 1] for one direction.
pub fn spectral_window(khat: &Vec3, window: &SpectralWindow) -> f64 {
    let cos_gamma = khat.dot(&window.center_direction).clamp(-1.0, 1.0);
    let gamma = cos_gamma.acos();
    if gamma > window.cutoff_angle {
        return 0.0;
    }
    let flat_edge = (1.0 - window.taper_fraction) * window.cutoff_angle;
    if gamma <= flat_edge {
        return 1.0;
    }
    let t = (gamma - flat_edge) / (window.cutoff_angle - flat_edge);
    0.5 * (1.0 + (PI * t).cos())
}

/// Regular voxel lattice: origin corner, three axis directions, counts, and
/// spacings. Voxel (i, j, l) sits at origin + i·s0·a0 + j·s1·a1 + l·s2·a2;
/// storage is row-major with i fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGeometry {
    pub origin: Vec3,
    pub axes: [Vec3; 3],
    pub counts: [usize; 3],
    pub spacing: [f64; 3],
}

impl VoxelGeometry {
    /// Axis-aligned lattice centered on `center` with the given half-extents.
    pub fn axis_aligned(center: Vec3, half_extent: [f64; 3], counts: [usize; 3]) -> Self {
        let spacing = [
            if counts[0] > 1 { 2.0 * half_extent[0] / (counts[0] - 1) as f64 } else { 1.0 },
            if counts[1] > 1 { 2.0 * half_extent[1] / (counts[1] - 1) as f64 } else { 1.0 },
            if counts[2] > 1 { 2.0 * half_extent[2] / (counts[2] - 1) as f64 } else { 1.0 },
        ];
        VoxelGeometry {
            origin: center - Vec3::new(half_extent[0], half_extent[1], half_extent[2]),
            axes: [
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            counts,
            spacing,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.counts[0] * self.counts[1] * self.counts[2]
    }

    pub fn voxel_index(&self, i: usize, j: usize, l: usize) -> usize {
        (l * self.counts[1] + j) * self.counts[0] + i
    }

    pub fn voxel_position(&self, i: usize, j: usize, l: usize) -> Vec3 {
        self.origin
            + self.axes[0].scale(i as f64 * self.spacing[0])
            + self.axes[1].scale(j as f64 * self.spacing[1])
            + self.axes[2].scale(l as f64 * self.spacing[2])
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.iter().any(|&c| c == 0) {
            return Err(CoreError::Config("voxel counts must be ≥ 1".into()));
        }
        if self.spacing.iter().any(|&s| s <= 0.0) {
            return Err(CoreError::Config("voxel spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Complex vector image on a voxel lattice; per-frequency or fused.
#[derive(Debug, Clone)]
pub struct ImageVolume {
    pub geometry: VoxelGeometry,
    pub values: Vec<CVec3>,
    /// Some(f) for a single-frequency image, None once fused.
    pub frequency_hz: Option<f64>,
}

impl ImageVolume {
    pub fn zero(geometry: VoxelGeometry, frequency_hz: Option<f64>) -> Self {
        let n = geometry.n_voxels();
        ImageVolume {
            geometry,
            values: vec![CVec3::ZERO; n],
            frequency_hz,
        }
    }
}

/// Enabled phase/magnitude correction factors for multi-frequency fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionModel {
    pub tx_position: Vec3,
    pub ref_position: Vec3,
    /// ψ_s(k_f, r') = e^{+j k_f |r' − r'_0|}: cancels the incident-field
    /// propagation phase under the isotropic point-source assumption.
    pub enable_psi_s: bool,
    /// ψ_ref(k_f) = e^{−j k_f |r_ref − r'_0|}: cancels the reference-channel
    /// phase left over from normalization.
    pub enable_psi_ref: bool,
    /// M_s(k_f, r') = 4π|r' − r'_0|: cancels incident spherical spreading.
    pub enable_m_s: bool,
}

impl CorrectionModel {
    pub fn disabled() -> Self {
        CorrectionModel {
            tx_position: Vec3::ZERO,
            ref_position: Vec3::ZERO,
            enable_psi_s: false,
            enable_psi_ref: false,
            enable_m_s: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enable_psi_ref && (self.ref_position - self.tx_position).norm() == 0.0 {
            return Err(CoreError::Config(
                "ψ_ref enabled but reference position equals Tx position".into(),
            ));
        }
        Ok(())
    }
}

/// Product of the enabled correction factors at one voxel and wavenumber.
pub fn corrections(k_f: f64, voxel: Vec3, model: &CorrectionModel) -> Result<Complex64> {
    let mut factor = Complex64::new(1.0, 0.0);
    let tx_dist = (voxel - model.tx_position).norm();
    if (model.enable_psi_s || model.enable_m_s) && tx_dist == 0.0 {
        return Err(CoreError::Singularity(
            "correction evaluated at the Tx position".into(),
        ));
    }
    if model.enable_psi_s {
        factor *= Complex64::new(0.0, k_f * tx_dist).exp();
    }
    if model.enable_psi_ref {
        let ref_dist = (model.ref_position - model.tx_position).norm();
        factor *= Complex64::new(0.0, -k_f * ref_dist).exp();
    }
    if model.enable_m_s {
        factor *= 4.0 * PI * tx_dist;
    }
    Ok(factor)
}

/// Windowed disaggregation of one spectrum onto a voxel lattice:
/// J̊(r') = Σ_q w_q·F(k̂_q·k̂^(c))·samples_q·e^{−j k k̂_q·(r' − center)}.
///
/// If the window annihilates the whole grid the result is a zero volume.
pub fn generate_image(
    spectrum: &PlaneWaveSpectrum,
    geometry: &VoxelGeometry,
    window: &SpectralWindow,
) -> Result<ImageVolume> {
    geometry.validate()?;
    window.validate()?;
    let grid = &spectrum.region.grid;
    let k = crate::wavenumber(spectrum.frequency_hz);
    let center = spectrum.region.center;

    let weights: Vec<f64> = grid
        .directions
        .iter()
        .zip(&grid.weights)
        .map(|(d, w)| w * spectral_window(d, window))
        .collect();
    let [nx, ny, nz] = geometry.counts;
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(ImageVolume::zero(geometry.clone(), Some(spectrum.frequency_hz)));
    }

    // separable phase tables: e^{−j k k̂·r'} factors per lattice axis
    struct DirTables {
        base: Complex64,
        ex: Vec<Complex64>,
        ey: Vec<Complex64>,
        ez: Vec<Complex64>,
    }
    let tables: Vec<Option<DirTables>> = grid
        .directions
        .par_iter()
        .zip(&weights)
        .map(|(khat, &w)| {
            if w == 0.0 {
                return None;
            }
            let phase_step = |axis: &Vec3, spacing: f64, n: usize| -> Vec<Complex64> {
                let step = Complex64::new(0.0, -k * khat.dot(axis) * spacing).exp();
                let mut table = Vec::with_capacity(n);
                let mut cur = Complex64::new(1.0, 0.0);
                for _ in 0..n {
                    table.push(cur);
                    cur *= step;
                }
                table
            };
            let base = Complex64::new(0.0, -k * khat.dot(&(geometry.origin - center))).exp()
                * w;
            Some(DirTables {
                base,
                ex: phase_step(&geometry.axes[0], geometry.spacing[0], nx),
                ey: phase_step(&geometry.axes[1], geometry.spacing[1], ny),
                ez: phase_step(&geometry.axes[2], geometry.spacing[2], nz),
            })
        })
        .collect();

    let slices: Vec<Vec<CVec3>> = (0..nz)
        .into_par_iter()
        .map(|l| {
            let mut slice = vec![CVec3::ZERO; nx * ny];
            for (q, t) in tables.iter().enumerate() {
                let Some(t) = t else { continue };
                let sample = spectrum.samples[q];
                let f_z = t.base * t.ez[l];
                for j in 0..ny {
                    let f_yz = f_z * t.ey[j];
                    let row = &mut slice[j * nx..(j + 1) * nx];
                    for (i, v) in row.iter_mut().enumerate() {
                        let phase = f_yz * t.ex[i];
                        v.0[0] += sample.0[0] * phase;
                        v.0[1] += sample.0[1] * phase;
                        v.0[2] += sample.0[2] * phase;
                    }
                }
            }
            slice
        })
        .collect();

    let mut values = Vec::with_capacity(geometry.n_voxels());
    for slice in slices {
        values.extend(slice);
    }
    Ok(ImageVolume {
        geometry: geometry.clone(),
        values,
        frequency_hz: Some(spectrum.frequency_hz),
    })
}

/// Fusion mode for multi-frequency image combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Voxelwise Σ_f ψ_s·ψ_ref·M_s·J̊.
    Coherent,
    /// Voxelwise Σ_f M_s·|J̊| per vector component (phase discarded).
    Incoherent,
}

impl std::str::FromStr for FusionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coherent" => Ok(FusionMode::Coherent),
            "incoherent" => Ok(FusionMode::Incoherent),
            other => Err(format!("unknown fusion mode '{other}'")),
        }
    }
}

/// Combines per-frequency images into one volume. Images are processed in
/// ascending frequency order regardless of input order, so the reduction is
/// bit-reproducible. M_s is applied in both modes; the modes differ only in
/// phase handling.
pub fn combine_frequencies(
    images: &[ImageVolume],
    model: &CorrectionModel,
    mode: FusionMode,
) -> Result<ImageVolume> {
    if images.is_empty() {
        return Err(CoreError::Domain("no images to combine".into()));
    }
    model.validate()?;
    let geometry = &images[0].geometry;
    for img in images {
        if img.geometry != *geometry {
            return Err(CoreError::Incompatible("voxel geometries differ".into()));
        }
        if img.frequency_hz.is_none() {
            return Err(CoreError::Domain(
                "combine_frequencies expects single-frequency inputs".into(),
            ));
        }
    }
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| {
        images[a]
            .frequency_hz
            .unwrap()
            .total_cmp(&images[b].frequency_hz.unwrap())
    });

    let [nx, ny, nz] = geometry.counts;
    let mut fused = ImageVolume::zero(geometry.clone(), None);
    for &idx in &order {
        let img = &images[idx];
        let k_f = crate::wavenumber(img.frequency_hz.unwrap());
        for l in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = geometry.voxel_index(i, j, l);
                    let voxel = geometry.voxel_position(i, j, l);
                    match mode {
                        FusionMode::Coherent => {
                            let c = corrections(k_f, voxel, model)?;
                            fused.values[v] = fused.values[v] + img.values[v].scale(c);
                        }
                        FusionMode::Incoherent => {
                            let m_s = if model.enable_m_s {
                                4.0 * PI * (voxel - model.tx_position).norm()
                            } else {
                                1.0
                            };
                            for c in 0..3 {
                                fused.values[v].0[c] +=
                                    Complex64::new(m_s * img.values[v].0[c].norm(), 0.0);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(fused)
}

/// 2-D maximum intensity projection: per-pixel maximum over the projection
/// axis of the voxel vector magnitude, normalized to peak = 0 dB.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MipMap {
    /// Lattice axes retained in the map, in (row, column) = (second, first) order.
    pub axis_u: usize,
    pub axis_v: usize,
    pub n_u: usize,
    pub n_v: usize,
    /// Linear magnitudes, row-major with u fastest.
    pub magnitudes: Vec<f64>,
    /// Peak linear magnitude the dB scale is referenced to.
    pub peak: f64,
}

impl MipMap {
    pub fn value_db(&self, iu: usize, iv: usize) -> f64 {
        let m = self.magnitudes[iv * self.n_u + iu];
        if m == 0.0 || self.peak == 0.0 {
            f64::NEG_INFINITY
        } else {
            20.0 * (m / self.peak).log10()
        }
    }
}

/// Projects a volume along one lattice axis (x, y, or z).
pub fn mip_project(volume: &ImageVolume, axis: Component) -> MipMap {
    let [nx, ny, nz] = volume.geometry.counts;
    let (axis_u, axis_v, n_u, n_v, n_w) = match axis {
        Component::X => (1, 2, ny, nz, nx),
        Component::Y => (0, 2, nx, nz, ny),
        Component::Z => (0, 1, nx, ny, nz),
    };
    let mut magnitudes = vec![0.0_f64; n_u * n_v];
    for l in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let m = volume.values[volume.geometry.voxel_index(i, j, l)].norm();
                let (iu, iv) = match axis {
                    Component::X => (j, l),
                    Component::Y => (i, l),
                    Component::Z => (i, j),
                };
                let pixel = &mut magnitudes[iv * n_u + iu];
                if m > *pixel {
                    *pixel = m;
                }
            }
        }
    }
    let _ = n_w;
    let peak = magnitudes.iter().cloned().fold(0.0, f64::max);
    MipMap {
        axis_u,
        axis_v,
        n_u,
        n_v,
        magnitudes,
        peak,
    }
}
