//! Quantitative image and phase metrics used by the comparison tooling and
//! the acceptance checks.

use crate::error::{CoreError, Result};
use crate::imaging::{corrections, CorrectionModel, ImageVolume};
use crate::linalg::Vec3;
use num_complex::Complex64;

/// Voxel of the global magnitude maximum, as (i, j, l) lattice indices.
pub fn peak_location(volume: &ImageVolume) -> Result<(usize, usize, usize)> {
    let mut best: Option<(usize, f64)> = None;
    for (v, val) in volume.values.iter().enumerate() {
        let m = val.norm();
        if best.map_or(true, |(_, b)| m > b) {
            best = Some((v, m));
        }
    }
    let (idx, mag) = best.ok_or_else(|| CoreError::Metric("empty volume".into()))?;
    if mag == 0.0 {
        return Err(CoreError::Metric("volume is identically zero".into()));
    }
    let [nx, ny, _] = volume.geometry.counts;
    Ok((idx % nx, (idx / nx) % ny, idx / (nx * ny)))
}

/// Position of the global magnitude maximum in meters.
pub fn peak_position(volume: &ImageVolume) -> Result<Vec3> {
    let (i, j, l) = peak_location(volume)?;
    Ok(volume.geometry.voxel_position(i, j, l))
}

/// Peak-to-artifact ratio in dB: 20·log10 of the global peak magnitude over
/// the maximum magnitude outside guard spheres around the true scatterers.
pub fn peak_to_artifact_db(
    volume: &ImageVolume,
    true_positions: &[Vec3],
    guard_radius: f64,
) -> Result<f64> {
    if true_positions.is_empty() {
        return Err(CoreError::Metric("no true scatterer positions given".into()));
    }
    let [nx, ny, nz] = volume.geometry.counts;
    let mut peak = 0.0_f64;
    let mut artifact = 0.0_f64;
    for l in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let m = volume.values[volume.geometry.voxel_index(i, j, l)].norm();
                let pos = volume.geometry.voxel_position(i, j, l);
                peak = peak.max(m);
                let guarded = true_positions
                    .iter()
                    .any(|t| (pos - *t).norm() <= guard_radius);
                if !guarded {
                    artifact = artifact.max(m);
                }
            }
        }
    }
    if peak == 0.0 {
        return Err(CoreError::Metric("volume is identically zero".into()));
    }
    if artifact == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / artifact).log10())
}

/// Mean resultant length R̄ of a set of phases; circular variance is 1 − R̄.
pub fn mean_resultant_length(phases: &[f64]) -> Result<f64> {
    if phases.is_empty() {
        return Err(CoreError::Metric("no phases given".into()));
    }
    let sum: Complex64 = phases
        .iter()
        .map(|&p| Complex64::from_polar(1.0, p))
        .sum();
    Ok(sum.norm() / phases.len() as f64)
}

/// Circular variance 1 − R̄ ∈ [0, 1].
pub fn circular_variance(phases: &[f64]) -> Result<f64> {
    Ok(1.0 - mean_resultant_length(phases)?)
}

/// Circular standard deviation √(−2·ln R̄) in radians.
pub fn circular_std(phases: &[f64]) -> Result<f64> {
    let r = mean_resultant_length(phases)?.min(1.0);
    if r <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((-2.0 * r.ln()).sqrt())
}

/// Circular std of the corrected per-frequency image phases at one voxel.
///
/// The phase is read from the vector component with the largest magnitude in
/// the first image, so all frequencies are compared on the same component.
pub fn phase_flatness(
    images: &[ImageVolume],
    model: &CorrectionModel,
    voxel: (usize, usize, usize),
) -> Result<f64> {
    if images.is_empty() {
        return Err(CoreError::Metric("no images given".into()));
    }
    let idx = images[0].geometry.voxel_index(voxel.0, voxel.1, voxel.2);
    let component = (0..3)
        .max_by(|&a, &b| {
            images[0].values[idx].0[a]
                .norm()
                .total_cmp(&images[0].values[idx].0[b].norm())
        })
        .unwrap();
    let position = images[0].geometry.voxel_position(voxel.0, voxel.1, voxel.2);

    let mut phases = Vec::with_capacity(images.len());
    for img in images {
        let f = img
            .frequency_hz
            .ok_or_else(|| CoreError::Metric("fused image has no frequency tag".into()))?;
        let k_f = crate::wavenumber(f);
        let corrected = corrections(k_f, position, model)? * img.values[idx].0[component];
        if corrected.norm() == 0.0 {
            return Err(CoreError::Metric(format!(
                "zero image value at voxel {voxel:?}, frequency {f}"
            )));
        }
        phases.push(corrected.arg());
    }
    circular_std(&phases)
}
