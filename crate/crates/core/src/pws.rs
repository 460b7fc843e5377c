//! Plane-wave-spectrum source representation and the single-level fast
//! multipole translation operator.
//!
//! Equivalent sources about a small set of centers are stored as transverse
//! complex 3-vectors on a unit-sphere quadrature grid. The translation
//! operator T_L converts an outgoing spectrum about one center into the field
//! observable at a displaced point; `forward_field` and `adjoint_field` form
//! the matrix-free pair the inverse solver iterates with.

use crate::error::{CoreError, Result};
use crate::linalg::{CVec3, Component, Vec3};
use crate::specfun::{legendre_p_table, sph_hankel2_table, QuadratureGrid};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

/// Role of a source region in the two-sum radiation system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionRole {
    /// Tx illumination sources.
    Incident,
    /// Target-of-interest (scattered) sources.
    Scattered,
}

/// Spherical source region: expansion center, enclosing radius, multipole
/// order, and the quadrature grid its spectrum lives on.
#[derive(Debug, Clone)]
pub struct SourceRegion {
    pub center: Vec3,
    pub radius: f64,
    pub role: RegionRole,
    pub order: usize,
    pub grid: Arc<QuadratureGrid>,
}

impl SourceRegion {
    pub fn validate(&self) -> Result<()> {
        if self.radius <= 0.0 {
            return Err(CoreError::Domain("region radius must be positive".into()));
        }
        if self.grid.band_limit < self.order {
            return Err(CoreError::Domain(format!(
                "grid band limit {} below region order {}",
                self.grid.band_limit, self.order
            )));
        }
        Ok(())
    }
}

/// Transverse plane-wave spectrum of one region at one frequency.
#[derive(Debug, Clone)]
pub struct PlaneWaveSpectrum {
    pub region: SourceRegion,
    pub frequency_hz: f64,
    /// One complex 3-vector per quadrature direction.
    pub samples: Vec<CVec3>,
}

impl PlaneWaveSpectrum {
    pub fn zero(region: SourceRegion, frequency_hz: f64) -> Self {
        let n = region.grid.len();
        PlaneWaveSpectrum {
            region,
            frequency_hz,
            samples: vec![CVec3::ZERO; n],
        }
    }

    /// Enforces the transversality invariant in place.
    pub fn project_transverse(&mut self) {
        for (s, d) in self.samples.iter_mut().zip(&self.region.grid.directions) {
            *s = s.project_transverse(d);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.samples.len() != self.region.grid.len() {
            return Err(CoreError::Domain("sample/grid length mismatch".into()));
        }
        for (q, (s, d)) in self.samples.iter().zip(&self.region.grid.directions).enumerate() {
            if !s.is_finite() {
                return Err(CoreError::Domain(format!("non-finite sample at q={q}")));
            }
            let radial = s.dot_real(d).norm();
            if radial > 1e-9 * s.norm().max(1e-300) {
                return Err(CoreError::Domain(format!(
                    "non-transverse sample at q={q}: |k̂·s| = {radial:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Multipole truncation order from the excess-bandwidth rule
/// L = ⌈kD/2 + 1.8·d0^{2/3}·(kD/2)^{1/3}⌉, clamped to ≥ 4.
pub fn select_order(k: f64, diameter: f64, digits: u32) -> usize {
    let kd2 = (k * diameter / 2.0).max(0.0);
    let l = kd2 + 1.8 * (digits as f64).powf(2.0 / 3.0) * kd2.cbrt();
    (l.ceil() as usize).max(4)
}

/// Translation operator T_L(k̂_q) = Σ_{l=0}^{L} (−j)^l (2l+1) h_l^(2)(k|X|) P_l(k̂_q·X̂)
/// evaluated on every grid direction.
pub fn translation_operator(
    order: usize,
    k: f64,
    translation: Vec3,
    grid: &QuadratureGrid,
) -> Result<Vec<Complex64>> {
    let dist = translation.norm();
    if dist <= 0.0 {
        return Err(CoreError::TranslationValidity(
            "zero-length translation vector".into(),
        ));
    }
    if grid.band_limit < order {
        return Err(CoreError::Domain(format!(
            "grid band limit {} below operator order {order}",
            grid.band_limit
        )));
    }
    let xhat = translation.scale(1.0 / dist);
    // per-l coefficients (−j)^l (2l+1) h_l^(2)(k|X|), shared across directions
    let hankel = sph_hankel2_table(order, k * dist)?;
    let mut coeff = Vec::with_capacity(order + 1);
    let mut minus_j_pow = Complex64::new(1.0, 0.0);
    for (l, h) in hankel.iter().enumerate() {
        coeff.push(minus_j_pow * (2.0 * l as f64 + 1.0) * h);
        let _ = l;
        minus_j_pow *= Complex64::new(0.0, -1.0);
    }

    grid.directions
        .iter()
        .map(|d| {
            let table = legendre_p_table(order, d.dot(&xhat))?;
            Ok(table
                .iter()
                .zip(&coeff)
                .map(|(p, c)| c * p)
                .sum::<Complex64>())
        })
        .collect()
}

/// Precomputed matrix-free forward/adjoint pair for a fixed probe set,
/// region list, component selection, and frequency.
///
/// The translation kernels T_L(k̂_q; r_m − center) are tabulated once at
/// construction; each forward or adjoint application is then a weighted
/// complex contraction.
pub struct PwsOperator {
    pub regions: Vec<SourceRegion>,
    pub probe_positions: Vec<Vec3>,
    pub components: Vec<Component>,
    pub wavenumber: f64,
    pub frequency_hz: f64,
    /// tables[region][m * grid_len + q], scaled by −j/4π and w_q.
    tables: Vec<Vec<Complex64>>,
}

impl PwsOperator {
    pub fn new(
        regions: Vec<SourceRegion>,
        probe_positions: Vec<Vec3>,
        components: Vec<Component>,
        frequency_hz: f64,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(CoreError::Domain("no observation components".into()));
        }
        let k = crate::wavenumber(frequency_hz);
        for (r_idx, region) in regions.iter().enumerate() {
            region.validate()?;
            for (m, p) in probe_positions.iter().enumerate() {
                if (*p - region.center).norm() <= region.radius {
                    return Err(CoreError::TranslationValidity(format!(
                        "probe {m} lies inside region {r_idx} sphere (center {:?}, radius {})",
                        region.center, region.radius
                    )));
                }
            }
        }

        let scale = Complex64::new(0.0, -1.0 / (4.0 * PI));
        let tables = regions
            .iter()
            .map(|region| {
                let grid = &region.grid;
                let n_q = grid.len();
                let rows: Result<Vec<Vec<Complex64>>> = probe_positions
                    .par_iter()
                    .map(|p| {
                        let t = translation_operator(region.order, k, *p - region.center, grid)?;
                        Ok(t.iter()
                            .zip(&grid.weights)
                            .map(|(t_q, w_q)| scale * w_q * t_q)
                            .collect())
                    })
                    .collect();
                let rows = rows?;
                let mut flat = Vec::with_capacity(probe_positions.len() * n_q);
                for row in rows {
                    flat.extend(row);
                }
                Ok(flat)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(PwsOperator {
            regions,
            probe_positions,
            components,
            wavenumber: k,
            frequency_hz,
            tables,
        })
    }

    pub fn n_observations(&self) -> usize {
        self.probe_positions.len() * self.components.len()
    }

    /// Forward map: field(m, c) = Σ_regions Σ_q (−j/4π)·w_q·T_L(k̂_q; r_m−center)
    /// ·[(I − k̂k̂ᵀ)·samples_q]_c.
    pub fn forward(&self, spectra: &[PlaneWaveSpectrum]) -> Result<Vec<Vec<Complex64>>> {
        if spectra.len() != self.regions.len() {
            return Err(CoreError::Domain("spectrum count != region count".into()));
        }
        for s in spectra {
            if (s.frequency_hz - self.frequency_hz).abs() > 1e-6 {
                return Err(CoreError::Domain("spectrum frequency mismatch".into()));
            }
        }
        let n_c = self.components.len();
        let comp_idx: Vec<usize> = self.components.iter().map(|c| c.index()).collect();

        let fields: Vec<Vec<Complex64>> = (0..self.probe_positions.len())
            .into_par_iter()
            .map(|m| {
                let mut row = vec![Complex64::new(0.0, 0.0); n_c];
                for (region_idx, spectrum) in spectra.iter().enumerate() {
                    let grid = &self.regions[region_idx].grid;
                    let n_q = grid.len();
                    let table = &self.tables[region_idx][m * n_q..(m + 1) * n_q];
                    for (q, t) in table.iter().enumerate() {
                        // transverse projection enforced defensively
                        let s = spectrum.samples[q].project_transverse(&grid.directions[q]);
                        for (c, &ci) in comp_idx.iter().enumerate() {
                            row[c] += t * s[ci];
                        }
                    }
                }
                row
            })
            .collect();
        Ok(fields)
    }

    /// Adjoint map in the quadrature-weighted spectrum inner product:
    /// ⟨forward(x), y⟩ = ⟨x, adjoint(y)⟩_w with ⟨a,b⟩_w = Σ_q w_q aᴴ_q·b_q.
    pub fn adjoint(&self, residual: &[Vec<Complex64>]) -> Result<Vec<PlaneWaveSpectrum>> {
        if residual.len() != self.probe_positions.len()
            || residual.iter().any(|r| r.len() != self.components.len())
        {
            return Err(CoreError::Domain("residual shape mismatch".into()));
        }
        let comp_idx: Vec<usize> = self.components.iter().map(|c| c.index()).collect();

        self.regions
            .iter()
            .enumerate()
            .map(|(region_idx, region)| {
                let grid = &region.grid;
                let n_q = grid.len();
                let table = &self.tables[region_idx];
                let samples: Vec<CVec3> = (0..n_q)
                    .into_par_iter()
                    .map(|q| {
                        let mut acc = CVec3::ZERO;
                        let w = grid.weights[q];
                        for (m, row) in residual.iter().enumerate() {
                            // table already carries w_q; divide it back out so the
                            // adjoint is exact in the weighted inner product
                            let t_conj = (table[m * n_q + q] / w).conj();
                            for (c, &ci) in comp_idx.iter().enumerate() {
                                acc.0[ci] += t_conj * row[c];
                            }
                        }
                        acc.project_transverse(&grid.directions[q])
                    })
                    .collect();
                Ok(PlaneWaveSpectrum {
                    region: region.clone(),
                    frequency_hz: self.frequency_hz,
                    samples,
                })
            })
            .collect()
    }
}

/// One-shot forward evaluation (builds the kernel tables and discards them).
pub fn forward_field(
    spectra: &[PlaneWaveSpectrum],
    probe_positions: &[Vec3],
    components: &[Component],
) -> Result<Vec<Vec<Complex64>>> {
    if spectra.is_empty() {
        return Err(CoreError::Domain("no spectra given".into()));
    }
    let op = PwsOperator::new(
        spectra.iter().map(|s| s.region.clone()).collect(),
        probe_positions.to_vec(),
        components.to_vec(),
        spectra[0].frequency_hz,
    )?;
    op.forward(spectra)
}

/// One-shot adjoint evaluation.
pub fn adjoint_field(
    residual: &[Vec<Complex64>],
    regions: &[SourceRegion],
    probe_positions: &[Vec3],
    components: &[Component],
    frequency_hz: f64,
) -> Result<Vec<PlaneWaveSpectrum>> {
    let op = PwsOperator::new(
        regions.to_vec(),
        probe_positions.to_vec(),
        components.to_vec(),
        frequency_hz,
    )?;
    op.adjoint(residual)
}

/// Weighted inner product on spectrum lists: Σ_regions Σ_q w_q ⟨a_q, b_q⟩.
pub fn spectra_inner(a: &[PlaneWaveSpectrum], b: &[PlaneWaveSpectrum]) -> Complex64 {
    a.iter()
        .zip(b)
        .map(|(sa, sb)| {
            sa.samples
                .iter()
                .zip(&sb.samples)
                .zip(&sa.region.grid.weights)
                .map(|((x, y), w)| *w * x.inner(y))
                .sum::<Complex64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{dipole_field, scalar_green};
    use crate::specfun::sphere_quadrature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn select_order_examples() {
        // kD/2 = 10, d0 = 3 → ceil(10 + 1.8·3^{2/3}·10^{1/3})
        let expected = (10.0_f64 + 1.8 * 3.0_f64.powf(2.0 / 3.0) * 10.0_f64.cbrt()).ceil() as usize;
        assert_eq!(select_order(1.0, 20.0, 3), expected);
        assert_eq!(expected, 19);

        // clamp floor
        assert_eq!(select_order(1e-6, 1e-6, 3), 4);

        // monotone in kD
        let mut prev = 0;
        for i in 1..50 {
            let l = select_order(i as f64, 1.0, 4);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn translation_order_zero_is_constant() {
        let grid = sphere_quadrature(4).unwrap();
        let t = translation_operator(0, 5.0, Vec3::new(0.0, 0.0, 2.0), &grid).unwrap();
        let h0 = crate::specfun::sph_hankel2(0, 10.0).unwrap();
        for v in &t {
            assert!((v - h0).norm() < 1e-15);
        }
    }

    #[test]
    fn translation_zero_vector_rejected() {
        let grid = sphere_quadrature(4).unwrap();
        assert!(translation_operator(2, 5.0, Vec3::ZERO, &grid).is_err());
    }

    #[test]
    fn translation_depends_only_on_angle() {
        // permuting grid directions permutes outputs identically
        let grid = sphere_quadrature(8).unwrap();
        let x = Vec3::new(0.3, -0.4, 1.2);
        let t = translation_operator(8, 20.0, x, &grid).unwrap();
        let mut reversed_grid = grid.clone();
        reversed_grid.directions.reverse();
        reversed_grid.weights.reverse();
        let t_rev = translation_operator(8, 20.0, x, &reversed_grid).unwrap();
        for (a, b) in t.iter().zip(t_rev.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    /// Gegenbauer check: (−jk/4π)·∮ T_L(k̂; X)·e^{−j k k̂·d} d²k̂ against
    /// 4π·g(|X+d|) from the independent scalar Green's function.
    fn gegenbauer_relative_error(k: f64, x: Vec3, d: Vec3, digits: u32) -> f64 {
        let order = select_order(k, 2.0 * d.norm(), digits);
        let grid = sphere_quadrature(order).unwrap();
        let t = translation_operator(order, k, x, &grid).unwrap();
        let integral: Complex64 = grid
            .directions
            .iter()
            .zip(&grid.weights)
            .zip(&t)
            .map(|((khat, w), t_q)| *w * t_q * Complex64::new(0.0, -k * khat.dot(&d)).exp())
            .sum();
        let lhs = Complex64::new(0.0, -k / (4.0 * PI)) * integral;
        let rhs = 4.0 * PI * scalar_green(k, x + d, Vec3::ZERO).unwrap();
        (lhs - rhs).norm() / rhs.norm()
    }

    #[test]
    fn gegenbauer_identity_holds() {
        let k = 100.0;
        let x = Vec3::new(0.0, 0.2, 1.0).normalized();
        let d = Vec3::new(0.26, -0.1, 0.08); // |d| ≈ 0.3|X|
        assert!((d.norm() / x.norm() - 0.3).abs() < 0.02);
        let err = gegenbauer_relative_error(k, x, d, 4);
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn gegenbauer_error_decreases_with_order() {
        let k = 60.0;
        let x = Vec3::new(0.0, 0.0, 1.0);
        let d = Vec3::new(0.2, 0.1, 0.05);
        let kd2 = k * d.norm(); // kD/2 with D = 2|d|
        let l_min = kd2.ceil() as usize;
        let l_max = select_order(k, 2.0 * d.norm(), 4);
        let mut errors = Vec::new();
        for order in [l_min, (l_min + l_max) / 2, l_max] {
            let grid = sphere_quadrature(order.max(4)).unwrap();
            let t = translation_operator(order.max(4), k, x, &grid).unwrap();
            let integral: Complex64 = grid
                .directions
                .iter()
                .zip(&grid.weights)
                .zip(&t)
                .map(|((khat, w), t_q)| *w * t_q * Complex64::new(0.0, -k * khat.dot(&d)).exp())
                .sum();
            let lhs = Complex64::new(0.0, -k / (4.0 * PI)) * integral;
            let rhs = 4.0 * PI * scalar_green(k, x + d, Vec3::ZERO).unwrap();
            errors.push((lhs - rhs).norm() / rhs.norm());
        }
        assert!(errors[2] <= errors[0] * 1.05, "errors {errors:?}");
        assert!(errors[2] <= 1e-3);
    }

    fn test_region(order: usize, center: Vec3, radius: f64) -> SourceRegion {
        SourceRegion {
            center,
            radius,
            role: RegionRole::Scattered,
            order,
            grid: Arc::new(sphere_quadrature(order).unwrap()),
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_field() {
        let region = test_region(8, Vec3::ZERO, 0.05);
        let spectrum = PlaneWaveSpectrum::zero(region, 8e9);
        let probes = vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.3, 0.1, 0.9)];
        let fields = forward_field(&[spectrum], &probes, &Component::all()).unwrap();
        for row in fields {
            for v in row {
                assert_eq!(v, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn probe_inside_sphere_rejected() {
        let region = test_region(8, Vec3::ZERO, 0.5);
        let spectrum = PlaneWaveSpectrum::zero(region, 8e9);
        let err = forward_field(&[spectrum], &[Vec3::new(0.1, 0.0, 0.0)], &Component::all());
        assert!(matches!(err, Err(CoreError::TranslationValidity(_))));
    }

    #[test]
    fn point_current_spectrum_matches_dipole_field() {
        // exact aggregation of a unit point current p at the region center:
        // samples_q = (I − k̂k̂ᵀ)·p·k/(4π); forward_field must then reproduce
        // the full dyadic dipole field at exterior points.
        let f_hz = 3e9;
        let k = crate::wavenumber(f_hz);
        let radius = 0.02;
        let order = select_order(k, 2.0 * radius, 6).max(12);
        let region = SourceRegion {
            center: Vec3::ZERO,
            radius,
            role: RegionRole::Scattered,
            order,
            grid: Arc::new(sphere_quadrature(order).unwrap()),
        };
        let p = Vec3::new(0.0, 1.0, 0.0);
        let samples: Vec<CVec3> = region
            .grid
            .directions
            .iter()
            .map(|khat| {
                CVec3::from_real(p)
                    .project_transverse(khat)
                    .scale(Complex64::new(k / (4.0 * PI), 0.0))
            })
            .collect();
        let spectrum = PlaneWaveSpectrum {
            region,
            frequency_hz: f_hz,
            samples,
        };
        spectrum.validate().unwrap();

        // far zone: k·|r| ≈ 125 at |r| = 2 m
        let probes = vec![
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(1.0, 1.2, 0.8),
            Vec3::new(-0.5, 0.3, 1.9),
        ];
        let fields = forward_field(&[spectrum], &probes, &Component::all()).unwrap();
        for (m, r) in probes.iter().enumerate() {
            let expected = dipole_field(k, Vec3::ZERO, p, *r).unwrap();
            let mut err = 0.0_f64;
            for c in 0..3 {
                err += (fields[m][c] - expected[c]).norm_sqr();
            }
            let rel = err.sqrt() / expected.norm();
            assert!(rel < 1e-3, "probe {m}: relative error {rel}");
        }
    }

    #[test]
    fn forward_superposition_over_regions() {
        let f_hz = 5e9;
        let region_a = test_region(10, Vec3::new(0.0, 0.0, 0.0), 0.03);
        let region_b = test_region(10, Vec3::new(0.2, 0.0, 0.0), 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut random_spectrum = |region: &SourceRegion| {
            let samples: Vec<CVec3> = region
                .grid
                .directions
                .iter()
                .map(|khat| {
                    CVec3([
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    ])
                    .project_transverse(khat)
                })
                .collect();
            PlaneWaveSpectrum {
                region: region.clone(),
                frequency_hz: f_hz,
                samples,
            }
        };
        let sa = random_spectrum(&region_a);
        let sb = random_spectrum(&region_b);
        let probes = vec![Vec3::new(0.1, 0.0, 1.0), Vec3::new(-0.2, 0.3, 0.8)];

        let both = forward_field(&[sa.clone(), sb.clone()], &probes, &Component::all()).unwrap();
        let only_a = forward_field(&[sa], &probes, &Component::all()).unwrap();
        let only_b = forward_field(&[sb], &probes, &Component::all()).unwrap();
        for m in 0..probes.len() {
            for c in 0..3 {
                let sum = only_a[m][c] + only_b[m][c];
                assert!((both[m][c] - sum).norm() <= 1e-12 * sum.norm().max(1e-30));
            }
        }
    }

    #[test]
    fn forward_is_linear() {
        let f_hz = 5e9;
        let region = test_region(8, Vec3::ZERO, 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut spectrum = PlaneWaveSpectrum::zero(region.clone(), f_hz);
        for (s, d) in spectrum.samples.iter_mut().zip(&region.grid.directions) {
            *s = CVec3([
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ])
            .project_transverse(d);
        }
        let alpha = Complex64::new(1.3, -0.7);
        let mut scaled = spectrum.clone();
        for s in scaled.samples.iter_mut() {
            *s = s.scale(alpha);
        }
        let probes = vec![Vec3::new(0.0, 0.1, 1.0)];
        let base = forward_field(&[spectrum], &probes, &Component::all()).unwrap();
        let out = forward_field(&[scaled], &probes, &Component::all()).unwrap();
        for c in 0..3 {
            let expected = alpha * base[0][c];
            assert!((out[0][c] - expected).norm() <= 1e-12 * expected.norm().max(1e-30));
        }
    }

    #[test]
    fn adjoint_identity() {
        let f_hz = 6e9;
        let regions = vec![
            test_region(9, Vec3::new(0.0, 0.0, 0.0), 0.04),
            test_region(7, Vec3::new(0.25, -0.1, 0.0), 0.03),
        ];
        let probes: Vec<Vec3> = (0..7)
            .map(|i| Vec3::new(-0.3 + 0.1 * i as f64, 0.2, 1.0))
            .collect();
        let components = vec![Component::X, Component::Y];
        let op = PwsOperator::new(regions.clone(), probes.clone(), components.clone(), f_hz)
            .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x: Vec<PlaneWaveSpectrum> = regions
            .iter()
            .map(|region| {
                let samples: Vec<CVec3> = region
                    .grid
                    .directions
                    .iter()
                    .map(|d| {
                        CVec3([
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                        ])
                        .project_transverse(d)
                    })
                    .collect();
                PlaneWaveSpectrum {
                    region: region.clone(),
                    frequency_hz: f_hz,
                    samples,
                }
            })
            .collect();
        let y: Vec<Vec<Complex64>> = (0..probes.len())
            .map(|_| {
                (0..components.len())
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();

        let ax = op.forward(&x).unwrap();
        let aty = op.adjoint(&y).unwrap();

        let lhs: Complex64 = ax
            .iter()
            .zip(&y)
            .map(|(ar, yr)| {
                ar.iter()
                    .zip(yr)
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>()
            })
            .sum();
        let rhs = spectra_inner(&x, &aty);

        let x_norm = spectra_inner(&x, &x).re.sqrt();
        let y_norm: f64 = y
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(
            (lhs - rhs).norm() <= 1e-10 * x_norm * y_norm,
            "⟨Ax,y⟩ = {lhs}, ⟨x,Aᴴy⟩ = {rhs}"
        );

        // adjoint outputs stay transverse
        for s in &aty {
            s.validate().unwrap();
        }
    }

    #[test]
    fn adjoint_single_row_is_conjugated_kernel() {
        let f_hz = 4e9;
        let region = test_region(6, Vec3::ZERO, 0.03);
        let probe = Vec3::new(0.0, 0.0, 1.0);
        let components = vec![Component::Y];
        let op = PwsOperator::new(vec![region.clone()], vec![probe], components.clone(), f_hz)
            .unwrap();

        let y = vec![vec![Complex64::new(1.0, 0.0)]];
        let aty = op.adjoint(&y).unwrap();

        let k = crate::wavenumber(f_hz);
        let t = translation_operator(region.order, k, probe - region.center, &region.grid)
            .unwrap();
        let scale = Complex64::new(0.0, -1.0 / (4.0 * PI));
        for (q, (s, khat)) in aty[0]
            .samples
            .iter()
            .zip(&region.grid.directions)
            .enumerate()
        {
            let kernel = (scale * t[q]).conj();
            let expected = CVec3::from_real(Vec3::new(0.0, 1.0, 0.0))
                .scale(kernel)
                .project_transverse(khat);
            for c in 0..3 {
                assert!((s[c] - expected[c]).norm() <= 1e-13 * expected[c].norm().max(1e-300));
            }
        }
    }
}
