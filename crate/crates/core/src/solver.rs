//! Preprocessing and the regularized inverse source solve.
//!
//! Observed datasets are first normalized by the co-recorded reference
//! channel, which cancels the unknown per-position modulation coefficients
//! and restores spatial coherence. Optionally a background capture is
//! subtracted. The per-frequency linear system is then solved matrix-free by
//! conjugate gradients on the normal equations, with early stopping as the
//! only regularizer (semi-convergence).

use crate::error::{CoreError, Result};
use crate::forward::FieldDataset;
use crate::linalg::{CVec3, Component, Vec3};
use crate::pws::{
    spectra_inner, PlaneWaveSpectrum, PwsOperator, RegionRole, SourceRegion,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Reference-normalization settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationConfig {
    /// Cartesian component p the reference channel was recorded with.
    pub component: Component,
    /// Guard threshold relative to the dataset median reference magnitude;
    /// entries below it indicate a reference-antenna placement problem.
    pub min_ref_magnitude: f64,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            component: Component::Y,
            min_ref_magnitude: 1e-6,
        }
    }
}

/// Iterative solver settings. Early stopping is the regularizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub relative_residual_target: f64,
    pub report_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 500,
            relative_residual_target: 1e-3,
            report_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(CoreError::Config("max_iterations must be ≥ 1".into()));
        }
        if !(self.relative_residual_target > 0.0 && self.relative_residual_target < 1.0) {
            return Err(CoreError::Config(
                "relative_residual_target must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-solve convergence record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub frequency_hz: f64,
    /// ‖A x_k − Ē‖ / ‖Ē‖ after each iteration (entry 0 is the start value 1).
    pub residual_history: Vec<f64>,
    pub final_relative_misfit: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
}

impl SolveDiagnostics {
    /// Line-oriented text report (iteration, residual).
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# frequency_hz {}\n", self.frequency_hz));
        for (i, r) in self.residual_history.iter().enumerate() {
            out.push_str(&format!("{i} {r:e}\n"));
        }
        out.push_str(&format!(
            "# final misfit {:e} iterations {} converged {} stagnated {}\n",
            self.final_relative_misfit, self.iterations, self.converged, self.stagnated
        ));
        out
    }
}

/// Divides every probe sample by the co-recorded reference value, cancelling
/// the modulation coefficients exactly. The reference channel is replaced by
/// ones and the normalized flag set.
pub fn normalize_by_reference(
    dataset: &FieldDataset,
    cfg: &NormalizationConfig,
) -> Result<FieldDataset> {
    if dataset.normalized {
        // idempotent: ref ≡ 1, dividing again changes nothing
        return Ok(dataset.clone());
    }
    if !(cfg.min_ref_magnitude > 0.0 && cfg.min_ref_magnitude <= 1.0) {
        return Err(CoreError::Config(
            "min_ref_magnitude must lie in (0, 1]".into(),
        ));
    }
    if cfg.component != dataset.ref_component {
        return Err(CoreError::Config(format!(
            "normalization component {} does not match the recorded reference component {}",
            cfg.component, dataset.ref_component
        )));
    }

    let mut magnitudes: Vec<f64> = dataset
        .ref_field
        .iter()
        .flatten()
        .map(|c| c.norm())
        .collect();
    magnitudes.sort_by(|a, b| a.total_cmp(b));
    let median = magnitudes[magnitudes.len() / 2];
    let threshold = cfg.min_ref_magnitude * median;

    let mut degenerate = Vec::new();
    for (m, row) in dataset.ref_field.iter().enumerate() {
        for (f_idx, r) in row.iter().enumerate() {
            if r.norm() < threshold {
                degenerate.push((m, f_idx));
            }
        }
    }
    if !degenerate.is_empty() {
        return Err(CoreError::DegenerateReference(format!(
            "{} entries below {:.3e} (median-relative guard), first: {:?}",
            degenerate.len(),
            threshold,
            &degenerate[..degenerate.len().min(8)]
        )));
    }

    let mut out = dataset.clone();
    for (m, row) in out.probe_fields.iter_mut().enumerate() {
        for (f_idx, entry) in row.iter_mut().enumerate() {
            let r = dataset.ref_field[m][f_idx];
            for v in entry.iter_mut() {
                *v /= r;
            }
        }
    }
    for row in out.ref_field.iter_mut() {
        for v in row.iter_mut() {
            *v = Complex64::new(1.0, 0.0);
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Entrywise difference of two normalized datasets on the same grid and
/// frequency list; isolates the scattered/reference term under the Born
/// model.
pub fn background_subtract(
    target: &FieldDataset,
    background: &FieldDataset,
) -> Result<FieldDataset> {
    if !target.normalized || !background.normalized {
        return Err(CoreError::Contract(
            "background subtraction requires normalized datasets".into(),
        ));
    }
    if target.frequencies_hz != background.frequencies_hz {
        return Err(CoreError::Incompatible("frequency lists differ".into()));
    }
    if target.components != background.components {
        return Err(CoreError::Incompatible("component lists differ".into()));
    }
    if target.probe_positions.len() != background.probe_positions.len()
        || target
            .probe_positions
            .iter()
            .zip(&background.probe_positions)
            .any(|(a, b)| (*a - *b).norm() > 1e-9)
    {
        return Err(CoreError::Incompatible("probe grids differ".into()));
    }

    let mut out = target.clone();
    for (m, row) in out.probe_fields.iter_mut().enumerate() {
        for (f_idx, entry) in row.iter_mut().enumerate() {
            for (c, v) in entry.iter_mut().enumerate() {
                *v -= background.probe_fields[m][f_idx][c];
            }
        }
    }
    out.background_subtracted = true;
    Ok(out)
}

/// Startup self-check: the adjoint identity must hold on a deterministic
/// pseudo-random probe before any solve is attempted.
fn adjoint_self_check(op: &PwsOperator) -> Result<()> {
    // cheap deterministic pseudo-random values, no RNG dependency
    let mut state = 0x9e3779b97f4a7c15_u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };

    let x: Vec<PlaneWaveSpectrum> = op
        .regions
        .iter()
        .map(|region| {
            let samples: Vec<CVec3> = region
                .grid
                .directions
                .iter()
                .map(|d| {
                    CVec3([
                        Complex64::new(next(), next()),
                        Complex64::new(next(), next()),
                        Complex64::new(next(), next()),
                    ])
                    .project_transverse(d)
                })
                .collect();
            PlaneWaveSpectrum {
                region: region.clone(),
                frequency_hz: op.frequency_hz,
                samples,
            }
        })
        .collect();
    let y: Vec<Vec<Complex64>> = (0..op.probe_positions.len())
        .map(|_| {
            (0..op.components.len())
                .map(|_| Complex64::new(next(), next()))
                .collect()
        })
        .collect();

    let ax = op.forward(&x)?;
    let aty = op.adjoint(&y)?;
    let lhs: Complex64 = ax
        .iter()
        .zip(&y)
        .map(|(ar, yr)| ar.iter().zip(yr).map(|(a, b)| a.conj() * b).sum::<Complex64>())
        .sum();
    let rhs = spectra_inner(&x, &aty);
    let x_norm = spectra_inner(&x, &x).re.sqrt();
    let y_norm: f64 = y.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if (lhs - rhs).norm() > 1e-8 * x_norm * y_norm {
        return Err(CoreError::Config(format!(
            "adjoint identity self-check failed: |⟨Ax,y⟩ − ⟨x,Aᴴy⟩| = {:e}",
            (lhs - rhs).norm()
        )));
    }
    Ok(())
}

fn data_norm(v: &[Vec<Complex64>]) -> f64 {
    v.iter()
        .flatten()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Single-frequency inverse source solve: minimizes ‖A x − Ē‖₂ by conjugate
/// gradients on the normal equations, starting from x = 0, stopping at the
/// residual target or the iteration cap.
pub fn solve_isr(
    observations: &FieldDataset,
    regions: &[SourceRegion],
    cfg: &SolverConfig,
    frequency_hz: f64,
) -> Result<(Vec<PlaneWaveSpectrum>, SolveDiagnostics)> {
    cfg.validate()?;
    if !observations.normalized {
        return Err(CoreError::Contract(
            "solve_isr requires a normalized dataset".into(),
        ));
    }
    if !observations.background_subtracted
        && !regions.iter().any(|r| r.role == RegionRole::Incident)
    {
        return Err(CoreError::Contract(
            "without background subtraction the Tx incident region must be included".into(),
        ));
    }
    let f_idx = observations
        .frequencies_hz
        .iter()
        .position(|&f| (f - frequency_hz).abs() <= 1e-6 * frequency_hz)
        .ok_or_else(|| {
            CoreError::Domain(format!("frequency {frequency_hz} Hz not in dataset"))
        })?;

    let op = PwsOperator::new(
        regions.to_vec(),
        observations.probe_positions.clone(),
        observations.components.clone(),
        frequency_hz,
    )?;
    adjoint_self_check(&op)?;

    let rhs: Vec<Vec<Complex64>> = observations
        .probe_fields
        .iter()
        .map(|row| row[f_idx].clone())
        .collect();
    let rhs_norm = data_norm(&rhs);

    let mut x: Vec<PlaneWaveSpectrum> = regions
        .iter()
        .map(|r| PlaneWaveSpectrum::zero(r.clone(), frequency_hz))
        .collect();

    if rhs_norm == 0.0 {
        let diagnostics = SolveDiagnostics {
            frequency_hz,
            residual_history: vec![0.0],
            final_relative_misfit: 0.0,
            iterations: 0,
            converged: true,
            stagnated: false,
        };
        return Ok((x, diagnostics));
    }

    // CGNR in the quadrature-weighted spectrum inner product
    let mut residual = rhs.clone();
    let mut z = op.adjoint(&residual)?;
    let mut direction = z.clone();
    let mut gamma = spectra_inner(&z, &z).re;

    let mut history = vec![1.0_f64];
    let mut converged = false;
    let mut stagnated = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iterations {
        let a_dir = op.forward(&direction)?;
        let denom: f64 = a_dir.iter().flatten().map(|c| c.norm_sqr()).sum();
        if denom == 0.0 {
            break;
        }
        let alpha = gamma / denom;

        for (xs, ds) in x.iter_mut().zip(&direction) {
            for (xv, dv) in xs.samples.iter_mut().zip(&ds.samples) {
                *xv = *xv + dv.scale(Complex64::new(alpha, 0.0));
            }
        }
        for (rr, ar) in residual.iter_mut().zip(&a_dir) {
            for (rv, av) in rr.iter_mut().zip(ar) {
                *rv -= alpha * av;
            }
        }

        iterations = iter + 1;
        let rel = data_norm(&residual) / rhs_norm;
        // CGNR minimizes the data residual over the Krylov subspace; a rise
        // beyond roundoff indicates a broken adjoint pair
        debug_assert!(rel <= history.last().unwrap() * (1.0 + 1e-9));
        history.push(rel);

        if rel <= cfg.relative_residual_target {
            converged = true;
            break;
        }
        if history.len() > 11 {
            let past = history[history.len() - 11];
            if past - rel < 1e-12 {
                stagnated = true;
                break;
            }
        }

        z = op.adjoint(&residual)?;
        let gamma_new = spectra_inner(&z, &z).re;
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (ds, zs) in direction.iter_mut().zip(&z) {
            for (dv, zv) in ds.samples.iter_mut().zip(&zs.samples) {
                *dv = *zv + dv.scale(Complex64::new(beta, 0.0));
            }
        }
    }

    let final_rel = *history.last().unwrap();
    let diagnostics = SolveDiagnostics {
        frequency_hz,
        residual_history: history,
        final_relative_misfit: final_rel,
        iterations,
        converged,
        stagnated,
    };
    Ok((x, diagnostics))
}

/// Region description independent of frequency; concrete orders and grids
/// are sized per frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSpec {
    pub center: Vec3,
    pub radius: f64,
    pub incident: bool,
}

/// Builds concrete regions for one frequency: all regions share the
/// quadrature grid sized by the largest order.
pub fn build_regions(
    specs: &[RegionSpec],
    frequency_hz: f64,
    accuracy_digits: u32,
) -> Result<Vec<SourceRegion>> {
    if specs.is_empty() {
        return Err(CoreError::Config("no source regions given".into()));
    }
    let k = crate::wavenumber(frequency_hz);
    let orders: Vec<usize> = specs
        .iter()
        .map(|s| crate::pws::select_order(k, 2.0 * s.radius, accuracy_digits))
        .collect();
    let max_order = *orders.iter().max().unwrap();
    let grid = std::sync::Arc::new(crate::specfun::sphere_quadrature(max_order)?);
    Ok(specs
        .iter()
        .zip(orders)
        .map(|(s, order)| SourceRegion {
            center: s.center,
            radius: s.radius,
            role: if s.incident {
                RegionRole::Incident
            } else {
                RegionRole::Scattered
            },
            order,
            grid: grid.clone(),
        })
        .collect())
}

/// Outcome of one per-frequency solve inside `solve_all_frequencies`.
pub struct FrequencySolve {
    pub frequency_hz: f64,
    pub outcome: Result<(Vec<PlaneWaveSpectrum>, SolveDiagnostics)>,
}

/// Independent per-frequency solves; failures are collected, not fatal.
pub fn solve_all_frequencies(
    observations: &FieldDataset,
    specs: &[RegionSpec],
    cfg: &SolverConfig,
    accuracy_digits: u32,
) -> Vec<FrequencySolve> {
    observations
        .frequencies_hz
        .iter()
        .map(|&f| {
            let outcome = build_regions(specs, f, accuracy_digits)
                .and_then(|regions| solve_isr(observations, &regions, cfg, f));
            FrequencySolve {
                frequency_hz: f,
                outcome,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{
        born_fields, synthesize_measurement, ModulationModel, Scatterer, ScanGrid, Scenario,
    };
    use crate::pws::forward_field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_scenario(n: usize) -> Scenario {
        Scenario {
            tx_position: Vec3::new(0.0, 0.0, 0.5),
            tx_polarization: Vec3::new(0.0, 1.0, 0.0),
            ref_position: Vec3::new(-0.5, 0.0, 0.8),
            ref_component: Component::Y,
            scatterers: vec![Scatterer {
                position: Vec3::new(0.02, 0.05, 0.0),
                reflectivity_re: 1.0,
                reflectivity_im: 0.0,
            }],
            scan_grid: ScanGrid {
                origin: Vec3::new(-0.3, -0.3, 1.0),
                u_axis: Vec3::new(1.0, 0.0, 0.0),
                v_axis: Vec3::new(0.0, 1.0, 0.0),
                n_u: n,
                n_v: n,
                du: 0.6 / (n - 1) as f64,
                dv: 0.6 / (n - 1) as f64,
                probe_components: vec![Component::X, Component::Y, Component::Z],
            },
            frequencies_hz: vec![8e9],
            rng_seed: 1,
        }
    }

    #[test]
    fn normalization_is_modulation_free() {
        let scenario = test_scenario(6);
        let cfg = NormalizationConfig::default();
        let identity = ModulationModel::identity(scenario.n_probes(), 1);
        let baseline = normalize_by_reference(
            &synthesize_measurement(&scenario, &identity).unwrap(),
            &cfg,
        )
        .unwrap();
        for seed in 0..20 {
            let modulation = ModulationModel::random(scenario.n_probes(), 1, 20.0, seed);
            let ds = synthesize_measurement(&scenario, &modulation).unwrap();
            let normalized = normalize_by_reference(&ds, &cfg).unwrap();
            for m in 0..scenario.n_probes() {
                for c in 0..3 {
                    let a = baseline.probe_fields[m][0][c];
                    let b = normalized.probe_fields[m][0][c];
                    assert!(
                        (a - b).norm() <= 1e-12 * a.norm().max(1e-30),
                        "seed {seed} m={m} c={c}"
                    );
                }
            }
        }
    }

    #[test]
    fn normalization_complex_division_and_idempotence() {
        let scenario = test_scenario(3);
        let modulation = ModulationModel::random(scenario.n_probes(), 1, 10.0, 2);
        let mut ds = synthesize_measurement(&scenario, &modulation).unwrap();
        // overwrite one entry with the trivial example: probe 2+0j, ref 1+1j
        ds.probe_fields[0][0][0] = Complex64::new(2.0, 0.0);
        ds.ref_field[0][0] = Complex64::new(1.0, 1.0);
        let cfg = NormalizationConfig::default();
        let normalized = normalize_by_reference(&ds, &cfg).unwrap();
        assert!(
            (normalized.probe_fields[0][0][0] - Complex64::new(1.0, -1.0)).norm() < 1e-15
        );
        assert!(normalized.normalized);
        assert!(normalized
            .ref_field
            .iter()
            .flatten()
            .all(|c| *c == Complex64::new(1.0, 0.0)));

        let again = normalize_by_reference(&normalized, &cfg).unwrap();
        assert_eq!(again.probe_fields, normalized.probe_fields);
    }

    #[test]
    fn degenerate_reference_reported_with_indices() {
        let scenario = test_scenario(3);
        let modulation = ModulationModel::identity(scenario.n_probes(), 1);
        let mut ds = synthesize_measurement(&scenario, &modulation).unwrap();
        ds.ref_field[4][0] = Complex64::new(1e-30, 0.0);
        let err = normalize_by_reference(&ds, &NormalizationConfig::default());
        match err {
            Err(CoreError::DegenerateReference(msg)) => assert!(msg.contains("(4, 0)")),
            other => panic!("expected degenerate-reference error, got {other:?}"),
        }
    }

    #[test]
    fn background_subtraction_isolates_scattered_term() {
        let scenario = test_scenario(5);
        let f = scenario.frequencies_hz[0];
        let mut empty = scenario.clone();
        empty.scatterers.clear();
        let cfg = NormalizationConfig::default();

        let modulation = ModulationModel::random(scenario.n_probes(), 1, 20.0, 9);
        let scene =
            normalize_by_reference(&synthesize_measurement(&scenario, &modulation).unwrap(), &cfg)
                .unwrap();
        let background = normalize_by_reference(
            &synthesize_measurement(&empty, &modulation).unwrap(),
            &cfg,
        )
        .unwrap();
        let diff = background_subtract(&scene, &background).unwrap();
        assert!(diff.background_subtracted);

        // analytically assembled value from the Born fields
        let fields = born_fields(&scenario, f).unwrap();
        let p = scenario.ref_component.index();
        for m in 0..scenario.n_probes() {
            let total = fields.total(m);
            let ref_total = fields.ref_total()[p];
            let inc = fields.incident[m];
            let ref_inc = fields.ref_incident[p];
            for c in 0..3 {
                let expected = total[c] / ref_total - inc[c] / ref_inc;
                let got = diff.probe_fields[m][0][c];
                assert!(
                    (got - expected).norm() <= 1e-9 * expected.norm().max(1e-20),
                    "m={m} c={c}: {got} vs {expected}"
                );
            }
        }

        // self-subtraction → zeros
        let zero = background_subtract(&scene, &scene).unwrap();
        assert!(zero
            .probe_fields
            .iter()
            .flatten()
            .flatten()
            .all(|c| c.norm() == 0.0));
    }

    #[test]
    fn background_subtraction_rejects_mismatch() {
        let scenario = test_scenario(4);
        let other = test_scenario(5);
        let cfg = NormalizationConfig::default();
        let identity_a = ModulationModel::identity(scenario.n_probes(), 1);
        let identity_b = ModulationModel::identity(other.n_probes(), 1);
        let a = normalize_by_reference(
            &synthesize_measurement(&scenario, &identity_a).unwrap(),
            &cfg,
        )
        .unwrap();
        let b =
            normalize_by_reference(&synthesize_measurement(&other, &identity_b).unwrap(), &cfg)
                .unwrap();
        assert!(matches!(
            background_subtract(&a, &b),
            Err(CoreError::Incompatible(_))
        ));
    }

    fn inverse_crime_dataset(
        n_probes: usize,
        specs: &[RegionSpec],
        frequency_hz: f64,
    ) -> (FieldDataset, Vec<PlaneWaveSpectrum>) {
        let regions = build_regions(specs, frequency_hz, 3).unwrap();
        let k = crate::wavenumber(frequency_hz);
        // smooth truth: two point currents inside each region, so the data
        // lies in the well-conditioned range of the forward operator
        let truth: Vec<PlaneWaveSpectrum> = regions
            .iter()
            .map(|region| {
                let sources = [
                    (Vec3::new(0.04, -0.02, 0.03).scale(region.radius), Vec3::new(0.0, 1.0, 0.2)),
                    (Vec3::new(-0.03, 0.05, -0.01).scale(region.radius), Vec3::new(1.0, 0.0, -0.4)),
                ];
                let samples: Vec<CVec3> = region
                    .grid
                    .directions
                    .iter()
                    .map(|d| {
                        let mut v = CVec3::ZERO;
                        for (offset, p) in &sources {
                            let phase = Complex64::new(0.0, k * d.dot(offset)).exp()
                                * (k / (4.0 * std::f64::consts::PI));
                            for i in 0..3 {
                                v.0[i] += phase * p[i];
                            }
                        }
                        v.project_transverse(d)
                    })
                    .collect();
                PlaneWaveSpectrum {
                    region: region.clone(),
                    frequency_hz,
                    samples,
                }
            })
            .collect();
        // probes on a sphere enclosing the regions keep the forward operator
        // well conditioned over the radiating modes
        let centroid = specs
            .iter()
            .fold(Vec3::ZERO, |acc, s| acc + s.center)
            .scale(1.0 / specs.len() as f64);
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        let positions: Vec<Vec3> = (0..n_probes)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n_probes as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                centroid + Vec3::new(rho * phi.cos(), rho * phi.sin(), z).scale(0.4)
            })
            .collect();
        let components = vec![Component::X, Component::Y, Component::Z];
        let fields = forward_field(&truth, &positions, &components).unwrap();
        let n = positions.len();
        let dataset = FieldDataset {
            probe_fields: fields.into_iter().map(|row| vec![row]).collect(),
            ref_field: vec![vec![Complex64::new(1.0, 0.0)]; n],
            components,
            ref_component: Component::Y,
            frequencies_hz: vec![frequency_hz],
            probe_positions: positions,
            normalized: true,
            background_subtracted: true,
        };
        (dataset, truth)
    }

    #[test]
    fn inverse_crime_recovery() {
        let f = 8e9;
        let specs = vec![RegionSpec {
            center: Vec3::new(0.0, 0.05, 0.0),
            radius: 0.02,
            incident: false,
        }];
        let (dataset, _truth) = inverse_crime_dataset(144, &specs, f);
        let regions = build_regions(&specs, f, 3).unwrap();
        let cfg = SolverConfig {
            max_iterations: 200,
            relative_residual_target: 1e-7,
            report_every: 50,
        };
        let (spectra, diag) = solve_isr(&dataset, &regions, &cfg, f).unwrap();
        assert!(
            diag.final_relative_misfit <= 1e-6,
            "misfit {} after {} iterations",
            diag.final_relative_misfit,
            diag.iterations
        );
        // residual history is non-increasing
        for w in diag.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
        for s in &spectra {
            s.validate().unwrap();
        }
    }

    #[test]
    fn zero_observations_zero_iterations() {
        let f = 8e9;
        let specs = vec![RegionSpec {
            center: Vec3::ZERO,
            radius: 0.02,
            incident: false,
        }];
        let (mut dataset, _) = inverse_crime_dataset(36, &specs, f);
        for row in dataset.probe_fields.iter_mut() {
            for entry in row.iter_mut() {
                for v in entry.iter_mut() {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        let regions = build_regions(&specs, f, 3).unwrap();
        let (spectra, diag) =
            solve_isr(&dataset, &regions, &SolverConfig::default(), f).unwrap();
        assert_eq!(diag.iterations, 0);
        assert!(spectra[0].samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn unnormalized_input_rejected() {
        let scenario = test_scenario(6);
        let modulation = ModulationModel::identity(scenario.n_probes(), 1);
        let ds = synthesize_measurement(&scenario, &modulation).unwrap();
        let specs = vec![RegionSpec {
            center: Vec3::ZERO,
            radius: 0.02,
            incident: false,
        }];
        let regions = build_regions(&specs, 8e9, 3).unwrap();
        assert!(matches!(
            solve_isr(&ds, &regions, &SolverConfig::default(), 8e9),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn incident_region_required_without_background_subtraction() {
        let f = 8e9;
        let specs = vec![RegionSpec {
            center: Vec3::ZERO,
            radius: 0.02,
            incident: false,
        }];
        let (mut dataset, _) = inverse_crime_dataset(36, &specs, f);
        dataset.background_subtracted = false;
        let regions = build_regions(&specs, f, 3).unwrap();
        assert!(matches!(
            solve_isr(&dataset, &regions, &SolverConfig::default(), f),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn early_stopping_tracks_noise_floor() {
        // additive complex Gaussian at −30 dB: the stopping-point misfit must
        // sit within a factor 2 of the noise floor
        let f = 8e9;
        let specs = vec![RegionSpec {
            center: Vec3::new(0.0, 0.05, 0.0),
            radius: 0.02,
            incident: false,
        }];
        let (mut dataset, _) = inverse_crime_dataset(100, &specs, f);

        let signal_norm: f64 = dataset
            .probe_fields
            .iter()
            .flatten()
            .flatten()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        let n_entries = (dataset.n_probes() * 3) as f64;
        let sigma = signal_norm * 10f64.powf(-30.0 / 20.0) / n_entries.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut noise_sq = 0.0;
        for row in dataset.probe_fields.iter_mut() {
            for entry in row.iter_mut() {
                for v in entry.iter_mut() {
                    let n = Complex64::new(
                        sigma * rand_distr_normal(&mut rng),
                        sigma * rand_distr_normal(&mut rng),
                    );
                    noise_sq += n.norm_sqr();
                    *v += n;
                }
            }
        }
        let noise_floor = noise_sq.sqrt() / signal_norm;

        let regions = build_regions(&specs, f, 3).unwrap();
        let cfg = SolverConfig {
            max_iterations: 300,
            relative_residual_target: noise_floor, // discrepancy-style stop
            report_every: 50,
        };
        let (_, diag) = solve_isr(&dataset, &regions, &cfg, f).unwrap();
        assert!(
            diag.final_relative_misfit <= 2.0 * noise_floor
                && diag.final_relative_misfit >= noise_floor / 2.0,
            "misfit {} vs noise floor {}",
            diag.final_relative_misfit,
            noise_floor
        );
    }

    // Box–Muller standard normal from a uniform RNG
    fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn solve_all_frequencies_isolates_failures() {
        let specs = vec![RegionSpec {
            center: Vec3::new(0.0, 0.05, 0.0),
            radius: 0.02,
            incident: false,
        }];

        // first frequency is pathological (k|X| underflows the Hankel
        // recurrence into overflow), second is a clean inverse-crime setup
        let f_bad = 1e-60;
        let f_good = 8e9;
        let (good, _) = inverse_crime_dataset(144, &specs, f_good);
        let dataset = FieldDataset {
            probe_fields: good
                .probe_fields
                .iter()
                .map(|row| vec![vec![Complex64::new(1.0, 0.0); 3], row[0].clone()])
                .collect(),
            ref_field: vec![vec![Complex64::new(1.0, 0.0); 2]; good.n_probes()],
            components: good.components.clone(),
            ref_component: Component::Y,
            frequencies_hz: vec![f_bad, f_good],
            probe_positions: good.probe_positions.clone(),
            normalized: true,
            background_subtracted: true,
        };

        let cfg = SolverConfig {
            max_iterations: 200,
            relative_residual_target: 1e-5,
            report_every: 50,
        };
        let results = solve_all_frequencies(&dataset, &specs, &cfg, 3);
        assert_eq!(results.len(), 2);
        assert!(results[0].outcome.is_err(), "pathological frequency must fail");
        let (spectra, diag) = results[1].outcome.as_ref().unwrap();
        assert_eq!(spectra.len(), 1);
        assert!(diag.final_relative_misfit <= 1e-4);
    }
}
