//! Born-approximation synthetic measurement generator.
//!
//! A Hertzian dipole illuminates a cloud of isotropic point scatterers; the
//! probe scans a plane while a fixed reference antenna co-records the same
//! transmission. Per-position complex modulation coefficients model the
//! unknown waveform and missing Tx–Rx synchronization; they multiply probe
//! and reference identically, which is the physical simultaneity contract
//! that makes reference normalization exact.

use crate::error::{CoreError, Result};
use crate::linalg::{CVec3, Component, Vec3};
use crate::wavenumber;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Isotropic point scatterer: scattering dyad specialized to σ·I.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec3,
    pub reflectivity_re: f64,
    pub reflectivity_im: f64,
}

impl Scatterer {
    pub fn reflectivity(&self) -> Complex64 {
        Complex64::new(self.reflectivity_re, self.reflectivity_im)
    }
}

/// Planar scan: origin plus a regular n_u × n_v lattice along two
/// orthonormal axes. Probe index m enumerates row-major (v outer, u inner).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanGrid {
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub n_u: usize,
    pub n_v: usize,
    pub du: f64,
    pub dv: f64,
    pub probe_components: Vec<Component>,
}

impl ScanGrid {
    pub fn n_probes(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn probe_position(&self, m: usize) -> Vec3 {
        let i = m % self.n_u;
        let j = m / self.n_u;
        self.origin + self.u_axis.scale(i as f64 * self.du) + self.v_axis.scale(j as f64 * self.dv)
    }

    pub fn probe_positions(&self) -> Vec<Vec3> {
        (0..self.n_probes()).map(|m| self.probe_position(m)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_axis.dot(&self.v_axis).abs() > 1e-12 {
            return Err(CoreError::Domain("scan axes not orthogonal".into()));
        }
        if (self.u_axis.norm() - 1.0).abs() > 1e-12 || (self.v_axis.norm() - 1.0).abs() > 1e-12 {
            return Err(CoreError::Domain("scan axes not unit length".into()));
        }
        if self.n_probes() == 0 {
            return Err(CoreError::Domain("empty scan grid".into()));
        }
        if self.du <= 0.0 || self.dv <= 0.0 {
            return Err(CoreError::Domain("non-positive scan step".into()));
        }
        if self.probe_components.is_empty() {
            return Err(CoreError::Domain("no probe components selected".into()));
        }
        Ok(())
    }
}

/// Geometric and physical description of one synthetic experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub tx_position: Vec3,
    pub tx_polarization: Vec3,
    pub ref_position: Vec3,
    /// Cartesian reference component p used for normalization.
    pub ref_component: Component,
    pub scatterers: Vec<Scatterer>,
    pub scan_grid: ScanGrid,
    pub frequencies_hz: Vec<f64>,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.scan_grid.validate()?;
        if (self.tx_polarization.norm() - 1.0).abs() > 1e-12 {
            return Err(CoreError::Domain("tx polarization not unit length".into()));
        }
        if self.frequencies_hz.is_empty() {
            return Err(CoreError::Domain("no frequencies".into()));
        }
        if self
            .frequencies_hz
            .windows(2)
            .any(|w| w[1] <= w[0])
            || self.frequencies_hz[0] <= 0.0
        {
            return Err(CoreError::Domain(
                "frequencies must be strictly increasing and positive".into(),
            ));
        }
        if (self.ref_position - self.tx_position).norm() <= 1e-6 {
            return Err(CoreError::Domain(
                "reference antenna coincides with Tx".into(),
            ));
        }
        for m in 0..self.scan_grid.n_probes() {
            if (self.scan_grid.probe_position(m) - self.ref_position).norm() <= 1e-6 {
                return Err(CoreError::Domain(format!(
                    "reference antenna coincides with probe position {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_probes(&self) -> usize {
        self.scan_grid.n_probes()
    }

    pub fn n_frequencies(&self) -> usize {
        self.frequencies_hz.len()
    }
}

/// Per-(position, frequency) complex modulation coefficients B_m(f):
/// log-magnitude uniform in ±spread dB, phase uniform in [0, 2π), seeded.
#[derive(Debug, Clone)]
pub struct ModulationModel {
    /// coefficients[m][f]
    pub coefficients: Vec<Vec<Complex64>>,
}

impl ModulationModel {
    /// Identity modulation (B ≡ 1).
    pub fn identity(n_probes: usize, n_freqs: usize) -> Self {
        ModulationModel {
            coefficients: vec![vec![Complex64::new(1.0, 0.0); n_freqs]; n_probes],
        }
    }

    /// Random modulation; all coefficients are drawn up front from the seed
    /// so downstream parallel evaluation stays deterministic.
    pub fn random(n_probes: usize, n_freqs: usize, magnitude_spread_db: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..n_probes)
            .map(|_| {
                (0..n_freqs)
                    .map(|_| {
                        let db = rng.gen_range(-magnitude_spread_db..=magnitude_spread_db);
                        let mag = 10.0_f64.powf(db / 20.0);
                        let phase = rng.gen_range(0.0..2.0 * PI);
                        Complex64::from_polar(mag, phase)
                    })
                    .collect()
            })
            .collect();
        ModulationModel { coefficients }
    }

    pub fn get(&self, m: usize, f_idx: usize) -> Complex64 {
        self.coefficients[m][f_idx]
    }
}

/// Complex field samples indexed by (probe position, frequency, component),
/// with the co-recorded reference channel.
#[derive(Debug, Clone)]
pub struct FieldDataset {
    /// probe_fields[m][f_idx][c] for c in components
    pub probe_fields: Vec<Vec<Vec<Complex64>>>,
    /// ref_field[m][f_idx], reference component p only
    pub ref_field: Vec<Vec<Complex64>>,
    pub components: Vec<Component>,
    /// Cartesian component the reference channel was recorded with.
    pub ref_component: Component,
    pub frequencies_hz: Vec<f64>,
    pub probe_positions: Vec<Vec3>,
    pub normalized: bool,
    pub background_subtracted: bool,
}

impl FieldDataset {
    pub fn n_probes(&self) -> usize {
        self.probe_fields.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probe_fields.len() != self.ref_field.len()
            || self.probe_fields.len() != self.probe_positions.len()
        {
            return Err(CoreError::Incompatible("probe index ranges differ".into()));
        }
        for (pm, rm) in self.probe_fields.iter().zip(&self.ref_field) {
            if pm.len() != self.frequencies_hz.len() || rm.len() != self.frequencies_hz.len() {
                return Err(CoreError::Incompatible("frequency index ranges differ".into()));
            }
            for pf in pm {
                if pf.len() != self.components.len() {
                    return Err(CoreError::Incompatible("component count mismatch".into()));
                }
                if pf.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(CoreError::Domain("non-finite probe field entry".into()));
                }
            }
            if rm.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(CoreError::Domain("non-finite reference entry".into()));
            }
        }
        if self.normalized {
            let all_ones = self
                .ref_field
                .iter()
                .flatten()
                .all(|c| *c == Complex64::new(1.0, 0.0));
            if !all_ones {
                return Err(CoreError::Contract(
                    "normalized flag set but reference channel is not all ones".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Scalar free-space Green's function g = e^{−jkR}/(4πR) under the
/// e^{+j2πft} time convention.
pub fn scalar_green(k: f64, r: Vec3, r_src: Vec3) -> Result<Complex64> {
    let dist = (r - r_src).norm();
    if dist <= 0.0 {
        return Err(CoreError::Singularity(
            "scalar_green evaluated at coincident points".into(),
        ));
    }
    Ok(Complex64::new(0.0, -k * dist).exp() / (4.0 * PI * dist))
}

/// Electric field of a Hertzian dipole with moment `p` at `r0`, evaluated at
/// `r`: (I + k⁻²∇∇) g · p with near, intermediate, and far terms. Physical
/// pre-factors (−jωμ, η) are absorbed into the unit-amplitude convention.
pub fn dipole_field(k: f64, r0: Vec3, p: Vec3, r: Vec3) -> Result<CVec3> {
    dyadic_green_apply(k, r, r0, CVec3::from_real(p))
}

/// Dyadic Green's function applied to a complex source moment:
/// G(r, r')·p = g(R)·[(1 − j/(kR) − 1/(kR)²)·p + (−1 + 3j/(kR) + 3/(kR)²)(R̂·p)R̂].
pub fn dyadic_green_apply(k: f64, r: Vec3, r_src: Vec3, p: CVec3) -> Result<CVec3> {
    let sep = r - r_src;
    let dist = sep.norm();
    if dist <= 0.0 {
        return Err(CoreError::Singularity(
            "dyadic kernel evaluated at coincident points".into(),
        ));
    }
    let rhat = sep.scale(1.0 / dist);
    let kr = k * dist;
    let g = Complex64::new(0.0, -kr).exp() / (4.0 * PI * dist);
    let a = Complex64::new(1.0 - 1.0 / (kr * kr), -1.0 / kr);
    let b = Complex64::new(-1.0 + 3.0 / (kr * kr), 3.0 / kr);
    let radial = p.dot_real(&rhat);
    Ok(CVec3([
        g * (a * p.0[0] + b * radial * rhat.0[0]),
        g * (a * p.0[1] + b * radial * rhat.0[1]),
        g * (a * p.0[2] + b * radial * rhat.0[2]),
    ]))
}

/// Unmodulated incident and scattered fields at the probes and the reference
/// antenna for one frequency.
#[derive(Debug, Clone)]
pub struct BornFields {
    pub incident: Vec<CVec3>,
    pub scattered: Vec<CVec3>,
    pub ref_incident: CVec3,
    pub ref_scattered: CVec3,
}

impl BornFields {
    pub fn total(&self, m: usize) -> CVec3 {
        self.incident[m] + self.scattered[m]
    }

    pub fn ref_total(&self) -> CVec3 {
        self.ref_incident + self.ref_scattered
    }
}

/// Born fields: incident dipole field everywhere, induced moments
/// σ·E_i(r'_s), single-bounce scattered field re-propagated with the same
/// dyadic kernel. No multiple scattering.
pub fn born_fields(scenario: &Scenario, f_hz: f64) -> Result<BornFields> {
    let k = wavenumber(f_hz);
    let tx = scenario.tx_position;
    let pol = scenario.tx_polarization;

    // induced complex moments at the scatterers
    let mut moments = Vec::with_capacity(scenario.scatterers.len());
    for (s_idx, sc) in scenario.scatterers.iter().enumerate() {
        if (sc.position - tx).norm() <= 0.0 {
            return Err(CoreError::Singularity(format!(
                "scatterer {s_idx} coincides with Tx"
            )));
        }
        let e_inc = dipole_field(k, tx, pol, sc.position)?;
        moments.push((sc.position, e_inc.scale(sc.reflectivity())));
    }

    let eval_point = |r: Vec3| -> Result<(CVec3, CVec3)> {
        let incident = dipole_field(k, tx, pol, r)?;
        let mut scattered = CVec3::ZERO;
        for (pos, moment) in &moments {
            scattered = scattered + dyadic_green_apply(k, r, *pos, *moment)?;
        }
        Ok((incident, scattered))
    };

    let positions = scenario.scan_grid.probe_positions();
    let per_probe: Result<Vec<(CVec3, CVec3)>> =
        positions.par_iter().map(|r| eval_point(*r)).collect();
    let per_probe = per_probe?;
    let (ref_incident, ref_scattered) = eval_point(scenario.ref_position)?;

    Ok(BornFields {
        incident: per_probe.iter().map(|(i, _)| *i).collect(),
        scattered: per_probe.iter().map(|(_, s)| *s).collect(),
        ref_incident,
        ref_scattered,
    })
}

/// Full synthetic measurement: modulated total fields at the probes plus the
/// co-recorded reference channel, over all scenario frequencies.
pub fn synthesize_measurement(
    scenario: &Scenario,
    modulation: &ModulationModel,
) -> Result<FieldDataset> {
    scenario.validate()?;
    let n_probes = scenario.n_probes();
    let n_freqs = scenario.n_frequencies();
    if modulation.coefficients.len() < n_probes
        || modulation.coefficients.iter().any(|row| row.len() < n_freqs)
    {
        return Err(CoreError::Contract(
            "modulation model does not cover all (m, f)".into(),
        ));
    }

    let components = scenario.scan_grid.probe_components.clone();
    let p_idx = scenario.ref_component.index();

    let per_freq: Result<Vec<BornFields>> = scenario
        .frequencies_hz
        .par_iter()
        .map(|&f| born_fields(scenario, f))
        .collect();
    let per_freq = per_freq?;

    let mut probe_fields = vec![vec![vec![Complex64::new(0.0, 0.0); components.len()]; n_freqs]; n_probes];
    let mut ref_field = vec![vec![Complex64::new(0.0, 0.0); n_freqs]; n_probes];

    for (f_idx, fields) in per_freq.iter().enumerate() {
        let ref_total_p = fields.ref_total()[p_idx];
        for m in 0..n_probes {
            let b = modulation.get(m, f_idx);
            let total = fields.total(m);
            for (c_idx, comp) in components.iter().enumerate() {
                probe_fields[m][f_idx][c_idx] = b * total[comp.index()];
            }
            let r = b * ref_total_p;
            if r.norm() == 0.0 {
                return Err(CoreError::DegenerateReference(format!(
                    "reference magnitude zero at probe {m}, frequency index {f_idx}"
                )));
            }
            ref_field[m][f_idx] = r;
        }
    }

    Ok(FieldDataset {
        probe_fields,
        ref_field,
        components,
        ref_component: scenario.ref_component,
        frequencies_hz: scenario.frequencies_hz.clone(),
        probe_positions: scenario.scan_grid.probe_positions(),
        normalized: false,
        background_subtracted: false,
    })
}
