//! SDR-style OFDM measurement chain.
//!
//! Synthesizes baseband OFDM I/Q records with seeded QPSK data, applies
//! narrowband per-subcarrier channel responses, and extracts per-subcarrier
//! harmonics by FFT with known-pilot wipe-off. `dataset_from_chain` runs the
//! whole chain per probe position against the Born forward model, realizing
//! the per-position modulation coefficients physically.

use crate::error::{CoreError, Result};
use crate::forward::{born_fields, FieldDataset, Scenario};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Only QPSK is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub carrier_frequency_hz: f64,
    pub sample_rate_hz: f64,
    /// FFT size, power of two.
    pub n_fft: usize,
    /// Signed bin offsets around DC.
    pub active_subcarriers: Vec<i32>,
    pub cyclic_prefix_len: usize,
    pub n_symbols: usize,
    pub constellation: Constellation,
    pub rng_seed: u64,
    /// Spread (dB) of the random per-capture complex gain emulating the
    /// missing Tx–Rx synchronization; 0 disables it.
    pub sync_error_spread_db: f64,
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft == 0 {
            return Err(CoreError::Config("n_fft must be a power of two".into()));
        }
        if self.active_subcarriers.is_empty() {
            return Err(CoreError::Config("no active subcarriers".into()));
        }
        let half = (self.n_fft / 2) as i32;
        if self.active_subcarriers.iter().any(|&b| b.abs() >= half) {
            return Err(CoreError::Config(
                "subcarrier offset beyond ±n_fft/2".into(),
            ));
        }
        if self.n_symbols == 0 {
            return Err(CoreError::Config("n_symbols must be ≥ 1".into()));
        }
        let occupied = self.subcarrier_spacing_hz()
            * (self
                .active_subcarriers
                .iter()
                .map(|b| b.abs())
                .max()
                .unwrap() as f64
                * 2.0
                + 1.0);
        if self.sample_rate_hz <= occupied.min(self.sample_rate_hz * 0.999) {
            return Err(CoreError::Config(
                "sample rate below occupied bandwidth".into(),
            ));
        }
        Ok(())
    }

    pub fn subcarrier_spacing_hz(&self) -> f64 {
        self.sample_rate_hz / self.n_fft as f64
    }

    /// Absolute RF frequency of each active subcarrier, in config order.
    pub fn subcarrier_frequencies_hz(&self) -> Vec<f64> {
        self.active_subcarriers
            .iter()
            .map(|&b| self.carrier_frequency_hz + b as f64 * self.subcarrier_spacing_hz())
            .collect()
    }

    pub fn symbol_len(&self) -> usize {
        self.n_fft + self.cyclic_prefix_len
    }

    fn bin_index(&self, offset: i32) -> usize {
        offset.rem_euclid(self.n_fft as i32) as usize
    }
}

/// Which receive channel a capture belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelId {
    Probe,
    Reference,
}

/// Baseband I/Q capture.
#[derive(Debug, Clone)]
pub struct IqRecord {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub channel_id: ChannelId,
}

impl IqRecord {
    pub fn capture_length(&self) -> usize {
        self.samples.len()
    }
}

/// QPSK pilot symbol for (capture seed, OFDM symbol, bin offset). The mapping
/// depends only on these three values, so the extractor can regenerate it
/// without replaying the synthesis order.
fn qpsk_pilot(seed: u64, symbol: usize, bin: i32) -> Complex64 {
    // splitmix64 over the packed identifiers
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15_u64.wrapping_mul(symbol as u64 + 1))
        .wrapping_add((bin as i64 as u64).wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    let re = if z & 1 == 0 { 1.0 } else { -1.0 };
    let im = if z & 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(re, im) / 2.0_f64.sqrt()
}

/// Baseband OFDM synthesis: n_symbols with seeded QPSK on the active bins,
/// cyclic prefix prepended per symbol.
pub fn ofdm_synthesize(cfg: &OfdmConfig) -> Result<IqRecord> {
    cfg.validate()?;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(cfg.n_fft);
    let mut samples = Vec::with_capacity(cfg.n_symbols * cfg.symbol_len());
    let mut spectrum = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    for s in 0..cfg.n_symbols {
        for v in spectrum.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for &bin in &cfg.active_subcarriers {
            spectrum[cfg.bin_index(bin)] = qpsk_pilot(cfg.rng_seed, s, bin);
        }
        ifft.process(&mut spectrum);
        // unnormalized inverse FFT: time sample n is Σ_k X_k e^{+j2πkn/N}
        let body = spectrum.clone();
        samples.extend_from_slice(&body[cfg.n_fft - cfg.cyclic_prefix_len..]);
        samples.extend_from_slice(&body);
    }
    Ok(IqRecord {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
        channel_id: ChannelId::Probe,
    })
}

/// Applies a narrowband per-subcarrier frequency response: per symbol
/// FFT → multiply active bin k by H(k) → IFFT, cyclic prefix rebuilt.
pub fn channel_apply(iq: &IqRecord, cfg: &OfdmConfig, response: &[Complex64]) -> Result<IqRecord> {
    if response.len() != cfg.active_subcarriers.len() {
        return Err(CoreError::Config(
            "channel response must cover every active subcarrier".into(),
        ));
    }
    let sym_len = cfg.symbol_len();
    if iq.samples.len() % sym_len != 0 {
        return Err(CoreError::Framing(format!(
            "record length {} is not a whole number of {}-sample symbols",
            iq.samples.len(),
            sym_len
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let ifft = planner.plan_fft_inverse(cfg.n_fft);
    let scale = 1.0 / cfg.n_fft as f64;

    let mut out = Vec::with_capacity(iq.samples.len());
    for chunk in iq.samples.chunks(sym_len) {
        let mut spectrum: Vec<Complex64> = chunk[cfg.cyclic_prefix_len..].to_vec();
        fft.process(&mut spectrum);
        for (&bin, h) in cfg.active_subcarriers.iter().zip(response) {
            spectrum[cfg.bin_index(bin)] *= h;
        }
        ifft.process(&mut spectrum);
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        out.extend_from_slice(&spectrum[cfg.n_fft - cfg.cyclic_prefix_len..]);
        out.extend_from_slice(&spectrum);
    }
    Ok(IqRecord {
        samples: out,
        sample_rate_hz: iq.sample_rate_hz,
        channel_id: iq.channel_id,
    })
}

/// Per-subcarrier complex harmonic: FFT per symbol after prefix strip, then
/// a matched-filter average against the known pilots so the data modulation
/// is wiped. For a record synthesized with `ofdm_synthesize` and passed
/// through `channel_apply`, the result is the channel response H(k).
pub fn extract_harmonics(iq: &IqRecord, cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    let sym_len = cfg.symbol_len();
    if iq.samples.len() < sym_len {
        return Err(CoreError::Framing(
            "record shorter than one OFDM symbol".into(),
        ));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.n_fft);
    let scale = 1.0 / cfg.n_fft as f64;

    let mut numerator = vec![Complex64::new(0.0, 0.0); cfg.active_subcarriers.len()];
    let mut pilot_energy = vec![0.0_f64; cfg.active_subcarriers.len()];
    for (s, chunk) in iq.samples.chunks_exact(sym_len).enumerate() {
        let mut spectrum: Vec<Complex64> = chunk[cfg.cyclic_prefix_len..].to_vec();
        fft.process(&mut spectrum);
        for (a, &bin) in cfg.active_subcarriers.iter().enumerate() {
            let pilot = qpsk_pilot(cfg.rng_seed, s, bin);
            numerator[a] += pilot.conj() * spectrum[cfg.bin_index(bin)] * scale;
            pilot_energy[a] += pilot.norm_sqr();
        }
    }
    numerator
        .into_iter()
        .zip(pilot_energy)
        .zip(&cfg.active_subcarriers)
        .map(|((num, energy), &bin)| {
            if energy == 0.0 {
                Err(CoreError::Domain(format!(
                    "undefined harmonic: zero pilot energy on subcarrier {bin}"
                )))
            } else {
                Ok(num / energy)
            }
        })
        .collect()
}

/// Runs the full chain per probe position: an independent transmit
/// realization (with an unknown per-capture complex gain), the probe- and
/// reference-path channel responses from the Born model, and harmonic
/// extraction on both channels. Frequencies of the returned dataset are the
/// subcarrier absolute frequencies; `scenario.frequencies_hz` is not used.
pub fn dataset_from_chain(scenario: &Scenario, cfg: &OfdmConfig) -> Result<FieldDataset> {
    cfg.validate()?;
    scenario.validate()?;
    let frequencies = cfg.subcarrier_frequencies_hz();
    let mut freq_order: Vec<usize> = (0..frequencies.len()).collect();
    freq_order.sort_by(|&a, &b| frequencies[a].total_cmp(&frequencies[b]));
    let sorted_frequencies: Vec<f64> = freq_order.iter().map(|&i| frequencies[i]).collect();
    // sorted_pos[a] = index of subcarrier a (config order) in the sorted table
    let mut sorted_pos = vec![0usize; frequencies.len()];
    for (pos, &a) in freq_order.iter().enumerate() {
        sorted_pos[a] = pos;
    }
    if sorted_frequencies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::Config("duplicate subcarrier frequencies".into()));
    }

    // Born fields once per subcarrier frequency, shared by all probes
    let fields: Result<Vec<_>> = sorted_frequencies
        .iter()
        .map(|&f| born_fields(scenario, f))
        .collect();
    let fields = fields?;

    let n_probes = scenario.n_probes();
    let components = scenario.scan_grid.probe_components.clone();
    let p_idx = scenario.ref_component.index();

    let mut probe_fields =
        vec![vec![vec![Complex64::new(0.0, 0.0); components.len()]; frequencies.len()]; n_probes];
    let mut ref_field = vec![vec![Complex64::new(0.0, 0.0); frequencies.len()]; n_probes];

    for m in 0..n_probes {
        // independent transmit realization per position
        let mut capture_cfg = cfg.clone();
        capture_cfg.rng_seed = cfg
            .rng_seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(m as u64);
        let mut tx = ofdm_synthesize(&capture_cfg)
            .map_err(|e| CoreError::Config(format!("position {m}: {e}")))?;

        // unknown per-capture complex gain (common to both coherent channels)
        if cfg.sync_error_spread_db > 0.0 {
            let h = {
                let mut z = capture_cfg.rng_seed ^ 0xd6e8feb86659fd93;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
                z ^ (z >> 31)
            };
            let u1 = (h >> 11) as f64 / (1u64 << 53) as f64;
            let u2 = ((h.wrapping_mul(0xff51afd7ed558ccd)) >> 11) as f64 / (1u64 << 53) as f64;
            let db = (2.0 * u1 - 1.0) * cfg.sync_error_spread_db;
            let gain = Complex64::from_polar(10.0_f64.powf(db / 20.0), 2.0 * PI * u2);
            for v in tx.samples.iter_mut() {
                *v *= gain;
            }
        }

        // response vectors must follow the config's subcarrier order
        let response_at = |c_idx: Option<usize>| -> Vec<Complex64> {
            (0..cfg.active_subcarriers.len())
                .map(|a| match c_idx {
                    Some(ci) => fields[sorted_pos[a]].total(m)[ci],
                    None => fields[sorted_pos[a]].ref_total()[p_idx],
                })
                .collect()
        };

        let mut ref_record = channel_apply(&tx, &capture_cfg, &response_at(None))
            .map_err(|e| CoreError::Framing(format!("position {m}: {e}")))?;
        ref_record.channel_id = ChannelId::Reference;
        let ref_harmonics = extract_harmonics(&ref_record, &capture_cfg)
            .map_err(|e| CoreError::Domain(format!("position {m}: {e}")))?;

        for (c_out, comp) in components.iter().enumerate() {
            let probe_record = channel_apply(&tx, &capture_cfg, &response_at(Some(comp.index())))
                .map_err(|e| CoreError::Framing(format!("position {m}: {e}")))?;
            let harmonics = extract_harmonics(&probe_record, &capture_cfg)
                .map_err(|e| CoreError::Domain(format!("position {m}: {e}")))?;
            for a in 0..cfg.active_subcarriers.len() {
                probe_fields[m][sorted_pos[a]][c_out] = harmonics[a];
            }
        }
        for a in 0..cfg.active_subcarriers.len() {
            let f_out = sorted_pos[a];
            let r = ref_harmonics[a];
            if r.norm() == 0.0 {
                return Err(CoreError::DegenerateReference(format!(
                    "zero reference harmonic at probe {m}, subcarrier {}",
                    cfg.active_subcarriers[a]
                )));
            }
            ref_field[m][f_out] = r;
        }
    }

    Ok(FieldDataset {
        probe_fields,
        ref_field,
        components,
        ref_component: scenario.ref_component,
        frequencies_hz: sorted_frequencies,
        probe_positions: scenario.scan_grid.probe_positions(),
        normalized: false,
        background_subtracted: false,
    })
}
