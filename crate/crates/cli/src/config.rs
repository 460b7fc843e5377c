//! TOML pipeline configuration. Keys carry explicit units in their names
//! (`..._ghz`, `..._m`, `..._rad`) so a value can never be misread; the raw
//! config text is echoed verbatim into the run manifest.

use crate::error::{CliError, Result};
use refimg_core::forward::{ScanGrid, Scatterer, Scenario};
use refimg_core::imaging::{CorrectionModel, FusionMode, SpectralWindow, VoxelGeometry};
use refimg_core::linalg::Component;
use refimg_core::ofdm::{Constellation, OfdmConfig};
use refimg_core::solver::{NormalizationConfig, RegionSpec, SolverConfig};
use refimg_core::Vec3;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub modulation: ModulationConfig,
    #[serde(default)]
    pub normalization: NormalizationSection,
    pub regions: Vec<RegionConfig>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub window: WindowConfig,
    pub imaging: ImagingConfig,
    #[serde(default)]
    pub corrections: CorrectionsConfig,
    #[serde(default)]
    pub mip: MipConfig,
    pub ofdm: Option<OfdmSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Explicit frequency list; mutually exclusive with `sweep`.
    pub frequencies_ghz: Option<Vec<f64>>,
    pub sweep: Option<SweepConfig>,
    pub tx_position_m: [f64; 3],
    pub tx_polarization: [f64; 3],
    pub ref_position_m: [f64; 3],
    pub ref_component: ComponentConfig,
    pub scatterers: Vec<ScattererConfig>,
    pub scan: ScanConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub start_ghz: f64,
    pub stop_ghz: f64,
    pub step_mhz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererConfig {
    pub position_m: [f64; 3],
    pub reflectivity_re: f64,
    #[serde(default)]
    pub reflectivity_im: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub origin_m: [f64; 3],
    pub u_axis: [f64; 3],
    pub v_axis: [f64; 3],
    pub n_u: usize,
    pub n_v: usize,
    pub du_m: f64,
    pub dv_m: f64,
    pub probe_components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ComponentConfig {
    X,
    Y,
    Z,
}

impl From<ComponentConfig> for Component {
    fn from(c: ComponentConfig) -> Component {
        match c {
            ComponentConfig::X => Component::X,
            ComponentConfig::Y => Component::Y,
            ComponentConfig::Z => Component::Z,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationConfig {
    pub magnitude_spread_db: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        ModulationConfig {
            magnitude_spread_db: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationSection {
    pub min_ref_magnitude: f64,
}

impl Default for NormalizationSection {
    fn default() -> Self {
        NormalizationSection {
            min_ref_magnitude: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub center_m: [f64; 3],
    pub radius_m: f64,
    #[serde(default)]
    pub incident: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub relative_residual_target: f64,
    pub accuracy_digits: u32,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            max_iterations: 200,
            relative_residual_target: 1e-4,
            accuracy_digits: 2,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub center_direction: [f64; 3],
    pub cutoff_angle_rad: f64,
    pub taper_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            center_direction: [0.0, 0.0, 1.0],
            cutoff_angle_rad: 0.7,
            taper_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    pub center_m: [f64; 3],
    pub half_extent_m: [f64; 3],
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionsConfig {
    pub enable_psi_s: bool,
    pub enable_psi_ref: bool,
    pub enable_m_s: bool,
}

impl Default for CorrectionsConfig {
    fn default() -> Self {
        CorrectionsConfig {
            enable_psi_s: true,
            enable_psi_ref: true,
            enable_m_s: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipConfig {
    pub axes: Vec<ComponentConfig>,
    pub floor_db: f64,
}

impl Default for MipConfig {
    fn default() -> Self {
        MipConfig {
            axes: vec![ComponentConfig::X, ComponentConfig::Y, ComponentConfig::Z],
            floor_db: -60.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSection {
    pub carrier_frequency_ghz: f64,
    pub sample_rate_mhz: f64,
    pub n_fft: usize,
    pub active_subcarriers: Vec<i32>,
    pub cyclic_prefix_len: usize,
    pub n_symbols: usize,
    #[serde(default)]
    pub sync_error_spread_db: f64,
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl PipelineConfig {
    /// Parses and cross-validates a config file; returns the config together
    /// with the verbatim file text for the manifest echo.
    pub fn load(path: &Path) -> Result<(PipelineConfig, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    fn validate(&self) -> Result<()> {
        match (&self.scenario.frequencies_ghz, &self.scenario.sweep) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either scenario.frequencies_ghz or scenario.sweep, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "one of scenario.frequencies_ghz or scenario.sweep is required".into(),
                ))
            }
            _ => {}
        }
        if self.regions.is_empty() {
            return Err(CliError::Config("at least one source region is required".into()));
        }
        if self.regions[0].incident {
            return Err(CliError::Config(
                "the first region must be a scattered (target) region; it is the one exported and imaged".into(),
            ));
        }
        if self.imaging.counts.iter().any(|&n| n == 0) {
            return Err(CliError::Config("imaging.counts must all be positive".into()));
        }
        Ok(())
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        if let Some(list) = &self.scenario.frequencies_ghz {
            return list.iter().map(|g| g * 1e9).collect();
        }
        let sweep = self.scenario.sweep.as_ref().expect("validated");
        let step = sweep.step_mhz * 1e6;
        let start = sweep.start_ghz * 1e9;
        let stop = sweep.stop_ghz * 1e9;
        let n = ((stop - start) / step).round() as usize + 1;
        (0..n).map(|i| start + step * i as f64).collect()
    }

    /// Scenario for the em-forward path (`simulate`), with `override_seed`
    /// taking precedence over the config seed.
    pub fn scenario(&self, override_seed: Option<u64>) -> Scenario {
        self.scenario_with_frequencies(self.frequencies_hz(), override_seed)
    }

    /// Scenario for the OFDM path: the frequency table is dictated by the
    /// carrier and subcarrier layout, not by the scenario sweep.
    pub fn ofdm_scenario(&self, override_seed: Option<u64>) -> Result<(Scenario, OfdmConfig)> {
        let ofdm = self.ofdm_config(override_seed)?;
        let mut frequencies = ofdm.subcarrier_frequencies_hz();
        frequencies.sort_by(f64::total_cmp);
        Ok((self.scenario_with_frequencies(frequencies, override_seed), ofdm))
    }

    fn scenario_with_frequencies(&self, frequencies_hz: Vec<f64>, override_seed: Option<u64>) -> Scenario {
        let s = &self.scenario;
        Scenario {
            tx_position: vec3(s.tx_position_m),
            tx_polarization: vec3(s.tx_polarization),
            ref_position: vec3(s.ref_position_m),
            ref_component: s.ref_component.into(),
            scatterers: s
                .scatterers
                .iter()
                .map(|sc| Scatterer {
                    position: vec3(sc.position_m),
                    reflectivity_re: sc.reflectivity_re,
                    reflectivity_im: sc.reflectivity_im,
                })
                .collect(),
            scan_grid: ScanGrid {
                origin: vec3(s.scan.origin_m),
                u_axis: vec3(s.scan.u_axis),
                v_axis: vec3(s.scan.v_axis),
                n_u: s.scan.n_u,
                n_v: s.scan.n_v,
                du: s.scan.du_m,
                dv: s.scan.dv_m,
                probe_components: s.scan.probe_components.iter().map(|&c| c.into()).collect(),
            },
            frequencies_hz,
            rng_seed: override_seed.unwrap_or(s.seed),
        }
    }

    pub fn ofdm_config(&self, override_seed: Option<u64>) -> Result<OfdmConfig> {
        let o = self
            .ofdm
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no [ofdm] section".into()))?;
        Ok(OfdmConfig {
            carrier_frequency_hz: o.carrier_frequency_ghz * 1e9,
            sample_rate_hz: o.sample_rate_mhz * 1e6,
            n_fft: o.n_fft,
            active_subcarriers: o.active_subcarriers.clone(),
            cyclic_prefix_len: o.cyclic_prefix_len,
            n_symbols: o.n_symbols,
            constellation: Constellation::Qpsk,
            rng_seed: override_seed.unwrap_or(self.scenario.seed),
            sync_error_spread_db: o.sync_error_spread_db,
        })
    }

    pub fn normalization(&self) -> NormalizationConfig {
        NormalizationConfig {
            component: self.scenario.ref_component.into(),
            min_ref_magnitude: self.normalization.min_ref_magnitude,
        }
    }

    pub fn region_specs(&self) -> Vec<RegionSpec> {
        self.regions
            .iter()
            .map(|r| RegionSpec {
                center: vec3(r.center_m),
                radius: r.radius_m,
                incident: r.incident,
            })
            .collect()
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.solver.max_iterations,
            relative_residual_target: self.solver.relative_residual_target,
            report_every: usize::MAX,
        }
    }

    pub fn window(&self) -> SpectralWindow {
        SpectralWindow {
            center_direction: vec3(self.window.center_direction),
            cutoff_angle: self.window.cutoff_angle_rad,
            taper_fraction: self.window.taper_fraction,
        }
    }

    pub fn geometry(&self) -> VoxelGeometry {
        VoxelGeometry::axis_aligned(
            vec3(self.imaging.center_m),
            self.imaging.half_extent_m,
            self.imaging.counts,
        )
    }

    pub fn corrections(&self) -> CorrectionModel {
        CorrectionModel {
            tx_position: vec3(self.scenario.tx_position_m),
            ref_position: vec3(self.scenario.ref_position_m),
            enable_psi_s: self.corrections.enable_psi_s,
            enable_psi_ref: self.corrections.enable_psi_ref,
            enable_m_s: self.corrections.enable_m_s,
        }
    }
}

/// Fusion modes requested on the command line; default is both.
pub fn fusion_modes(mode: Option<&str>) -> Result<Vec<(FusionMode, &'static str)>> {
    match mode {
        None => Ok(vec![
            (FusionMode::Coherent, "coherent"),
            (FusionMode::Incoherent, "incoherent"),
        ]),
        Some("coherent") => Ok(vec![(FusionMode::Coherent, "coherent")]),
        Some("incoherent") => Ok(vec![(FusionMode::Incoherent, "incoherent")]),
        Some(other) => Err(CliError::Config(format!(
            "unknown fusion mode {other:?}; expected coherent or incoherent"
        ))),
    }
}
