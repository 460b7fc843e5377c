//! `compare`: quantitative reports contrasting two image volumes.

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use refimg_core::io::read_image_volume;
use refimg_core::metrics::{peak_location, peak_position, peak_to_artifact_db, phase_flatness};
use refimg_core::{Vec3, C0};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMetric {
    PeakToArtifactDb,
    PeakLocation,
    PhaseFlatness,
}

impl std::str::FromStr for CompareMetric {
    type Err = CliError;
    fn from_str(s: &str) -> Result<CompareMetric> {
        match s {
            "peak-to-artifact-db" => Ok(CompareMetric::PeakToArtifactDb),
            "peak-location" => Ok(CompareMetric::PeakLocation),
            "phase-flatness" => Ok(CompareMetric::PhaseFlatness),
            other => Err(CliError::Config(format!(
                "unknown metric {other:?}; expected peak-to-artifact-db, peak-location, or phase-flatness"
            ))),
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum Report {
    PeakToArtifact {
        a_db: f64,
        b_db: f64,
        difference_db: f64,
        guard_radius_m: f64,
    },
    PeakLocation {
        a_voxel: (usize, usize, usize),
        b_voxel: (usize, usize, usize),
        a_position_m: [f64; 3],
        b_position_m: [f64; 3],
        offset_m: f64,
    },
    PhaseFlatness {
        voxel: (usize, usize, usize),
        n_frequencies: usize,
        circular_std_rad: f64,
    },
}

fn xyz(v: Vec3) -> [f64; 3] {
    v.0
}

/// Compares volumes `a` and `b` under `metric` and prints a JSON report.
/// `phase-flatness` evaluates the corrected per-frequency volumes found in
/// `out_dir` at the global-peak voxel of `a`.
pub fn compare(
    cfg: &PipelineConfig,
    out_dir: &Path,
    a_path: &Path,
    b_path: &Path,
    metric: CompareMetric,
) -> Result<()> {
    let read = |p: &Path| {
        read_image_volume(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    };
    let a = read(a_path)?;
    let b = read(b_path)?;
    let err = |e: refimg_core::CoreError| CliError::Stage {
        stage: "compare",
        message: e.to_string(),
    };

    let report = match metric {
        CompareMetric::PeakToArtifactDb => {
            if a.geometry.counts != b.geometry.counts {
                return Err(CliError::Config("volumes have different voxel lattices".into()));
            }
            let truths: Vec<Vec3> = cfg
                .scenario(None)
                .scatterers
                .iter()
                .map(|s| s.position)
                .collect();
            // guard sphere of two wavelengths at the highest scene frequency
            let f_max = cfg
                .frequencies_hz()
                .into_iter()
                .fold(f64::NAN, f64::max);
            let guard = 2.0 * C0 / f_max;
            let a_db = peak_to_artifact_db(&a, &truths, guard).map_err(err)?;
            let b_db = peak_to_artifact_db(&b, &truths, guard).map_err(err)?;
            Report::PeakToArtifact {
                a_db,
                b_db,
                difference_db: a_db - b_db,
                guard_radius_m: guard,
            }
        }
        CompareMetric::PeakLocation => {
            let a_voxel = peak_location(&a).map_err(err)?;
            let b_voxel = peak_location(&b).map_err(err)?;
            let a_pos = peak_position(&a).map_err(err)?;
            let b_pos = peak_position(&b).map_err(err)?;
            Report::PeakLocation {
                a_voxel,
                b_voxel,
                a_position_m: xyz(a_pos),
                b_position_m: xyz(b_pos),
                offset_m: (a_pos - b_pos).norm(),
            }
        }
        CompareMetric::PhaseFlatness => {
            let voxel = peak_location(&a).map_err(err)?;
            let paths = crate::stages::per_frequency_volumes(out_dir)?;
            let volumes: Result<Vec<_>> = paths
                .iter()
                .map(|p| read_image_volume(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))))
                .collect();
            let volumes = volumes?;
            let std = phase_flatness(&volumes, &cfg.corrections(), voxel).map_err(err)?;
            Report::PhaseFlatness {
                voxel,
                n_frequencies: volumes.len(),
                circular_std_rad: std,
            }
        }
    };

    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Stage {
        stage: "compare",
        message: e.to_string(),
    })?;
    println!("{json}");
    Ok(())
}
