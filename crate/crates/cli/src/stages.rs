//! Pipeline stages. Each stage reads its inputs from the output directory,
//! writes its artifacts there, and records them in the manifest, so stages
//! can be re-run in isolation and chained by `full`.

use crate::config::{fusion_modes, PipelineConfig};
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use refimg_core::forward::{synthesize_measurement, ModulationModel, Scenario};
use refimg_core::imaging::{combine_frequencies, generate_image, mip_project, ImageVolume};
use refimg_core::io;
use refimg_core::linalg::Component;
use refimg_core::ofdm::dataset_from_chain;
use refimg_core::solver::{background_subtract, normalize_by_reference, solve_all_frequencies};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const SCENE_DATASET: &str = "dataset_scene.nfd";
pub const BACKGROUND_DATASET: &str = "dataset_background.nfd";

fn stage_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage {
        stage,
        message: e.to_string(),
    }
}

fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Config(format!("creating output directory {}: {e}", out_dir.display()))
    })
}

/// Background companion: same geometry and seed, no scatterers.
fn empty_scene(scenario: &Scenario) -> Scenario {
    Scenario {
        scatterers: vec![],
        ..scenario.clone()
    }
}

fn sorted_artifacts(out_dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(out_dir)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", out_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(suffix))
        })
        .collect();
    found.sort();
    Ok(found)
}

/// `simulate`: em-forward datasets (scene + empty background) with a random
/// per-position modulation realization.
pub fn simulate(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    ensure_out_dir(out_dir)?;
    let scenario = cfg.scenario(seed);
    let modulation = ModulationModel::random(
        scenario.n_probes(),
        scenario.n_frequencies(),
        cfg.modulation.magnitude_spread_db,
        scenario.rng_seed,
    );
    for (name, scene) in [(SCENE_DATASET, &scenario), (BACKGROUND_DATASET, &empty_scene(&scenario))] {
        let dataset = synthesize_measurement(scene, &modulation)
            .map_err(|e| CliError::from_core("simulate", e))?;
        io::write_field_dataset(&out_dir.join(name), &dataset, Some(scene))
            .map_err(stage_err("simulate"))?;
        manifest.record(out_dir, name)?;
        manifest.record(out_dir, &format!("{name}.json"))?;
    }
    println!(
        "simulate: {} probes x {} frequencies -> {SCENE_DATASET}, {BACKGROUND_DATASET}",
        scenario.n_probes(),
        scenario.n_frequencies()
    );
    Ok(())
}

/// `simulate-ofdm`: the same two datasets, but produced by the full OFDM
/// transmit/channel/receive chain per probe position.
pub fn simulate_ofdm(
    cfg: &PipelineConfig,
    manifest: &mut Manifest,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<()> {
    ensure_out_dir(out_dir)?;
    let (scenario, ofdm) = cfg.ofdm_scenario(seed)?;
    for (name, scene) in [(SCENE_DATASET, &scenario), (BACKGROUND_DATASET, &empty_scene(&scenario))] {
        let dataset = dataset_from_chain(scene, &ofdm).map_err(|e| CliError::from_core("simulate-ofdm", e))?;
        io::write_field_dataset(&out_dir.join(name), &dataset, Some(scene))
            .map_err(stage_err("simulate-ofdm"))?;
        manifest.record(out_dir, name)?;
        manifest.record(out_dir, &format!("{name}.json"))?;
    }
    println!(
        "simulate-ofdm: {} probes x {} subcarriers -> {SCENE_DATASET}, {BACKGROUND_DATASET}",
        scenario.n_probes(),
        scenario.n_frequencies()
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    frequency_ghz: f64,
    iterations: usize,
    final_relative_misfit: f64,
    converged: bool,
    stagnated: bool,
}

/// `invert`: normalize scene and background datasets, subtract, and solve the
/// per-frequency inverse source problems. Exports the first (target) region's
/// spectrum per frequency plus a JSON convergence report.
pub fn invert(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path) -> Result<()> {
    let norm = cfg.normalization();
    let read = |name: &str| {
        io::read_field_dataset(&out_dir.join(name))
            .map(|(d, _)| d)
            .map_err(|e| CliError::Config(format!("{name}: {e} (run simulate first?)")))
    };
    let scene = normalize_by_reference(&read(SCENE_DATASET)?, &norm)
        .map_err(|e| CliError::from_core("invert", e))?;
    let background = normalize_by_reference(&read(BACKGROUND_DATASET)?, &norm)
        .map_err(|e| CliError::from_core("invert", e))?;
    let observations =
        background_subtract(&scene, &background).map_err(|e| CliError::from_core("invert", e))?;

    let solves = solve_all_frequencies(
        &observations,
        &cfg.region_specs(),
        &cfg.solver(),
        cfg.solver.accuracy_digits,
    );

    let mut reports = Vec::new();
    for (f_idx, solve) in solves.into_iter().enumerate() {
        let (spectra, diag) = solve.outcome.map_err(|e| CliError::Stage {
            stage: "invert",
            message: format!("frequency {:.4} GHz: {e}", solve.frequency_hz / 1e9),
        })?;
        let name = format!("spectrum_{f_idx:04}.pws");
        io::write_spectrum(&out_dir.join(&name), &spectra[0]).map_err(stage_err("invert"))?;
        manifest.record(out_dir, &name)?;
        println!(
            "invert: {:.4} GHz misfit {:.3e} after {} iterations -> {name}",
            solve.frequency_hz / 1e9,
            diag.final_relative_misfit,
            diag.iterations
        );
        reports.push(SolveReport {
            frequency_ghz: solve.frequency_hz / 1e9,
            iterations: diag.iterations,
            final_relative_misfit: diag.final_relative_misfit,
            converged: diag.converged,
            stagnated: diag.stagnated,
        });
    }
    let json = serde_json::to_string_pretty(&reports).map_err(stage_err("invert"))?;
    std::fs::write(out_dir.join("diagnostics.json"), json).map_err(stage_err("invert"))?;
    manifest.record(out_dir, "diagnostics.json")?;
    Ok(())
}

/// `image`: one backprojected volume per exported spectrum.
pub fn image(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path) -> Result<()> {
    let spectra = sorted_artifacts(out_dir, "spectrum_", ".pws")?;
    if spectra.is_empty() {
        return Err(CliError::Stage {
            stage: "image",
            message: "no spectrum_*.pws files in the output directory (run invert first)".into(),
        });
    }
    let geometry = cfg.geometry();
    let window = cfg.window();
    for (f_idx, path) in spectra.iter().enumerate() {
        let spectrum = io::read_spectrum(path).map_err(stage_err("image"))?;
        let volume = generate_image(&spectrum, &geometry, &window)
            .map_err(|e| CliError::from_core("image", e))?;
        let name = format!("volume_{f_idx:04}.img");
        io::write_image_volume(&out_dir.join(&name), &volume).map_err(stage_err("image"))?;
        manifest.record(out_dir, &name)?;
    }
    println!("image: {} volumes over {} voxels", spectra.len(), geometry.n_voxels());
    Ok(())
}

/// Sorted per-frequency volume files produced by the `image` stage.
pub fn per_frequency_volumes(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = sorted_artifacts(out_dir, "volume_", ".img")?;
    if paths.is_empty() {
        return Err(CliError::Stage {
            stage: "fuse",
            message: "no volume_*.img files in the output directory (run image first)".into(),
        });
    }
    Ok(paths)
}

fn read_volumes(out_dir: &Path, stage: &'static str) -> Result<Vec<ImageVolume>> {
    let paths = per_frequency_volumes(out_dir)?;
    paths
        .iter()
        .map(|p| io::read_image_volume(p).map_err(stage_err(stage)))
        .collect()
}

/// `fuse`: multi-frequency combination with phase/magnitude corrections.
pub fn fuse(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path, mode: Option<&str>) -> Result<()> {
    let volumes = read_volumes(out_dir, "fuse")?;
    let model = cfg.corrections();
    for (fusion_mode, label) in fusion_modes(mode)? {
        let fused = combine_frequencies(&volumes, &model, fusion_mode)
            .map_err(|e| CliError::from_core("fuse", e))?;
        let name = format!("fused_{label}.img");
        io::write_image_volume(&out_dir.join(&name), &fused).map_err(stage_err("fuse"))?;
        manifest.record(out_dir, &name)?;
        println!("fuse: {} volumes -> {name}", volumes.len());
    }
    Ok(())
}

/// `mip`: maximum-intensity projections of a fused volume, as 16-bit PGM
/// (with a JSON scaling sidecar) and CSV of dB values.
pub fn mip(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path, input: Option<&Path>) -> Result<()> {
    let default = out_dir.join("fused_coherent.img");
    let path = input.unwrap_or(&default);
    let volume = io::read_image_volume(path).map_err(|e| CliError::Stage {
        stage: "mip",
        message: format!("{}: {e} (run fuse first?)", path.display()),
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume");
    for &axis in &cfg.mip.axes {
        let component: Component = axis.into();
        let map = mip_project(&volume, component);
        let label = ["x", "y", "z"][component.index()];
        let pgm = format!("mip_{stem}_{label}.pgm");
        io::write_mip_pgm(&out_dir.join(&pgm), &map, cfg.mip.floor_db).map_err(stage_err("mip"))?;
        manifest.record(out_dir, &pgm)?;
        manifest.record(out_dir, &format!("{pgm}.json"))?;
        let csv = format!("mip_{stem}_{label}.csv");
        io::write_mip_csv(&out_dir.join(&csv), &map).map_err(stage_err("mip"))?;
        manifest.record(out_dir, &csv)?;
        println!("mip: axis {label} -> {pgm}, {csv}");
    }
    Ok(())
}

/// `full`: the whole pipeline in order, both fusion modes, MIPs of the
/// coherent result.
pub fn full(cfg: &PipelineConfig, manifest: &mut Manifest, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    simulate(cfg, manifest, out_dir, seed)?;
    invert(cfg, manifest, out_dir)?;
    image(cfg, manifest, out_dir)?;
    fuse(cfg, manifest, out_dir, None)?;
    mip(cfg, manifest, out_dir, None)?;
    Ok(())
}
