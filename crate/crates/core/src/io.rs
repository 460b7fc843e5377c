//! Binary containers and image exports.
//!
//! All containers are little-endian with a 4-byte ASCII magic: "NFD1" for
//! field datasets, "PWS1" for plane-wave spectra, "IMG1" for image volumes.
//! MIP maps export as 16-bit PGM plus CSV, with the dB scaling documented in
//! a JSON sidecar. I/Q records dump as interleaved 32-bit-float I/Q.

use crate::error::{CoreError, Result};
use crate::forward::{FieldDataset, Scenario};
use crate::imaging::{ImageVolume, MipMap, VoxelGeometry};
use crate::linalg::{CVec3, Component, Vec3};
use crate::ofdm::IqRecord;
use crate::pws::{PlaneWaveSpectrum, RegionRole, SourceRegion};
use crate::specfun::QuadratureGrid;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// little-endian primitives

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn new(inner: W) -> Self {
        Writer { inner }
    }
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn c64(&mut self, v: Complex64) -> Result<()> {
        self.f64(v.re)?;
        self.f64(v.im)
    }
    fn vec3(&mut self, v: Vec3) -> Result<()> {
        for i in 0..3 {
            self.f64(v[i])?;
        }
        Ok(())
    }
    fn cvec3(&mut self, v: &CVec3) -> Result<()> {
        for c in &v.0 {
            self.c64(*c)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn new(inner: R) -> Self {
        Reader { inner }
    }
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| CoreError::Container("unexpected end of file".into()))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn cvec3(&mut self) -> Result<CVec3> {
        Ok(CVec3([self.c64()?, self.c64()?, self.c64()?]))
    }
    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.bytes(4)?;
        if got != expected {
            return Err(CoreError::Container(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }
    fn count(&mut self, what: &str, limit: usize) -> Result<usize> {
        let v = self.u32()? as usize;
        if v == 0 || v > limit {
            return Err(CoreError::Container(format!(
                "implausible {what} count {v}"
            )));
        }
        Ok(v)
    }
}

fn component_code(c: Component) -> u8 {
    c.index() as u8
}

fn component_from_code(code: u8) -> Result<Component> {
    match code {
        0 => Ok(Component::X),
        1 => Ok(Component::Y),
        2 => Ok(Component::Z),
        _ => Err(CoreError::Container(format!(
            "unknown component code {code}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// NFD1: field dataset

/// Sidecar echo written alongside an NFD1 container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub normalized: bool,
    pub background_subtracted: bool,
    pub ref_component: Component,
    pub n_probes: usize,
    pub n_frequencies: usize,
    pub scenario: Option<Scenario>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Writes a FieldDataset container plus its JSON sidecar (`<path>.json`).
pub fn write_field_dataset(
    path: &Path,
    dataset: &FieldDataset,
    scenario: Option<&Scenario>,
) -> Result<()> {
    dataset.validate()?;
    let mut w = Writer::new(BufWriter::new(File::create(path)?));
    w.bytes(b"NFD1")?;
    w.u32(dataset.n_probes() as u32)?;
    w.u32(dataset.n_frequencies() as u32)?;
    w.u32(dataset.n_components() as u32)?;
    let flags = dataset.normalized as u8 | (dataset.background_subtracted as u8) << 1;
    w.u8(flags)?;
    w.u8(component_code(dataset.ref_component))?;
    for &c in &dataset.components {
        w.u8(component_code(c))?;
    }
    for &f in &dataset.frequencies_hz {
        w.f64(f)?;
    }
    for &p in &dataset.probe_positions {
        w.vec3(p)?;
    }
    for per_freq in &dataset.probe_fields {
        for per_comp in per_freq {
            for &v in per_comp {
                w.c64(v)?;
            }
        }
    }
    for per_freq in &dataset.ref_field {
        for &v in per_freq {
            w.c64(v)?;
        }
    }
    drop(w);

    let sidecar = DatasetSidecar {
        normalized: dataset.normalized,
        background_subtracted: dataset.background_subtracted,
        ref_component: dataset.ref_component,
        n_probes: dataset.n_probes(),
        n_frequencies: dataset.n_frequencies(),
        scenario: scenario.cloned(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CoreError::Container(format!("sidecar serialization: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_field_dataset(path: &Path) -> Result<(FieldDataset, Option<DatasetSidecar>)> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.magic(b"NFD1")?;
    let n_probes = r.count("probe", 100_000_000)?;
    let n_freqs = r.count("frequency", 1_000_000)?;
    let n_comps = r.count("component", 3)?;
    let flags = r.u8()?;
    let ref_component = component_from_code(r.u8()?)?;
    let mut components = Vec::with_capacity(n_comps);
    for _ in 0..n_comps {
        components.push(component_from_code(r.u8()?)?);
    }
    let mut frequencies_hz = Vec::with_capacity(n_freqs);
    for _ in 0..n_freqs {
        frequencies_hz.push(r.f64()?);
    }
    let mut probe_positions = Vec::with_capacity(n_probes);
    for _ in 0..n_probes {
        probe_positions.push(r.vec3()?);
    }
    let mut probe_fields = vec![vec![vec![Complex64::default(); n_comps]; n_freqs]; n_probes];
    for m in 0..n_probes {
        for f in 0..n_freqs {
            for c in 0..n_comps {
                probe_fields[m][f][c] = r.c64()?;
            }
        }
    }
    let mut ref_field = vec![vec![Complex64::default(); n_freqs]; n_probes];
    for m in 0..n_probes {
        for f in 0..n_freqs {
            ref_field[m][f] = r.c64()?;
        }
    }
    let dataset = FieldDataset {
        probe_fields,
        ref_field,
        components,
        ref_component,
        frequencies_hz,
        probe_positions,
        normalized: flags & 1 != 0,
        background_subtracted: flags & 2 != 0,
    };
    dataset.validate()?;

    let sidecar = match std::fs::read_to_string(sidecar_path(path)) {
        Ok(text) => Some(
            serde_json::from_str(&text)
                .map_err(|e| CoreError::Container(format!("sidecar parse: {e}")))?,
        ),
        Err(_) => None,
    };
    Ok((dataset, sidecar))
}

// ---------------------------------------------------------------------------
// PWS1: plane-wave spectrum

pub fn write_spectrum(path: &Path, spectrum: &PlaneWaveSpectrum) -> Result<()> {
    spectrum.validate()?;
    let region = &spectrum.region;
    let mut w = Writer::new(BufWriter::new(File::create(path)?));
    w.bytes(b"PWS1")?;
    w.vec3(region.center)?;
    w.f64(region.radius)?;
    w.u8(match region.role {
        RegionRole::Incident => 0,
        RegionRole::Scattered => 1,
    })?;
    w.u32(region.order as u32)?;
    w.u32(region.grid.band_limit as u32)?;
    w.f64(spectrum.frequency_hz)?;
    w.u32(region.grid.directions.len() as u32)?;
    for (dir, &weight) in region.grid.directions.iter().zip(&region.grid.weights) {
        w.vec3(*dir)?;
        w.f64(weight)?;
    }
    for s in &spectrum.samples {
        w.cvec3(s)?;
    }
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<PlaneWaveSpectrum> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.magic(b"PWS1")?;
    let center = r.vec3()?;
    let radius = r.f64()?;
    let role = match r.u8()? {
        0 => RegionRole::Incident,
        1 => RegionRole::Scattered,
        x => return Err(CoreError::Container(format!("unknown region role {x}"))),
    };
    let order = r.u32()? as usize;
    let band_limit = r.u32()? as usize;
    let frequency_hz = r.f64()?;
    let n_dirs = r.count("direction", 100_000_000)?;
    let mut directions = Vec::with_capacity(n_dirs);
    let mut weights = Vec::with_capacity(n_dirs);
    for _ in 0..n_dirs {
        directions.push(r.vec3()?);
        weights.push(r.f64()?);
    }
    let grid = QuadratureGrid {
        directions,
        weights,
        band_limit,
    };
    grid.validate()?;
    let mut samples = Vec::with_capacity(n_dirs);
    for _ in 0..n_dirs {
        samples.push(r.cvec3()?);
    }
    let spectrum = PlaneWaveSpectrum {
        region: SourceRegion {
            center,
            radius,
            role,
            order,
            grid: Arc::new(grid),
        },
        frequency_hz,
        samples,
    };
    spectrum.validate()?;
    Ok(spectrum)
}

// ---------------------------------------------------------------------------
// IMG1: image volume

pub fn write_image_volume(path: &Path, volume: &ImageVolume) -> Result<()> {
    volume.geometry.validate()?;
    if volume.values.len() != volume.geometry.n_voxels() {
        return Err(CoreError::Contract(
            "image value count does not match geometry".into(),
        ));
    }
    let mut w = Writer::new(BufWriter::new(File::create(path)?));
    w.bytes(b"IMG1")?;
    w.vec3(volume.geometry.origin)?;
    for a in &volume.geometry.axes {
        w.vec3(*a)?;
    }
    for &c in &volume.geometry.counts {
        w.u64(c as u64)?;
    }
    for &s in &volume.geometry.spacing {
        w.f64(s)?;
    }
    match volume.frequency_hz {
        Some(f) => {
            w.u8(1)?;
            w.f64(f)?;
        }
        None => {
            w.u8(0)?;
            w.f64(0.0)?;
        }
    }
    for v in &volume.values {
        w.cvec3(v)?;
    }
    Ok(())
}

pub fn read_image_volume(path: &Path) -> Result<ImageVolume> {
    let mut r = Reader::new(BufReader::new(File::open(path)?));
    r.magic(b"IMG1")?;
    let origin = r.vec3()?;
    let axes = [r.vec3()?, r.vec3()?, r.vec3()?];
    let mut counts = [0usize; 3];
    for c in counts.iter_mut() {
        let v = r.u64()?;
        if v == 0 || v > 1_000_000_000 {
            return Err(CoreError::Container(format!("implausible voxel count {v}")));
        }
        *c = v as usize;
    }
    let mut spacing = [0.0f64; 3];
    for s in spacing.iter_mut() {
        *s = r.f64()?;
    }
    let has_freq = r.u8()?;
    let f = r.f64()?;
    let frequency_hz = if has_freq != 0 { Some(f) } else { None };
    let geometry = VoxelGeometry {
        origin,
        axes,
        counts,
        spacing,
    };
    geometry.validate()?;
    let n = geometry.n_voxels();
    if n > 500_000_000 {
        return Err(CoreError::Container(format!("implausible volume size {n}")));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(r.cvec3()?);
    }
    Ok(ImageVolume {
        geometry,
        values,
        frequency_hz,
    })
}

// ---------------------------------------------------------------------------
// MIP exports

/// dB scaling metadata written alongside a PGM export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgmSidecar {
    /// Peak linear magnitude mapped to 0 dB (pixel value 65535).
    pub peak_linear: f64,
    /// dB value mapped to pixel 0; values at or below it clip.
    pub floor_db: f64,
    pub width: usize,
    pub height: usize,
    pub axis_u: usize,
    pub axis_v: usize,
}

/// Writes a MIP map as 16-bit binary PGM with `floor_db..0 dB` mapped onto
/// `0..65535`, plus a JSON sidecar documenting the scaling.
pub fn write_mip_pgm(path: &Path, mip: &MipMap, floor_db: f64) -> Result<()> {
    if !(floor_db < 0.0) {
        return Err(CoreError::Config("PGM floor must be below 0 dB".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", mip.n_u, mip.n_v)?;
    for iv in 0..mip.n_v {
        for iu in 0..mip.n_u {
            let db = mip.value_db(iu, iv).max(floor_db).min(0.0);
            let t = (db - floor_db) / (-floor_db);
            let pixel = (t * 65535.0).round() as u16;
            // PGM stores 16-bit samples most-significant byte first
            out.write_all(&pixel.to_be_bytes())?;
        }
    }
    drop(out);
    let sidecar = PgmSidecar {
        peak_linear: mip.peak,
        floor_db,
        width: mip.n_u,
        height: mip.n_v,
        axis_u: mip.axis_u,
        axis_v: mip.axis_v,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CoreError::Container(format!("sidecar serialization: {e}")))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Writes a MIP map as CSV of dB values, one row per v index, u across.
pub fn write_mip_csv(path: &Path, mip: &MipMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for iv in 0..mip.n_v {
        for iu in 0..mip.n_u {
            if iu > 0 {
                write!(out, ",")?;
            }
            let db = mip.value_db(iu, iv);
            if db.is_finite() {
                write!(out, "{db:.6}")?;
            } else {
                write!(out, "-inf")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// I/Q dump

/// Interleaved 32-bit-float I/Q, SDR convention (I first).
pub fn write_iq_f32(path: &Path, record: &IqRecord) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for s in &record.samples {
        out.write_all(&(s.re as f32).to_le_bytes())?;
        out.write_all(&(s.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_iq_f32(path: &Path, sample_rate_hz: f64) -> Result<Vec<Complex64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(CoreError::Container(
            "I/Q dump length is not a whole number of sample pairs".into(),
        ));
    }
    let _ = sample_rate_hz;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            )
        })
        .collect())
}
