//! On-disk state format: spectral coefficients as little-endian f64 pairs
//! (re, im) in row-major mode order, one `.bin` per field, with a JSON
//! sidecar describing the grid, reality flag, and instant. Trajectory
//! manifests list the snapshot times and file stems of a run.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::field::{Reality, SpectralField};
use crate::grid::Grid;
use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n: usize,
    pub length: f64,
    /// "real" or "complex"
    pub reality: String,
    pub t: f64,
    /// None for fields of the limit system.
    pub c: Option<f64>,
    /// Role of the field within its state, e.g. "psi_plus" or "a_x".
    pub label: String,
}

fn reality_tag(reality: Reality) -> &'static str {
    match reality {
        Reality::RealValued => "real",
        Reality::ComplexValued => "complex",
    }
}

fn reality_from_tag(tag: &str) -> Result<Reality> {
    match tag {
        "real" => Ok(Reality::RealValued),
        "complex" => Ok(Reality::ComplexValued),
        other => Err(CoreError::BadData(format!("unknown reality tag {other:?}"))),
    }
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_field(
    stem: &Path,
    field: &SpectralField,
    t: f64,
    c: Option<f64>,
    label: &str,
) -> Result<()> {
    let grid = field.grid();
    let meta = SnapshotMeta {
        n: grid.n(),
        length: grid.length(),
        reality: reality_tag(field.reality()).to_string(),
        t,
        c,
        label: label.to_string(),
    };
    let mut bytes = Vec::with_capacity(field.coeffs().len() * 16);
    for value in field.coeffs().iter() {
        bytes.extend_from_slice(&value.re.to_le_bytes());
        bytes.extend_from_slice(&value.im.to_le_bytes());
    }
    let mut bin = fs::File::create(stem.with_extension("bin"))?;
    bin.write_all(&bytes)?;
    let json = fs::File::create(stem.with_extension("json"))?;
    serde_json::to_writer_pretty(json, &meta)?;
    Ok(())
}

/// Reads a field written by [`save_field`].
pub fn load_field(stem: &Path) -> Result<(SpectralField, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_reader(fs::File::open(stem.with_extension("json"))?)?;
    let grid = Grid::new(meta.n, meta.length)?;
    let expected = meta.n * meta.n * meta.n * 16;
    let mut bytes = Vec::with_capacity(expected);
    fs::File::open(stem.with_extension("bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(CoreError::BadData(format!(
            "snapshot payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut coeffs = Array3::<Complex64>::zeros((meta.n, meta.n, meta.n));
    for (slot, chunk) in coeffs.iter_mut().zip(bytes.chunks_exact(16)) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().expect("8-byte chunk"));
        let im = f64::from_le_bytes(chunk[8..16].try_into().expect("8-byte chunk"));
        *slot = Complex64::new(re, im);
    }
    let field = SpectralField::from_coeffs(grid, reality_from_tag(&meta.reality)?, coeffs)?;
    Ok((field, meta))
}

/// One recorded instant: the common time plus the file stems (relative to the
/// manifest directory) of every field saved there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub t: f64,
    pub stems: Vec<String>,
}

/// Index of all snapshots of one trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub run_id: String,
    pub n: usize,
    pub length: f64,
    pub c: Option<f64>,
    pub entries: Vec<ManifestEntry>,
}

impl TrajectoryManifest {
    pub fn new(run_id: &str, grid: Grid, c: Option<f64>) -> Self {
        TrajectoryManifest {
            run_id: run_id.to_string(),
            n: grid.n(),
            length: grid.length(),
            c,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, stems: Vec<String>) {
        self.entries.push(ManifestEntry { t, stems });
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(fs::File::open(path)?)?)
    }
}

/// Where and how often a run persists state snapshots.
#[derive(Debug, Clone)]
pub struct SnapshotPolicy {
    pub directory: PathBuf,
    /// Write every `every` cadence samples (1 = every sample).
    pub every: usize,
}
