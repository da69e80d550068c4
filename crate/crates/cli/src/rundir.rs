//! Run-directory layout: a JSON manifest plus one CSV per stored slice.
//!
//! The manifest embeds the original config text, so any run can be repeated
//! exactly. Floating-point values are written with Rust's shortest
//! round-trip formatting: reloading a run reproduces the numbers bit for bit,
//! which is what makes the determinism checks on reruns meaningful.

use std::fs;
use std::path::Path;

use nlw_core::error::{Error, Result};
use nlw_core::exponents::Exponents;
use nlw_core::grid::{Grid1D, SpatialField};
use nlw_core::solver::WaveState;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    /// verbatim config text; rerunning it reproduces this directory
    pub config_toml: String,
    pub base: Exponents,
    /// time anchoring the surface-distance step rule
    pub t_base: f64,
    pub f_samples: Option<Vec<f64>>,
    pub psi_samples: Option<Vec<f64>>,
    pub g0_samples: Option<Vec<f64>>,
    pub g1_samples: Option<Vec<f64>>,
    /// sup of φ at the turnaround slice (scattering runs)
    pub far_sup: Option<f64>,
    /// time of the last slice before the blow-up cap (stability runs)
    pub stop_time: Option<f64>,
    pub times: Vec<f64>,
    pub slices: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidParameter(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("parse {}: {e}", path.display())))
}

fn slice_name(i: usize) -> String {
    format!("slice_{i:05}.csv")
}

fn write_slice(path: &Path, state: &WaveState) -> Result<()> {
    let g = state.phi.grid;
    let mut out = String::new();
    out.push_str(&format!("# time = {}\n", state.time));
    out.push_str("y,phi,phi_t\n");
    for j in 0..g.n {
        out.push_str(&format!(
            "{},{},{}\n",
            g.point(j),
            state.phi.values[j],
            state.phi_t.values[j]
        ));
    }
    fs::write(path, out).map_err(Error::from)
}

fn read_slice(path: &Path, grid: Grid1D) -> Result<WaveState> {
    let text = fs::read_to_string(path)?;
    let mut time = None;
    let mut phi = Vec::with_capacity(grid.n);
    let mut phi_t = Vec::with_capacity(grid.n);
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# time = ") {
            time = Some(rest.trim().parse::<f64>().map_err(|e| {
                Error::InvalidParameter(format!("bad time in {}: {e}", path.display()))
            })?);
            continue;
        }
        if line.starts_with('#') || line.starts_with('y') || line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let _y = cols.next();
        let p: f64 = cols
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("bad row in {}", path.display())))?;
        let pt: f64 = cols
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidParameter(format!("bad row in {}", path.display())))?;
        phi.push(p);
        phi_t.push(pt);
    }
    if phi.len() != grid.n {
        return Err(Error::InvalidParameter(format!(
            "{} holds {} rows, expected {}",
            path.display(),
            phi.len(),
            grid.n
        )));
    }
    let time =
        time.ok_or_else(|| Error::InvalidParameter(format!("{} lacks a time header", path.display())))?;
    Ok(WaveState {
        time,
        phi: SpatialField { grid, values: phi },
        phi_t: SpatialField { grid, values: phi_t },
    })
}

/// Write a full run directory: manifest plus slice CSVs. The slice list and
/// times in the manifest are filled in here.
pub fn write_run(dir: &Path, manifest: &mut Manifest, states: &[WaveState]) -> Result<()> {
    fs::create_dir_all(dir)?;
    manifest.times = states.iter().map(|s| s.time).collect();
    manifest.slices = (0..states.len()).map(slice_name).collect();
    for (name, state) in manifest.slices.iter().zip(states) {
        write_slice(&dir.join(name), state)?;
    }
    write_json(&dir.join("manifest.json"), manifest)
}

pub fn load_run(dir: &Path) -> Result<(Manifest, Vec<WaveState>)> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let grid = manifest.config.grid()?;
    let states = manifest
        .slices
        .iter()
        .map(|name| read_slice(&dir.join(name), grid))
        .collect::<Result<Vec<_>>>()?;
    if states.is_empty() {
        return Err(Error::InvalidParameter(format!("{} holds no slices", dir.display())));
    }
    Ok((manifest, states))
}

/// Write a two-column-or-more TSV with a `#`-prefixed header line.
pub fn write_tsv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# {header}\n"));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    fs::write(path, out).map_err(Error::from)
}
