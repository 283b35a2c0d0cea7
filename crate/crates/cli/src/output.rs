//! Plot-ready outputs: profile and diagnostics CSV files with 17 significant
//! digits (lossless round-trips) and a JSON manifest carrying the effective
//! configuration and run metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tearsim_core::analysis::BoundReport;
use tearsim_core::integrate::{DiagRow, RunResult};
use tearsim_core::model::{ModelParams, SolutionState};

pub type IoResult<T> = Result<T, String>;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> IoResult<()> {
    fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> IoResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))
}

/// Profile CSV: one row per node with the capacity sampled alongside.
pub fn write_profile(path: &Path, state: &SolutionState, params: &ModelParams) -> IoResult<()> {
    let mut out = String::with_capacity(64 * state.len());
    out.push_str("x,h,s,sbar\n");
    for i in 0..state.len() {
        let sb = params.sbar.eval_unchecked(state.mesh[i], params.domain_length);
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(state.mesh[i]),
            fmt(state.h[i]),
            fmt(state.s[i]),
            fmt(sb)
        ));
    }
    write_file(path, &out)
}

/// Diagnostics time-series CSV.
pub fn write_series(path: &Path, series: &[DiagRow]) -> IoResult<()> {
    let mut out = String::with_capacity(128 * series.len());
    out.push_str("t,dt,Q,M,dM_dt,h_min,x_argmin,max_abs_sx,min_s,max_s,newton_iters\n");
    for r in series {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt(r.t),
            fmt(r.dt),
            fmt(r.q),
            fmt(r.mass),
            fmt(r.dm_dt),
            fmt(r.h_min),
            fmt(r.x_argmin),
            fmt(r.max_abs_sx),
            fmt(r.min_s),
            fmt(r.max_s),
            r.newton_iters
        ));
    }
    write_file(path, &out)
}

/// Branch CSV: one row per continuation point.
pub fn write_branch(
    path: &Path,
    points: &[(f64, f64, f64, f64)],
) -> IoResult<()> {
    let mut out = String::new();
    out.push_str("parameter,min_h_eq,argmin_x,max_s_eq\n");
    for (p, min_h, argmin, max_s) in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(*p),
            fmt(*min_h),
            fmt(*argmin),
            fmt(*max_s)
        ));
    }
    write_file(path, &out)
}

pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> IoResult<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| format!("serializing manifest: {e}"))?;
    write_file(path, &json)
}

/// Write the simulate-mode artifact set.
pub fn write_run_outputs(
    dir: &Path,
    run: &RunResult,
    params: &ModelParams,
) -> IoResult<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let series_path = dir.join("series.csv");
    write_series(&series_path, &run.series)?;
    written.push(series_path);
    for (i, snap) in run.snapshots.iter().enumerate() {
        let p = dir.join(format!("snapshot_{i:03}.csv"));
        write_profile(&p, snap, params)?;
        written.push(p);
    }
    Ok(written)
}

/// A profile CSV read back as tabulated data (the round-trip counterpart of
/// `write_profile`).
pub struct ProfileTable {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
}

pub fn read_profile(path: &Path) -> IoResult<ProfileTable> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format!("{}: empty file", path.display()))?;
    if header != "x,h,s,sbar" {
        return Err(format!("{}: unexpected header {header:?}", path.display()));
    }
    let mut table = ProfileTable { x: vec![], h: vec![], s: vec![] };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(format!("{}:{}: expected 4 fields", path.display(), lineno + 2));
        }
        let parse = |s: &str| -> IoResult<f64> {
            s.parse::<f64>()
                .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 2))
        };
        table.x.push(parse(fields[0])?);
        table.h.push(parse(fields[1])?);
        table.s.push(parse(fields[2])?);
    }
    Ok(table)
}

/// Columns of a diagnostics series CSV needed by the thinning fit.
pub struct SeriesColumns {
    pub t: Vec<f64>,
    pub h_min: Vec<f64>,
    pub x_argmin: Vec<f64>,
}

pub fn read_series(path: &Path) -> IoResult<SeriesColumns> {
    let text = fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format!("{}: empty file", path.display()))?;
    let names: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> IoResult<usize> {
        names
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| format!("{}: missing column {name}", path.display()))
    };
    let (ct, ch, cx) = (col("t")?, col("h_min")?, col("x_argmin")?);
    let mut out = SeriesColumns { t: vec![], h_min: vec![], x_argmin: vec![] };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> IoResult<f64> {
            fields
                .get(i)
                .ok_or_else(|| format!("{}:{}: short row", path.display(), lineno + 2))?
                .parse::<f64>()
                .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 2))
        };
        out.t.push(parse(ct)?);
        out.h_min.push(parse(ch)?);
        out.x_argmin.push(parse(cx)?);
    }
    Ok(out)
}

/// Shared manifest fields.
#[derive(Serialize)]
pub struct ManifestCommon<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: String,
    pub effective_config: &'a C,
    pub wall_time_secs: f64,
}

#[derive(Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    #[serde(flatten)]
    pub common: ManifestCommon<'a, C>,
    pub event: &'a tearsim_core::integrate::Event,
    pub warnings: &'a [String],
    pub bound_report: &'a BoundReport,
    pub remesh_count: usize,
    pub remesh_total_q_drift: f64,
    pub fit: Option<&'a tearsim_core::analysis::ThinningFit>,
    pub files: Vec<String>,
}

pub const TOOL_NAME: &str = "tearsim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
