//! Output files. Every file is written to a temporary sibling and renamed
//! into place, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hamflow_core::toruscan::ScanLevel;
use serde::Serialize;
use tempfile::NamedTempFile;

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Top-level layout of `report.json`. Contains no timestamps or host data,
/// so identical inputs give byte-identical reports.
#[derive(Debug, Serialize)]
pub struct Report<R: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub family: serde_json::Value,
    pub numerics: serde_json::Value,
    pub result: R,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
}

/// One pass/fail comparison against an expected value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
}

impl Check {
    pub fn near(name: &str, value: f64, expected: f64, tol: f64) -> Self {
        Check { name: name.into(), passed: (value - expected).abs() <= tol, value, expected, tol }
    }

    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), passed: value <= bound, value, expected: 0.0, tol: bound }
    }
}

pub fn write_report<R: Serialize>(dir: &Path, report: &Report<R>) -> std::io::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    let path = dir.join("report.json");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

/// `gap_profile.dat`: whitespace-separated `s gap` rows.
pub fn write_gap_profile(dir: &Path, samples: &[(f64, f64)]) -> std::io::Result<PathBuf> {
    let mut text = String::from("# s gap\n");
    for (s, g) in samples {
        text.push_str(&format!("{s:.12e} {g:.12e}\n"));
    }
    let path = dir.join("gap_profile.dat");
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// `degeneracy.csv`: one row per flagged cell; multi-index columns are `;`-joined.
pub fn write_degeneracy_csv(dir: &Path, levels: &[ScanLevel]) -> std::io::Result<PathBuf> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["resolution", "indices", "angles", "kernel_dim", "gap"])?;
    for level in levels {
        for c in &level.cells {
            let angles: Vec<String> = c.angles.iter().map(|a| format!("{a:.12}")).collect();
            w.write_record([
                c.resolution.to_string(),
                join(&c.indices),
                angles.join(";"),
                c.kernel_dim.to_string(),
                format!("{:.12e}", c.gap),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    let path = dir.join("degeneracy.csv");
    write_atomic(&path, &bytes)?;
    Ok(path)
}
