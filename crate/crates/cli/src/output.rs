//! Reports and atomic file output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use conjflow::conjugate::QualityMetrics;

use crate::run::{Check, Outcome, Table};
use crate::scenario::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: Tool = Tool {
    name: "conjflow",
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub schema_version: u32,
    pub tool: Tool,
    pub scenario: &'a Scenario,
    pub result: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<&'a QualityMetrics>,
    pub checks: &'a [Check],
    pub passed: bool,
    /// The only field that varies between identical runs.
    pub wall_time_seconds: f64,
}

impl<'a> Report<'a> {
    pub fn new(scenario: &'a Scenario, outcome: &'a Outcome, wall_time_seconds: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL,
            scenario,
            result: &outcome.result,
            quality: outcome.quality.as_ref(),
            checks: &outcome.checks,
            passed: outcome.checks.iter().all(|c| c.passed),
            wall_time_seconds,
        }
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let file = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.{}.tmp", file.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn write_report(dir: &Path, stem: &str, report: &Report) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(report).map_err(io::Error::other)?;
    bytes.push(b'\n');
    let path = dir.join(format!("{stem}.json"));
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn write_tables(dir: &Path, stem: &str, tables: &[Table]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    tables
        .iter()
        .map(|t| {
            let path = dir.join(format!("{stem}.{}.csv", t.suffix));
            write_atomic(&path, &t.to_csv().map_err(io::Error::other)?)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
