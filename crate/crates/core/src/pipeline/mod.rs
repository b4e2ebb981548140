//! Commands behind the CLI: build bundles, mock-score them, compute metrics,
//! fuse checkpoints, and render a report. Every command is deterministic
//! given its config; all randomness flows from the configured seeds.

mod analyze;
mod build;
mod config;
mod fuse;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use analyze::{cmd_metrics, MetricRow, MetricsOutput};
pub use build::{cmd_build, cmd_mock_score, BuildOutput, BundleManifest, DatasetEntry, MANIFEST_FILE};
pub use config::{CheckpointFilter, FusionOptions, MockSuite, RunConfig};
pub use fuse::{cmd_fuse, FuseOutput, FusionRow};
pub use report::{check_summary_closure, cmd_report};

use crate::demo::PromptBundle;
use crate::error::{Error, Result};
use crate::score_log::{read_log, ProbRecord};

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub(crate) fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_bundles(path: &Path) -> Result<Vec<PromptBundle>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads every log, concatenating records in path order.
pub fn read_logs(paths: &[PathBuf]) -> Result<Vec<ProbRecord>> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(read_log(p)?.records);
    }
    Ok(records)
}

/// Shortest round-trip decimal form, used for every float in CSV output.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
