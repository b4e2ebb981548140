use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{jsonl_bytes, pretty_json, read_bundles, write_bytes};
use crate::corpus::{load_dataset, make_split, DatasetFormat, LabelSpace, SplitSizes};
use crate::demo::{AbstractPool, BundleBuilder, DemoMode, PromptBundle, Setting, Split};
use crate::error::{Error, Result};
use crate::mock::MockModelSpec;
use crate::rng::PRNG_VERSION;
use crate::score_log::write_log;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub path: String,
    pub labels: LabelSpace,
    pub n_examples: usize,
}

/// Written next to the bundle files; later commands read label spaces here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub prng: String,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub demo_mode: DemoMode,
    pub abstract_pool: AbstractPool,
    pub test_n: usize,
    pub dev_n: usize,
    pub datasets: Vec<DatasetEntry>,
    pub files: Vec<String>,
}

impl BundleManifest {
    pub fn read(bundle_dir: &Path) -> Result<Self> {
        super::config::read_structured(&bundle_dir.join(MANIFEST_FILE))
    }

    pub fn label_space(&self, dataset: &str) -> Option<&LabelSpace> {
        self.datasets.iter().find(|d| d.name == dataset).map(|d| &d.labels)
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub files: Vec<PathBuf>,
    pub manifest: BundleManifest,
}

pub fn bundle_file_name(dataset: &str, setting: Setting, seed: u64) -> String {
    format!("{dataset}.{}.seed{seed}.jsonl", setting.kind())
}

/// Writes one bundle file per (dataset, setting, seed), each holding the dev
/// queries followed by the test queries.
pub fn cmd_build(cfg: &RunConfig) -> Result<BuildOutput> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(Error::Config("no datasets given".into()));
    }
    let dir = cfg.bundle_dir();
    let sizes = SplitSizes {
        test_n: cfg.test_n,
        dev_n: cfg.dev_n,
        k_max: cfg.k,
    };
    let mut names = BTreeSet::new();
    let mut entries = Vec::new();
    let mut files = Vec::new();
    for path in &cfg.datasets {
        let format = DatasetFormat::from_path(path)
            .ok_or_else(|| Error::Config(format!("{}: cannot tell dataset format from extension", path.display())))?;
        let ds = load_dataset(path, format)?;
        if !names.insert(ds.name.clone()) {
            return Err(Error::Config(format!("two datasets are named `{}`", ds.name)));
        }
        for &seed in &cfg.seeds {
            let split = make_split(&ds.name, &ds.examples, seed, sizes)?;
            let builder = BundleBuilder {
                dataset: &ds.name,
                label_space: &ds.label_space,
                train_pool: &split.train_pool,
                k: cfg.k,
                seed,
                mode: cfg.demo_mode,
            };
            for &kind in &cfg.settings {
                let setting = Setting::from_kind(kind, cfg.abstract_pool);
                let mut bundles = builder.build(&split.dev, Split::Dev, setting)?;
                bundles.extend(builder.build(&split.test, Split::Test, setting)?);
                let file = dir.join(bundle_file_name(&ds.name, setting, seed));
                write_bytes(&file, &jsonl_bytes(&bundles)?)?;
                files.push(file);
            }
        }
        entries.push(DatasetEntry {
            name: ds.name.clone(),
            path: path.display().to_string(),
            n_examples: ds.examples.len(),
            labels: ds.label_space,
        });
    }
    let manifest = BundleManifest {
        prng: PRNG_VERSION.to_string(),
        k: cfg.k,
        seeds: cfg.seeds.clone(),
        demo_mode: cfg.demo_mode,
        abstract_pool: cfg.abstract_pool,
        test_n: cfg.test_n,
        dev_n: cfg.dev_n,
        datasets: entries,
        files: files
            .iter()
            .filter_map(|f| f.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .collect(),
    };
    write_bytes(&dir.join(MANIFEST_FILE), &pretty_json(&manifest)?)?;
    Ok(BuildOutput { files, manifest })
}

/// Scores bundle files with each mock model, writing `logs/<model>.jsonl`.
pub fn cmd_mock_score(bundle_files: &[PathBuf], specs: &[MockModelSpec], log_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut bundles: Vec<PromptBundle> = Vec::new();
    let mut sorted = bundle_files.to_vec();
    sorted.sort();
    for f in &sorted {
        bundles.extend(read_bundles(f)?);
    }
    if bundles.is_empty() {
        return Err(Error::Coverage("no bundles to score".into()));
    }
    let mut out = Vec::new();
    for spec in specs {
        let records = spec.score(&bundles)?;
        let header = serde_json::json!({
            "backend": "mock",
            "model": spec.model,
            "scoring_mode": "synthetic",
            "prng": PRNG_VERSION,
        });
        let mut buf = Vec::new();
        write_log(&mut buf, Some(&header), &records)?;
        let path = log_dir.join(format!("{}.jsonl", spec.model));
        write_bytes(&path, &buf)?;
        out.push(path);
    }
    Ok(out)
}
