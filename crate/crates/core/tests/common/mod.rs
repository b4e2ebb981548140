#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use duality_core::corpus::{LabelSpace, LabeledExample};
use duality_core::demo::{BundleBuilder, DemoMode, Setting, SettingKind, Split};
use duality_core::mock::{Burst, CurveSpec, MockModelSpec, SettingBehavior};
use duality_core::pipeline::{self, BundleManifest, DatasetEntry, RunConfig, MANIFEST_FILE};
use duality_core::rng::PRNG_VERSION;
use duality_core::AbstractPool;

/// Writes a JSONL dataset whose labels cycle through `labels`.
pub fn write_dataset(dir: &Path, name: &str, n: usize, labels: &[&str]) -> PathBuf {
    let mut text = String::new();
    for i in 0..n {
        let row = serde_json::json!({
            "id": format!("{name}-{i}"),
            "input": format!("sample {i} about topic {}", i % 7),
            "label": labels[i % labels.len()],
        });
        text.push_str(&row.to_string());
        text.push('\n');
    }
    let path = dir.join(format!("{name}.jsonl"));
    fs::write(&path, text).unwrap();
    path
}

pub fn curve(base: f64, slope: f64, bursts: &[(usize, f64)]) -> SettingBehavior {
    SettingBehavior::Curve(CurveSpec {
        base,
        slope,
        bursts: bursts
            .iter()
            .map(|&(interval, delta)| Burst { interval, delta })
            .collect(),
        noise: 0.0,
    })
}

pub fn strong_on(labels: &[&str]) -> SettingBehavior {
    SettingBehavior::LabelSubset {
        strong_labels: labels.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn spec(model: &str, checkpoints: usize, settings: Vec<(SettingKind, SettingBehavior)>) -> MockModelSpec {
    MockModelSpec {
        model: model.to_string(),
        steps: (0..checkpoints as u64).map(|i| i * 1000).collect(),
        noise_seed: 0,
        settings: settings.into_iter().collect(),
    }
}

pub fn small_config(out: &Path, datasets: Vec<PathBuf>) -> RunConfig {
    RunConfig {
        datasets,
        k: 4,
        seeds: vec![0, 1, 2],
        test_n: 100,
        dev_n: 40,
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

pub fn logs(cfg: &RunConfig) -> Vec<PathBuf> {
    pipeline::list_files(&cfg.log_dir(), "jsonl").unwrap()
}

/// Builds bundles, scores them with `specs`, and returns the log paths.
pub fn build_and_score(cfg: &RunConfig, specs: &[MockModelSpec]) -> Vec<PathBuf> {
    let built = pipeline::cmd_build(cfg).unwrap();
    pipeline::cmd_mock_score(&built.files, specs, &cfg.log_dir()).unwrap()
}

fn balanced(name: &str, tag: &str, per_label: usize, labels: &[&str]) -> Vec<LabeledExample> {
    (0..per_label * labels.len())
        .map(|i| LabeledExample {
            id: format!("{name}-{tag}-{i}"),
            input: format!("{tag} sample {i}"),
            label: labels[i % labels.len()].to_string(),
        })
        .collect()
}

/// Writes bundles for a dataset whose dev and test splits are exactly class
/// balanced, together with the manifest the fuse command reads.
pub fn write_balanced_bundles(cfg: &RunConfig, name: &str, labels: &[&str], per_label: (usize, usize)) {
    let label_space = LabelSpace::new(labels.iter().map(|s| s.to_string()).collect()).unwrap();
    let train = balanced(name, "train", cfg.k.max(1), labels);
    let dev = balanced(name, "dev", per_label.0, labels);
    let test = balanced(name, "test", per_label.1, labels);
    let dir = cfg.bundle_dir();
    fs::create_dir_all(&dir).unwrap();
    let mut files = Vec::new();
    for &seed in &cfg.seeds {
        let builder = BundleBuilder {
            dataset: name,
            label_space: &label_space,
            train_pool: &train,
            k: cfg.k,
            seed,
            mode: DemoMode::Shared,
        };
        for &kind in &cfg.settings {
            let setting = Setting::from_kind(kind, cfg.abstract_pool);
            let mut bundles = builder.build(&dev, Split::Dev, setting).unwrap();
            bundles.extend(builder.build(&test, Split::Test, setting).unwrap());
            let file = format!("{name}.{kind}.seed{seed}.jsonl");
            let mut text = String::new();
            for b in &bundles {
                text.push_str(&serde_json::to_string(b).unwrap());
                text.push('\n');
            }
            fs::write(dir.join(&file), text).unwrap();
            files.push(file);
        }
    }
    let manifest = BundleManifest {
        prng: PRNG_VERSION.to_string(),
        k: cfg.k,
        seeds: cfg.seeds.clone(),
        demo_mode: DemoMode::Shared,
        abstract_pool: AbstractPool::Symbols,
        test_n: test.len(),
        dev_n: dev.len(),
        datasets: vec![DatasetEntry {
            name: name.to_string(),
            path: String::new(),
            labels: label_space,
            n_examples: train.len() + dev.len() + test.len(),
        }],
        files,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
}

/// Reads every regular file under `root` into a path-keyed map.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}
