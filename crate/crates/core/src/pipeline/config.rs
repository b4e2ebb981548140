use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demo::{AbstractPool, DemoMode, SettingKind, Split};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::metrics::{IntensityAveraging, DEFAULT_EPSILON};
use crate::mock::MockModelSpec;
use crate::score_log::ProbRecord;

/// Restricts which checkpoints enter the analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFilter {
    /// Keep only these training steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<u64>>,
    /// Keep this many evenly spaced checkpoints per model, always including
    /// the first and the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl CheckpointFilter {
    pub fn is_noop(&self) -> bool {
        self.steps.is_none() && self.count.is_none()
    }

    /// Selects evenly spaced indices `round(j * (n-1) / (count-1))`.
    pub fn even_indices(n: usize, count: usize) -> Vec<usize> {
        if count >= n {
            return (0..n).collect();
        }
        if count <= 1 {
            return vec![n - 1];
        }
        let mut out: Vec<usize> = (0..count)
            .map(|j| ((j * (n - 1)) as f64 / (count - 1) as f64).round() as usize)
            .collect();
        out.dedup();
        out
    }

    pub fn apply<'a>(&self, records: &'a [ProbRecord]) -> Vec<&'a ProbRecord> {
        if self.is_noop() {
            return records.iter().collect();
        }
        let mut model_steps: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
        for r in records {
            if self.steps.as_ref().is_none_or(|s| s.contains(&r.step)) {
                model_steps.entry(&r.model).or_default().insert(r.step);
            }
        }
        let keep: BTreeMap<&str, BTreeSet<u64>> = model_steps
            .into_iter()
            .map(|(model, steps)| {
                let steps: Vec<u64> = steps.into_iter().collect();
                let chosen = match self.count {
                    Some(c) => Self::even_indices(steps.len(), c)
                        .into_iter()
                        .map(|i| steps[i])
                        .collect(),
                    None => steps.into_iter().collect(),
                };
                (model, chosen)
            })
            .collect();
        records
            .iter()
            .filter(|r| keep.get(r.model.as_str()).is_some_and(|s| s.contains(&r.step)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionOptions {
    /// Model supplying the TR checkpoint. Defaults to the only model in the logs.
    pub tr_model: Option<String>,
    /// Model supplying the TL checkpoint. Defaults to the only model in the logs.
    pub tl_model: Option<String>,
    /// Prompt both checkpoints under gold labels instead of random/abstract.
    pub gold_gold: bool,
    pub modes: Vec<FusionMode>,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            tr_model: None,
            tl_model: None,
            gold_gold: false,
            modes: vec![FusionMode::Fixed, FusionMode::Adaptive],
        }
    }
}

/// Everything a run needs. Loadable from TOML or JSON; CLI flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub datasets: Vec<PathBuf>,
    /// Demonstrations per prompt.
    pub k: usize,
    pub seeds: Vec<u64>,
    pub settings: Vec<SettingKind>,
    pub epsilon: f64,
    pub checkpoints: CheckpointFilter,
    pub abstract_pool: AbstractPool,
    pub output_dir: PathBuf,
    pub test_n: usize,
    pub dev_n: usize,
    pub demo_mode: DemoMode,
    /// Split the competition metrics and the fusion test are computed on.
    pub eval_split: Split,
    pub intensity_averaging: IntensityAveraging,
    /// Also emit metrics per seed.
    pub per_seed_metrics: bool,
    pub fusion: FusionOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            k: 16,
            seeds: (0..5).collect(),
            settings: SettingKind::ALL.to_vec(),
            epsilon: DEFAULT_EPSILON,
            checkpoints: CheckpointFilter::default(),
            abstract_pool: AbstractPool::Symbols,
            output_dir: PathBuf::from("out"),
            test_n: 1000,
            dev_n: 300,
            demo_mode: DemoMode::Shared,
            eval_split: Split::Test,
            intensity_averaging: IntensityAveraging::AllIntervals,
            per_seed_metrics: false,
            fusion: FusionOptions::default(),
        }
    }
}

fn is_toml(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("toml")
}

/// Reads a TOML (by `.toml` extension) or JSON file.
pub(crate) fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if is_toml(path) {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_structured(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one setting is required".into()));
        }
        if self.checkpoints.count == Some(0) {
            return Err(Error::Config("checkpoint count must be positive".into()));
        }
        if self.fusion.modes.is_empty() {
            return Err(Error::Config("at least one fusion mode is required".into()));
        }
        if self.fusion.modes.iter().collect::<BTreeSet<_>>().len() != self.fusion.modes.len() {
            return Err(Error::Config("fusion modes must be distinct".into()));
        }
        Ok(())
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.output_dir.join("bundles")
    }

    pub fn log_dir(&self) -> PathBuf {
        self.output_dir.join("logs")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.output_dir.join("metrics")
    }

    pub fn fusion_dir(&self) -> PathBuf {
        self.output_dir.join("fusion")
    }
}

/// A set of mock models, as read from a `mock-score` spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSuite {
    pub models: Vec<MockModelSpec>,
}

impl MockSuite {
    pub fn from_file(path: &Path) -> Result<Self> {
        let suite: MockSuite = read_structured(path)?;
        let mut names = BTreeSet::new();
        for m in &suite.models {
            m.validate()?;
            if !names.insert(m.model.as_str()) {
                return Err(Error::Config(format!("duplicate mock model `{}`", m.model)));
            }
        }
        Ok(suite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.k, 16);
        assert_eq!(cfg.seeds.len(), 5);
        assert_eq!(cfg.epsilon, 0.01);
        assert_eq!(cfg.settings.len(), 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_overrides_and_rejects_unknown() {
        let cfg: RunConfig =
            toml::from_str("k = 4\nseeds = [7]\nsettings = [\"gold\"]\n[checkpoints]\ncount = 8\n").unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.checkpoints.count, Some(8));
        assert_eq!(cfg.dev_n, 300);
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = RunConfig {
            seeds: vec![],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1];
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn even_indices_keep_ends() {
        assert_eq!(
            CheckpointFilter::even_indices(17, 9),
            vec![0, 2, 4, 6, 8, 10, 12, 14, 16]
        );
        assert_eq!(CheckpointFilter::even_indices(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(CheckpointFilter::even_indices(5, 1), vec![4]);
        let idx = CheckpointFilter::even_indices(33, 17);
        assert_eq!(idx.len(), 17);
        assert_eq!(*idx.last().unwrap(), 32);
    }
}
