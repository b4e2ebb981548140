//! Deterministic synthetic scorer.
//!
//! A [`MockModelSpec`] describes, per setting, the accuracy a fake model
//! should reach at each checkpoint. Scoring a bundle set then emits
//! probability records whose realised accuracy per (dataset, setting, seed,
//! split, checkpoint) is exactly `round(target * n) / n`: queries are ranked
//! by a seeded hash and the first quota of them are answered correctly.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demo::{PromptBundle, SettingKind};
use crate::error::{Error, Result};
use crate::rng;
use crate::score_log::ProbRecord;

/// A jump in accuracy across one checkpoint interval (1-based: interval `i`
/// runs from checkpoint `i` to checkpoint `i+1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub interval: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    /// Accuracy at the first checkpoint.
    pub base: f64,
    /// Total linear drift from first to last checkpoint.
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    /// Half-width of uniform per-checkpoint noise.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SettingBehavior {
    /// Accuracy follows a curve over checkpoints.
    Curve(CurveSpec),
    /// Confidently right on queries whose gold label is in `strong_labels`,
    /// slightly wrong-leaning and near uniform on the rest, at every checkpoint.
    LabelSubset { strong_labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModelSpec {
    pub model: String,
    /// Training steps of the checkpoints, strictly increasing.
    pub steps: Vec<u64>,
    #[serde(default)]
    pub noise_seed: u64,
    pub settings: BTreeMap<SettingKind, SettingBehavior>,
}

const STRONG_MASS: f64 = 0.9;
const LEAN: f64 = 0.02;

impl MockModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config(format!("{}: no checkpoints", self.model)));
        }
        if self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "{}: checkpoint steps must be strictly increasing",
                self.model
            )));
        }
        let n_intervals = self.steps.len() - 1;
        for (setting, behavior) in &self.settings {
            if let SettingBehavior::Curve(curve) = behavior {
                if let Some(b) = curve
                    .bursts
                    .iter()
                    .find(|b| b.interval == 0 || b.interval > n_intervals)
                {
                    return Err(Error::Config(format!(
                        "{}/{setting}: burst interval {} outside 1..={n_intervals}",
                        self.model, b.interval
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn checkpoint_id(&self, index: usize) -> String {
        format!("step{}", self.steps[index])
    }

    /// Target accuracy of a curve setting at checkpoint `index` (0-based),
    /// clamped to `[0, 1]`. `None` for label-subset settings.
    pub fn target_accuracy(&self, setting: SettingKind, dataset: &str, index: usize) -> Option<f64> {
        let SettingBehavior::Curve(curve) = self.settings.get(&setting)? else {
            return None;
        };
        let span = (self.steps.len().max(2) - 1) as f64;
        let mut acc = curve.base + curve.slope * index as f64 / span;
        acc += curve
            .bursts
            .iter()
            .filter(|b| b.interval <= index)
            .map(|b| b.delta)
            .sum::<f64>();
        if curve.noise > 0.0 {
            let ckpt = self.checkpoint_id(index);
            let mut r = rng::stream(
                self.noise_seed,
                &[&self.model, "noise", setting.as_str(), dataset, &ckpt],
            );
            acc += r.random_range(-curve.noise..=curve.noise);
        }
        Some(acc.clamp(0.0, 1.0))
    }

    /// Scores every bundle at every checkpoint.
    ///
    /// Records are emitted checkpoint by checkpoint, in bundle order.
    pub fn score(&self, bundles: &[PromptBundle]) -> Result<Vec<ProbRecord>> {
        self.validate()?;
        let settings: BTreeSet<SettingKind> = bundles.iter().map(|b| b.setting).collect();
        for s in settings {
            if !self.settings.contains_key(&s) {
                return Err(Error::Config(format!(
                    "mock `{}` has no behaviour for setting `{s}`",
                    self.model
                )));
            }
        }

        let mut groups: BTreeMap<(&str, SettingKind, u64, &str), Vec<usize>> = BTreeMap::new();
        for (i, b) in bundles.iter().enumerate() {
            groups
                .entry((&b.dataset, b.setting, b.seed, b.split.as_str()))
                .or_default()
                .push(i);
        }

        let mut out = Vec::with_capacity(bundles.len() * self.steps.len());
        for index in 0..self.steps.len() {
            let ckpt = self.checkpoint_id(index);
            let mut correct = vec![false; bundles.len()];
            for ((dataset, setting, seed, split), members) in &groups {
                if let Some(target) = self.target_accuracy(*setting, dataset, index) {
                    let seed_s = seed.to_string();
                    let mut ranked: Vec<(f64, &str, usize)> = members
                        .iter()
                        .map(|&i| {
                            let q = bundles[i].query_id.as_str();
                            let u = rng::unit_hash(
                                self.noise_seed,
                                &[&self.model, "rank", dataset, setting.as_str(), &seed_s, split, &ckpt, q],
                            );
                            (u, q, i)
                        })
                        .collect();
                    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
                    let quota = (target * members.len() as f64).round() as usize;
                    for (_, _, i) in ranked.into_iter().take(quota) {
                        correct[i] = true;
                    }
                }
            }
            for (i, bundle) in bundles.iter().enumerate() {
                let probs = match &self.settings[&bundle.setting] {
                    SettingBehavior::Curve(_) => self.curve_probs(bundle, &ckpt, correct[i])?,
                    SettingBehavior::LabelSubset { strong_labels } => {
                        self.subset_probs(bundle, &ckpt, strong_labels)?
                    }
                };
                out.push(ProbRecord {
                    checkpoint_id: ckpt.clone(),
                    step: self.steps[index],
                    model: self.model.clone(),
                    dataset: bundle.dataset.clone(),
                    setting: bundle.setting,
                    seed: bundle.seed,
                    query_id: bundle.query_id.clone(),
                    probs,
                    gold_answer: bundle.gold_answer.clone(),
                    split: Some(bundle.split),
                });
            }
        }
        Ok(out)
    }

    fn query_rng(&self, bundle: &PromptBundle, ckpt: &str) -> rand_chacha::ChaCha8Rng {
        rng::stream(
            self.noise_seed,
            &[
                &self.model,
                "probs",
                &bundle.dataset,
                bundle.setting.as_str(),
                &bundle.seed.to_string(),
                ckpt,
                &bundle.query_id,
            ],
        )
    }

    fn gold_index(bundle: &PromptBundle) -> Result<usize> {
        bundle
            .answer_space
            .iter()
            .position(|a| *a == bundle.gold_answer)
            .ok_or_else(|| Error::Contract(format!("{}: gold answer not in answer space", bundle.query_id)))
    }

    fn curve_probs(&self, bundle: &PromptBundle, ckpt: &str, correct: bool) -> Result<Vec<(String, f64)>> {
        let m = bundle.answer_space.len();
        let gold = Self::gold_index(bundle)?;
        let mut rng = self.query_rng(bundle, ckpt);
        let winner = if correct {
            gold
        } else {
            // uniform over the wrong answers
            let j = rng.random_range(0..m - 1);
            if j >= gold {
                j + 1
            } else {
                j
            }
        };
        // winner keeps more than half the mass, so it is the unique argmax
        let top = rng.random_range(0.55..0.95);
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let rest: f64 = weights
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != winner)
            .map(|(_, w)| w)
            .sum();
        Ok(bundle
            .answer_space
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let p = if j == winner {
                    top
                } else {
                    (1.0 - top) * weights[j] / rest
                };
                (a.clone(), p)
            })
            .collect())
    }

    fn subset_probs(&self, bundle: &PromptBundle, ckpt: &str, strong: &[String]) -> Result<Vec<(String, f64)>> {
        let m = bundle.answer_space.len();
        let gold = Self::gold_index(bundle)?;
        let gold_label = bundle
            .original_label(&bundle.gold_answer)
            .ok_or_else(|| Error::Mapping(format!("{}: cannot map gold answer back to a label", bundle.query_id)))?;
        let uniform = 1.0 / m as f64;
        let probs: Vec<f64> = if strong.iter().any(|s| s == gold_label) {
            (0..m)
                .map(|j| {
                    if j == gold {
                        STRONG_MASS
                    } else {
                        (1.0 - STRONG_MASS) / (m - 1) as f64
                    }
                })
                .collect()
        } else {
            let mut rng = self.query_rng(bundle, ckpt);
            let j = rng.random_range(0..m - 1);
            let wrong = if j >= gold { j + 1 } else { j };
            let lean = LEAN.min(uniform / 2.0);
            (0..m)
                .map(|k| match k {
                    k if k == wrong => uniform + lean,
                    k if k == gold => uniform - lean,
                    _ => uniform,
                })
                .collect()
        };
        Ok(bundle.answer_space.iter().cloned().zip(probs).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::Split;
    use crate::score_log::{build_trajectories, predict};

    fn bundles(n: usize, setting: SettingKind) -> Vec<PromptBundle> {
        (0..n)
            .map(|i| PromptBundle {
                query_id: format!("q{i}"),
                prompt: "x\n".into(),
                answer_space: vec!["pos".into(), "neg".into()],
                setting,
                seed: 0,
                label_map: None,
                dataset: "d".into(),
                split: Split::Test,
                demo_ids: vec![],
                gold_answer: if i % 2 == 0 { "pos" } else { "neg" }.into(),
                abstract_pool: None,
            })
            .collect()
    }

    fn curve(base: f64, bursts: Vec<Burst>) -> SettingBehavior {
        SettingBehavior::Curve(CurveSpec {
            base,
            slope: 0.0,
            bursts,
            noise: 0.0,
        })
    }

    fn spec(behavior: SettingBehavior) -> MockModelSpec {
        MockModelSpec {
            model: "mock".into(),
            steps: (0..4).map(|i| i * 100).collect(),
            noise_seed: 1,
            settings: [(SettingKind::Gold, behavior)].into_iter().collect(),
        }
    }

    #[test]
    fn perfect_model_always_right() {
        let recs = spec(curve(1.0, vec![])).score(&bundles(50, SettingKind::Gold)).unwrap();
        assert_eq!(recs.len(), 200);
        for r in &recs {
            assert_eq!(predict(&r.probs).unwrap(), r.gold_answer);
            r.validate().unwrap();
        }
    }

    #[test]
    fn chance_model_realises_chance() {
        let recs = spec(curve(0.5, vec![]))
            .score(&bundles(1000, SettingKind::Gold))
            .unwrap();
        let set = build_trajectories(&recs).unwrap();
        for p in &set.per_seed[0].points {
            assert!((p.accuracy - 0.5).abs() <= 0.03);
        }
    }

    #[test]
    fn bursts_shift_later_checkpoints() {
        let s = spec(curve(
            0.4,
            vec![Burst {
                interval: 2,
                delta: 0.2,
            }],
        ));
        let accs: Vec<f64> = (0..4)
            .map(|i| s.target_accuracy(SettingKind::Gold, "d", i).unwrap())
            .collect();
        for (a, want) in accs.iter().zip([0.4, 0.4, 0.6, 0.6]) {
            assert!((a - want).abs() < 1e-12);
        }
    }

    #[test]
    fn scoring_is_deterministic() {
        let s = spec(SettingBehavior::Curve(CurveSpec {
            base: 0.6,
            slope: 0.1,
            bursts: vec![],
            noise: 0.05,
        }));
        let b = bundles(30, SettingKind::Gold);
        assert_eq!(s.score(&b).unwrap(), s.score(&b).unwrap());
    }

    #[test]
    fn label_subset_accuracy_is_class_share() {
        let s = spec(SettingBehavior::LabelSubset {
            strong_labels: vec!["pos".into()],
        });
        let recs = s.score(&bundles(40, SettingKind::Gold)).unwrap();
        let set = build_trajectories(&recs).unwrap();
        assert!(set.per_seed[0].points.iter().all(|p| p.accuracy == 0.5));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(curve(
            0.5,
            vec![Burst {
                interval: 4,
                delta: 0.1,
            }],
        ));
        assert!(s.validate().is_err());
        s.settings = [(SettingKind::Gold, curve(0.5, vec![]))].into_iter().collect();
        s.steps = vec![10, 10];
        assert!(s.validate().is_err());
        let missing = spec(curve(0.5, vec![]));
        assert!(missing.score(&bundles(2, SettingKind::Random)).is_err());
    }

    #[test]
    fn spec_toml_roundtrip() {
        let text = r#"
model = "tiny"
steps = [0, 1000, 2000]
noise_seed = 4

[settings.random]
kind = "curve"
base = 0.5
bursts = [{ interval = 1, delta = 0.1 }]

[settings.abstract]
kind = "label_subset"
strong_labels = ["neg"]
"#;
        let s: MockModelSpec = toml::from_str(text).unwrap();
        s.validate().unwrap();
        assert_eq!(s.settings.len(), 2);
        assert!(matches!(
            s.settings[&SettingKind::Abstract],
            SettingBehavior::LabelSubset { .. }
        ));
    }
}
