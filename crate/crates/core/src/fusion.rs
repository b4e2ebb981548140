//! Checkpoint selection and weighted probability fusion of a task-recognition
//! checkpoint (scored under random labels) with a task-learning checkpoint
//! (scored under abstract labels).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::demo::{LabelMap, SettingKind};
use crate::error::{Error, Result};
use crate::ordmap;
use crate::score_log::{predict, ProbRecord, Trajectory, PROB_SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Adaptive,
    Fixed,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Adaptive => "adaptive",
            FusionMode::Fixed => "fixed",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(FusionMode::Adaptive),
            "fixed" => Ok(FusionMode::Fixed),
            other => Err(Error::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub model: String,
    pub checkpoint_id: String,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointChoice {
    pub checkpoint: CheckpointRef,
    pub dev_accuracy: f64,
}

/// Index of the best accuracy; ties go to the earliest point.
pub fn best_index(accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in accuracies.iter().enumerate() {
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_checkpoint(trajectory: &Trajectory) -> Result<CheckpointChoice> {
    let i = best_index(&trajectory.accuracies()).ok_or_else(|| {
        Error::Coverage(format!(
            "{}/{}/{}: no checkpoints",
            trajectory.model, trajectory.dataset, trajectory.setting
        ))
    })?;
    let p = &trajectory.points[i];
    Ok(CheckpointChoice {
        checkpoint: CheckpointRef {
            model: trajectory.model.clone(),
            checkpoint_id: p.checkpoint_id.clone(),
            step: p.step,
        },
        dev_accuracy: p.accuracy,
    })
}

/// Picks the TR checkpoint by random-setting dev accuracy and the TL
/// checkpoint by abstract-setting dev accuracy.
pub fn select_checkpoints(
    tr_dev: Option<&Trajectory>,
    tl_dev: Option<&Trajectory>,
) -> Result<(CheckpointChoice, CheckpointChoice)> {
    let tr = tr_dev.ok_or_else(|| Error::Coverage("no dev trajectory for the TR model".into()))?;
    let tl = tl_dev.ok_or_else(|| Error::Coverage("no dev trajectory for the TL model".into()))?;
    Ok((select_checkpoint(tr)?, select_checkpoint(tl)?))
}

/// Weights proportional to each side's accuracy above chance `baseline`.
///
/// Below-chance accuracies count as zero; when both sides are at or below
/// chance the weights fall back to an even split.
pub fn adaptive_weights(acc_r: f64, acc_l: f64, baseline: f64) -> (f64, f64) {
    let r = (acc_r - baseline).max(0.0);
    let l = (acc_l - baseline).max(0.0);
    let z = r + l;
    if z <= 0.0 {
        (0.5, 0.5)
    } else {
        (r / z, l / z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub dataset: String,
    pub tr: CheckpointRef,
    pub tl: CheckpointRef,
    pub mode: FusionMode,
    pub b: f64,
    pub acc_r: f64,
    pub acc_l: f64,
    pub w_r: f64,
    pub w_l: f64,
    /// Settings the two checkpoints are prompted under at inference.
    pub tr_setting: SettingKind,
    pub tl_setting: SettingKind,
}

impl FusionPlan {
    pub fn new(
        dataset: &str,
        tr: CheckpointChoice,
        tl: CheckpointChoice,
        label_space: &LabelSpace,
        mode: FusionMode,
    ) -> Self {
        let b = label_space.chance();
        let (w_r, w_l) = match mode {
            FusionMode::Adaptive => adaptive_weights(tr.dev_accuracy, tl.dev_accuracy, b),
            FusionMode::Fixed => (0.5, 0.5),
        };
        Self {
            dataset: dataset.to_string(),
            tr: tr.checkpoint,
            tl: tl.checkpoint,
            mode,
            b,
            acc_r: tr.dev_accuracy,
            acc_l: tl.dev_accuracy,
            w_r,
            w_l,
            tr_setting: SettingKind::Random,
            tl_setting: SettingKind::Abstract,
        }
    }

    /// Prompts both checkpoints under the gold setting instead.
    pub fn gold_gold(mut self) -> Self {
        self.tr_setting = SettingKind::Gold;
        self.tl_setting = SettingKind::Gold;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub query_id: String,
    /// Mixed distribution in label-space order.
    #[serde(with = "ordmap")]
    pub mixed_probs: Vec<(String, f64)>,
    pub predicted: String,
}

fn lookup(probs: &[(String, f64)], key: &str) -> Option<f64> {
    probs.iter().find(|(k, _)| k == key).map(|(_, p)| *p)
}

/// Mixes the TR distribution (over labels) with the TL distribution (over
/// abstract tokens, mapped back through `label_map`; `None` means the TL side
/// is already over labels) and takes the argmax in label-space order.
pub fn fuse_predict(
    query_id: &str,
    p_rand: &[(String, f64)],
    p_abs: &[(String, f64)],
    label_map: Option<&LabelMap>,
    label_space: &LabelSpace,
    w_r: f64,
    w_l: f64,
) -> Result<FusedPrediction> {
    if w_r < 0.0 || w_l < 0.0 || (w_r + w_l - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::Contract(format!("weights ({w_r}, {w_l}) are not a convex pair")));
    }
    if p_rand.len() != label_space.len() || p_abs.len() != label_space.len() {
        return Err(Error::Mapping(format!(
            "{query_id}: expected {} answers on both sides, got {} and {}",
            label_space.len(),
            p_rand.len(),
            p_abs.len()
        )));
    }
    let mut mixed = Vec::with_capacity(label_space.len());
    for label in label_space.labels() {
        let r = lookup(p_rand, label)
            .ok_or_else(|| Error::Mapping(format!("{query_id}: TR distribution lacks label `{label}`")))?;
        let token = match label_map {
            Some(map) => map
                .forward(label)
                .ok_or_else(|| Error::Mapping(format!("{query_id}: label map lacks label `{label}`")))?,
            None => label.as_str(),
        };
        let l = lookup(p_abs, token)
            .ok_or_else(|| Error::Mapping(format!("{query_id}: TL distribution lacks token `{token}`")))?;
        mixed.push((label.clone(), w_r * r + w_l * l));
    }
    let predicted = predict(&mixed)?.to_string();
    Ok(FusedPrediction {
        query_id: query_id.to_string(),
        mixed_probs: mixed,
        predicted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub seed: u64,
    pub prediction: FusedPrediction,
    pub gold: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionEval {
    /// Fused accuracy, averaged over seeds.
    pub accuracy: f64,
    /// TR checkpoint alone on the same records.
    pub tr_accuracy: f64,
    /// TL checkpoint alone on the same records.
    pub tl_accuracy: f64,
    pub per_seed: Vec<(u64, f64)>,
    pub predictions: Vec<PredictionRow>,
}

/// Per-query inputs for one seed: TR record, TL record, and the label map the
/// TL prompt used.
pub struct FusionCase<'a> {
    pub seed: u64,
    pub gold_label: &'a str,
    pub tr: &'a ProbRecord,
    pub tl: &'a ProbRecord,
    pub label_map: Option<&'a LabelMap>,
}

/// Pairs TR and TL records by (seed, query) and checks coverage.
///
/// `label_maps` maps `(seed, query_id)` to the TL prompt's label map and the
/// gold label; its key set defines the evaluation queries.
pub fn pair_cases<'a>(
    plan: &FusionPlan,
    tr_records: &'a [ProbRecord],
    tl_records: &'a [ProbRecord],
    queries: &'a BTreeMap<(u64, String), (Option<LabelMap>, String)>,
) -> Result<Vec<FusionCase<'a>>> {
    let index = |records: &'a [ProbRecord], ckpt: &CheckpointRef, setting: SettingKind| {
        records
            .iter()
            .filter(|r| {
                r.dataset == plan.dataset
                    && r.model == ckpt.model
                    && r.checkpoint_id == ckpt.checkpoint_id
                    && r.setting == setting
            })
            .map(|r| ((r.seed, r.query_id.as_str()), r))
            .collect::<BTreeMap<_, _>>()
    };
    let tr_index = index(tr_records, &plan.tr, plan.tr_setting);
    let tl_index = index(tl_records, &plan.tl, plan.tl_setting);

    let mut holes = Vec::new();
    let mut cases = Vec::with_capacity(queries.len());
    for ((seed, qid), (map, gold)) in queries {
        let key = (*seed, qid.as_str());
        match (tr_index.get(&key), tl_index.get(&key)) {
            (Some(tr), Some(tl)) => cases.push(FusionCase {
                seed: *seed,
                gold_label: gold,
                tr,
                tl,
                label_map: map.as_ref(),
            }),
            (tr, tl) => {
                if tr.is_none() {
                    holes.push(format!(
                        "TR {}@{} {} seed{seed} {qid}",
                        plan.tr.model, plan.tr.checkpoint_id, plan.tr_setting
                    ));
                }
                if tl.is_none() {
                    holes.push(format!(
                        "TL {}@{} {} seed{seed} {qid}",
                        plan.tl.model, plan.tl.checkpoint_id, plan.tl_setting
                    ));
                }
            }
        }
    }
    if !holes.is_empty() {
        return Err(Error::Holes(holes));
    }
    Ok(cases)
}

/// Fuses every case and scores fused and single-checkpoint accuracies.
/// Accuracies are computed per seed, then averaged over seeds.
pub fn run_fusion_eval(plan: &FusionPlan, cases: &[FusionCase<'_>], label_space: &LabelSpace) -> Result<FusionEval> {
    if cases.is_empty() {
        return Err(Error::Coverage(format!("{}: no evaluation queries", plan.dataset)));
    }
    let mut predictions = Vec::with_capacity(cases.len());
    // seed -> (n, fused correct, tr correct, tl correct)
    let mut tallies: BTreeMap<u64, [usize; 4]> = BTreeMap::new();
    for case in cases {
        let fused = fuse_predict(
            &case.tr.query_id,
            &case.tr.probs,
            &case.tl.probs,
            case.label_map,
            label_space,
            plan.w_r,
            plan.w_l,
        )?;
        let correct = fused.predicted == case.gold_label;
        let t = tallies.entry(case.seed).or_default();
        t[0] += 1;
        t[1] += usize::from(correct);
        t[2] += usize::from(case.tr.is_correct()?);
        t[3] += usize::from(case.tl.is_correct()?);
        predictions.push(PredictionRow {
            seed: case.seed,
            prediction: fused,
            gold: case.gold_label.to_string(),
            correct,
        });
    }
    let n_seeds = tallies.len() as f64;
    let mean = |col: usize| tallies.values().map(|t| t[col] as f64 / t[0] as f64).sum::<f64>() / n_seeds;
    Ok(FusionEval {
        accuracy: mean(1),
        tr_accuracy: mean(2),
        tl_accuracy: mean(3),
        per_seed: tallies.iter().map(|(s, t)| (*s, t[1] as f64 / t[0] as f64)).collect(),
        predictions,
    })
}
