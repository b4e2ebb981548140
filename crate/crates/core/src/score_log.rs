//! Probability logs: record schema, argmax prediction, per-checkpoint
//! accuracy, and trajectory assembly with seed/dataset averaging.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demo::{SettingKind, Split};
use crate::error::{Error, Result};
use crate::ordmap;

/// Allowed deviation of a record's probability mass from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Dataset name used for dataset-averaged trajectories.
pub const ALL_DATASETS: &str = "ALL";

/// Label probabilities of one checkpoint for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub checkpoint_id: String,
    pub step: u64,
    pub model: String,
    pub dataset: String,
    pub setting: SettingKind,
    pub seed: u64,
    pub query_id: String,
    #[serde(with = "ordmap")]
    pub probs: Vec<(String, f64)>,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl ProbRecord {
    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::Contract(format!("{}: empty probs", self.query_id)));
        }
        let mut sum = 0.0;
        for (answer, p) in &self.probs {
            if !p.is_finite() || !(0.0..=1.0).contains(p) {
                return Err(Error::Contract(format!(
                    "{}: probability {p} for `{answer}` outside [0, 1]",
                    self.query_id
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::Contract(format!(
                "{}: probabilities sum to {sum}",
                self.query_id
            )));
        }
        if !self.probs.iter().any(|(a, _)| *a == self.gold_answer) {
            return Err(Error::Contract(format!(
                "{}: gold answer `{}` not among scored answers",
                self.query_id, self.gold_answer
            )));
        }
        Ok(())
    }

    pub fn is_correct(&self) -> Result<bool> {
        Ok(predict(&self.probs)? == self.gold_answer)
    }

    fn group_key(&self) -> (&str, &str, &str, SettingKind, u64) {
        (&self.model, &self.checkpoint_id, &self.dataset, self.setting, self.seed)
    }
}

/// Argmax over answers; the first answer wins ties.
pub fn predict(probs: &[(String, f64)]) -> Result<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (answer, p) in probs {
        match best {
            Some((_, bp)) if *p <= bp => {}
            _ => best = Some((answer, *p)),
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::Contract("predict called with empty probabilities".into()))
}

/// Fraction of records whose argmax equals the gold answer. All records must
/// share model, checkpoint, dataset, setting, and seed.
pub fn accuracy(records: &[ProbRecord]) -> Result<f64> {
    let first = records
        .first()
        .ok_or_else(|| Error::Contract("accuracy of zero records".into()))?;
    let key = first.group_key();
    let mut correct = 0usize;
    for r in records {
        if r.group_key() != key {
            return Err(Error::Grouping(format!("{:?} vs {:?}", key, r.group_key())));
        }
        if r.is_correct()? {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

/// Parsed log file: optional header objects plus records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbLog {
    pub headers: Vec<serde_json::Value>,
    pub records: Vec<ProbRecord>,
}

/// Parses log JSONL. Lines holding an object with a `header` key are metadata
/// (the scorer records its scoring mode there); every other line is a record.
pub fn parse_log(text: &str, source: &str) -> Result<ProbLog> {
    let mut log = ProbLog::default();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            source_name: source.to_string(),
            line: i + 1,
            message,
        };
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| parse_err(e.to_string()))?;
        if let Some(header) = value.get("header") {
            log.headers.push(header.clone());
            continue;
        }
        let record: ProbRecord = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        record.validate().map_err(|e| parse_err(e.to_string()))?;
        log.records.push(record);
    }
    Ok(log)
}

pub fn read_log(path: &Path) -> Result<ProbLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log(&text, &path.display().to_string())
}

pub fn write_log<W: Write>(mut out: W, header: Option<&serde_json::Value>, records: &[ProbRecord]) -> Result<()> {
    let io = |e| Error::io("<log writer>", e);
    if let Some(h) = header {
        serde_json::to_writer(&mut out, &serde_json::json!({ "header": h }))?;
        out.write_all(b"\n").map_err(io)?;
    }
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub checkpoint_id: String,
    pub step: u64,
    pub accuracy: f64,
}

/// Accuracy per checkpoint for one (model, dataset, setting, seed). `seed` is
/// `None` on seed-averaged views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub dataset: String,
    pub setting: SettingKind,
    pub seed: Option<u64>,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }

    pub fn steps(&self) -> Vec<u64> {
        self.points.iter().map(|p| p.step).collect()
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }
}

/// Per-seed trajectories; averaged views derive from these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    pub per_seed: Vec<Trajectory>,
}

#[derive(Default)]
struct Cell {
    checkpoint_id: String,
    correct: usize,
    total: usize,
    queries: HashSet<String>,
}

type SeriesKey = (String, String, SettingKind, u64);

/// Groups records into one trajectory per (model, dataset, setting, seed),
/// ordered by training step. Output is independent of record order.
pub fn build_trajectories<'a, I>(records: I) -> Result<TrajectorySet>
where
    I: IntoIterator<Item = &'a ProbRecord>,
{
    let mut cells: BTreeMap<SeriesKey, BTreeMap<u64, Cell>> = BTreeMap::new();
    let mut step_ids: BTreeMap<(&str, u64), &str> = BTreeMap::new();
    let mut id_steps: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut space_sizes: BTreeMap<(&str, SettingKind), usize> = BTreeMap::new();

    for r in records {
        if let Some(prev) = step_ids.insert((&r.model, r.step), &r.checkpoint_id) {
            if prev != r.checkpoint_id {
                return Err(Error::Contract(format!(
                    "{}: step {} carries checkpoint ids `{prev}` and `{}`",
                    r.model, r.step, r.checkpoint_id
                )));
            }
        }
        if let Some(prev) = id_steps.insert((&r.model, &r.checkpoint_id), r.step) {
            if prev != r.step {
                return Err(Error::Contract(format!(
                    "{}: checkpoint `{}` declared at steps {prev} and {}",
                    r.model, r.checkpoint_id, r.step
                )));
            }
        }
        let size = *space_sizes.entry((&r.dataset, r.setting)).or_insert(r.probs.len());
        if size != r.probs.len() {
            return Err(Error::Contract(format!(
                "{}/{}: inconsistent answer-space sizes {size} and {}",
                r.dataset,
                r.setting,
                r.probs.len()
            )));
        }

        let key = (r.model.clone(), r.dataset.clone(), r.setting, r.seed);
        let cell = cells.entry(key).or_default().entry(r.step).or_default();
        if !cell.queries.insert(r.query_id.clone()) {
            return Err(Error::Contract(format!(
                "duplicate record for {}/{}/{}/seed {}/{} query `{}`",
                r.model, r.dataset, r.setting, r.seed, r.checkpoint_id, r.query_id
            )));
        }
        cell.checkpoint_id.clone_from(&r.checkpoint_id);
        cell.total += 1;
        if r.is_correct()? {
            cell.correct += 1;
        }
    }

    // every series of a model must cover the model's full checkpoint set
    let mut model_steps: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for ((model, ..), steps) in &cells {
        model_steps.entry(model).or_default().extend(steps.keys());
    }
    let mut holes = Vec::new();
    for ((model, dataset, setting, seed), steps) in &cells {
        for step in &model_steps[model.as_str()] {
            if !steps.contains_key(step) {
                let id = step_ids.get(&(model.as_str(), *step)).copied().unwrap_or("?");
                holes.push(format!("{model}/{dataset}/{setting}/seed{seed}@{id}"));
            }
        }
    }
    if !holes.is_empty() {
        return Err(Error::Holes(holes));
    }

    let per_seed = cells
        .into_iter()
        .map(|((model, dataset, setting, seed), steps)| Trajectory {
            model,
            dataset,
            setting,
            seed: Some(seed),
            points: steps
                .into_iter()
                .map(|(step, c)| TrajectoryPoint {
                    checkpoint_id: c.checkpoint_id,
                    step,
                    accuracy: c.correct as f64 / c.total as f64,
                })
                .collect(),
        })
        .collect();
    Ok(TrajectorySet { per_seed })
}

fn mean_of(group: &[&Trajectory], model: &str, dataset: &str, setting: SettingKind) -> Trajectory {
    let n = group.len() as f64;
    let points = group[0]
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| TrajectoryPoint {
            checkpoint_id: p.checkpoint_id.clone(),
            step: p.step,
            accuracy: group.iter().map(|t| t.points[i].accuracy).sum::<f64>() / n,
        })
        .collect();
    Trajectory {
        model: model.to_string(),
        dataset: dataset.to_string(),
        setting,
        seed: None,
        points,
    }
}

impl TrajectorySet {
    /// Unweighted mean over seeds, per (model, dataset, setting).
    pub fn seed_averaged(&self) -> Vec<Trajectory> {
        let mut groups: BTreeMap<(&str, &str, SettingKind), Vec<&Trajectory>> = BTreeMap::new();
        for t in &self.per_seed {
            groups.entry((&t.model, &t.dataset, t.setting)).or_default().push(t);
        }
        groups.into_iter().map(|((m, d, s), g)| mean_of(&g, m, d, s)).collect()
    }

    /// Unweighted mean over datasets of the seed-averaged trajectories, per
    /// (model, setting). The dataset field is [`ALL_DATASETS`].
    pub fn dataset_averaged(&self) -> Vec<Trajectory> {
        let seeded = self.seed_averaged();
        let mut groups: BTreeMap<(&str, SettingKind), Vec<&Trajectory>> = BTreeMap::new();
        for t in &seeded {
            groups.entry((&t.model, t.setting)).or_default().push(t);
        }
        groups
            .into_iter()
            .map(|((m, s), g)| mean_of(&g, m, ALL_DATASETS, s))
            .collect()
    }

    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.per_seed.iter().map(|t| t.model.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

/// Finds a trajectory by (model, dataset, setting) in a list.
pub fn find<'a>(
    trajectories: &'a [Trajectory],
    model: &str,
    dataset: &str,
    setting: SettingKind,
) -> Option<&'a Trajectory> {
    trajectories
        .iter()
        .find(|t| t.model == model && t.dataset == dataset && t.setting == setting)
}
