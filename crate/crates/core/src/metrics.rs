//! Competition between task recognition (random-setting accuracy) and task
//! learning (abstract-setting accuracy) across checkpoints.
//!
//! For consecutive checkpoints `i, i+1`:
//!
//! * `dtr_i = acc_rand[i+1] - acc_rand[i]`, `dtl_i = acc_abs[i+1] - acc_abs[i]`
//! * `ch_i = 1` iff the deltas have opposite signs and both exceed `epsilon`
//!   in magnitude (strictly)
//! * `cs_i` is `|dtr/dtl|` when TR fell and `|dtl/dtr|` when TL fell, zero
//!   without competition
//! * `r_i` is the share of total intensity accrued by interval `i`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_log::Trajectory;

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSeries {
    /// Step at the end of each interval (checkpoint `i+1`).
    pub steps: Vec<u64>,
    pub dtr: Vec<f64>,
    pub dtl: Vec<f64>,
}

impl DeltaSeries {
    pub fn from_raw(dtr: Vec<f64>, dtl: Vec<f64>) -> Result<Self> {
        if dtr.len() != dtl.len() || dtr.is_empty() {
            return Err(Error::Contract(format!(
                "delta series need equal non-zero lengths, got {} and {}",
                dtr.len(),
                dtl.len()
            )));
        }
        Ok(Self {
            steps: (1..=dtr.len() as u64).collect(),
            dtr,
            dtl,
        })
    }

    pub fn len(&self) -> usize {
        self.dtr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dtr.is_empty()
    }
}

fn differences(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Differences of the random-setting (TR) and abstract-setting (TL)
/// trajectories. Both must list the same checkpoints in the same order.
pub fn deltas(tr: &Trajectory, tl: &Trajectory) -> Result<DeltaSeries> {
    let n = tr.points.len().max(tl.points.len());
    let divergent: Vec<String> = (0..n)
        .filter_map(|i| match (tr.points.get(i), tl.points.get(i)) {
            (Some(a), Some(b)) if a.checkpoint_id == b.checkpoint_id && a.step == b.step => None,
            (a, b) => Some(format!(
                "#{i}: {} vs {}",
                a.map_or("<none>", |p| p.checkpoint_id.as_str()),
                b.map_or("<none>", |p| p.checkpoint_id.as_str())
            )),
        })
        .collect();
    if !divergent.is_empty() {
        return Err(Error::Alignment(divergent));
    }
    if n < 2 {
        return Err(Error::Contract(format!(
            "{}/{}: need at least 2 checkpoints, have {n}",
            tr.model, tr.dataset
        )));
    }
    Ok(DeltaSeries {
        steps: tr.points[1..].iter().map(|p| p.step).collect(),
        dtr: differences(&tr.accuracies()),
        dtl: differences(&tl.accuracies()),
    })
}

pub fn competition_flag(dtr: f64, dtl: f64, epsilon: f64) -> bool {
    dtr * dtl < 0.0 && dtr.abs() > epsilon && dtl.abs() > epsilon
}

pub fn intensity(dtr: f64, dtl: f64, epsilon: f64) -> f64 {
    if !competition_flag(dtr, dtl, epsilon) {
        return 0.0;
    }
    if dtr < 0.0 {
        (dtr / dtl).abs()
    } else {
        (dtl / dtr).abs()
    }
}

/// Prefix sums of `cs` normalised by the total. A zero total yields zeros.
pub fn cumulative(cs: &[f64]) -> Vec<f64> {
    let total: f64 = cs.iter().sum();
    if total <= 0.0 {
        return vec![0.0; cs.len()];
    }
    let mut acc = 0.0;
    let mut out: Vec<f64> = cs
        .iter()
        .map(|c| {
            acc += c;
            acc / total
        })
        .collect();
    // the final prefix is the total itself; pin it against rounding
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// How the average intensity is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityAveraging {
    /// Mean over every interval, zeros included.
    #[default]
    AllIntervals,
    /// Mean over intervals where competition occurred.
    CompetitiveOnly,
}

impl std::str::FromStr for IntensityAveraging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_intervals" => Ok(IntensityAveraging::AllIntervals),
            "competitive_only" => Ok(IntensityAveraging::CompetitiveOnly),
            other => Err(Error::Config(format!("unknown intensity averaging `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionSeries {
    pub epsilon: f64,
    pub ch: Vec<u8>,
    pub cs: Vec<f64>,
    pub r: Vec<f64>,
    pub avg_ratio: f64,
    pub avg_intensity: f64,
    /// False when no interval competed, in which case `r` is all zeros.
    pub any_competition: bool,
}

impl CompetitionSeries {
    pub fn compute(deltas: &DeltaSeries, epsilon: f64) -> Self {
        Self::compute_with(deltas, epsilon, IntensityAveraging::AllIntervals)
    }

    pub fn compute_with(deltas: &DeltaSeries, epsilon: f64, averaging: IntensityAveraging) -> Self {
        let (ch, cs): (Vec<u8>, Vec<f64>) = deltas
            .dtr
            .iter()
            .zip(&deltas.dtl)
            .map(|(&tr, &tl)| (u8::from(competition_flag(tr, tl, epsilon)), intensity(tr, tl, epsilon)))
            .unzip();
        let n = ch.len() as f64;
        let hits = ch.iter().filter(|&&c| c == 1).count();
        let total: f64 = cs.iter().sum();
        let avg_intensity = match averaging {
            IntensityAveraging::AllIntervals => total / n,
            IntensityAveraging::CompetitiveOnly if hits == 0 => 0.0,
            IntensityAveraging::CompetitiveOnly => total / hits as f64,
        };
        Self {
            epsilon,
            r: cumulative(&cs),
            avg_ratio: hits as f64 / n,
            avg_intensity,
            any_competition: hits > 0,
            ch,
            cs,
        }
    }
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "pearson over unequal lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 points, have {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One model's row in the correlation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub avg_ratio: f64,
    pub avg_intensity: f64,
    pub final_gold_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<ModelSummary>,
    /// Pearson r between average intensity and final gold accuracy.
    pub pearson: f64,
}

pub fn summarize(rows: Vec<ModelSummary>) -> Result<CorrelationReport> {
    if rows.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 models, have {}",
            rows.len()
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.avg_intensity).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.final_gold_acc).collect();
    let pearson = pearson(&xs, &ys)?;
    Ok(CorrelationReport { rows, pearson })
}

/// Share of competitive intervals on which gold-setting accuracy rose.
///
/// `gold_deltas[i]` must be aligned with `series.ch[i]`. Returns `None`
/// when no interval competed.
pub fn gold_gain_given_competition(series: &CompetitionSeries, gold_deltas: &[f64]) -> Option<f64> {
    let (hits, gains) = series
        .ch
        .iter()
        .zip(gold_deltas)
        .filter(|(c, _)| **c == 1)
        .fold((0usize, 0usize), |(h, g), (_, d)| (h + 1, g + usize::from(*d > 0.0)));
    (hits > 0).then(|| gains as f64 / hits as f64)
}
