use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::{fmt_f64, pretty_json, read_logs, write_bytes};
use crate::demo::SettingKind;
use crate::error::{Error, Result};
use crate::metrics::{self, CompetitionSeries, CorrelationReport, ModelSummary};
use crate::score_log::{build_trajectories, find, Trajectory, ALL_DATASETS};

pub const METRICS_HEADER: [&str; 12] = [
    "model", "dataset", "i", "step", "dtr", "dtl", "ch", "cs", "r_cum", "acc_rand", "acc_abs", "acc_gold",
];
pub const SUMMARY_HEADER: [&str; 4] = ["model", "avg_ratio", "avg_intensity", "final_gold_acc"];

/// One interval of one (model, dataset) series. Accuracies are those of the
/// checkpoint that closes the interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub i: usize,
    pub step: u64,
    pub dtr: f64,
    pub dtl: f64,
    pub ch: u8,
    pub cs: f64,
    pub r_cum: f64,
    pub acc_rand: f64,
    pub acc_abs: f64,
    pub acc_gold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub avg_ratio: f64,
    pub avg_intensity: f64,
    pub final_gold_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesEntry {
    pub model: String,
    pub dataset: String,
    pub steps: Vec<u64>,
    pub acc_gold: Option<Vec<f64>>,
    pub acc_random: Vec<f64>,
    pub acc_abstract: Vec<f64>,
    pub interval_steps: Vec<u64>,
    pub ch: Vec<u8>,
    pub cs: Vec<f64>,
    pub r_cum: Vec<f64>,
    pub avg_ratio: f64,
    pub avg_intensity: f64,
    /// False when no interval competed; `r_cum` is then all zeros.
    pub any_competition: bool,
    pub gold_gain_given_competition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOutput {
    pub epsilon: f64,
    pub intensity_averaging: metrics::IntensityAveraging,
    pub models: Vec<SummaryRow>,
    pub pearson: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MetricsOutput {
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    pub series: Vec<SeriesEntry>,
    pub correlation: CorrelationOutput,
    pub files: Vec<PathBuf>,
}

struct SeriesResult {
    rows: Vec<MetricRow>,
    entry: SeriesEntry,
}

fn analyse_series(model: &str, dataset: &str, pool: &[Trajectory], cfg: &RunConfig) -> Result<SeriesResult> {
    let get = |setting: SettingKind| find(pool, model, dataset, setting);
    let missing = |setting: SettingKind| Error::Coverage(format!("{model}/{dataset}: no {setting}-setting records"));
    let tr = get(SettingKind::Random).ok_or_else(|| missing(SettingKind::Random))?;
    let tl = get(SettingKind::Abstract).ok_or_else(|| missing(SettingKind::Abstract))?;
    let gold = get(SettingKind::Gold);

    let deltas = metrics::deltas(tr, tl)?;
    let series = CompetitionSeries::compute_with(&deltas, cfg.epsilon, cfg.intensity_averaging);
    let gold_accs = gold.map(Trajectory::accuracies);
    if gold.is_some_and(|g| g.steps() != tr.steps()) {
        return Err(Error::Alignment(vec![format!(
            "{model}/{dataset}: gold checkpoints differ"
        )]));
    }
    let gold_deltas: Option<Vec<f64>> = gold_accs.as_ref().map(|a| a.windows(2).map(|w| w[1] - w[0]).collect());

    let rows = (0..deltas.len())
        .map(|i| MetricRow {
            model: model.to_string(),
            dataset: dataset.to_string(),
            i: i + 1,
            step: deltas.steps[i],
            dtr: deltas.dtr[i],
            dtl: deltas.dtl[i],
            ch: series.ch[i],
            cs: series.cs[i],
            r_cum: series.r[i],
            acc_rand: tr.points[i + 1].accuracy,
            acc_abs: tl.points[i + 1].accuracy,
            acc_gold: gold_accs.as_ref().map(|a| a[i + 1]),
        })
        .collect();
    let entry = SeriesEntry {
        model: model.to_string(),
        dataset: dataset.to_string(),
        steps: tr.steps(),
        acc_gold: gold_accs,
        acc_random: tr.accuracies(),
        acc_abstract: tl.accuracies(),
        interval_steps: deltas.steps.clone(),
        gold_gain_given_competition: gold_deltas
            .as_deref()
            .and_then(|d| metrics::gold_gain_given_competition(&series, d)),
        ch: series.ch,
        cs: series.cs,
        r_cum: series.r,
        avg_ratio: series.avg_ratio,
        avg_intensity: series.avg_intensity,
        any_competition: series.any_competition,
    };
    Ok(SeriesResult { rows, entry })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn metrics_csv(rows: &[MetricRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.clone(),
            r.i.to_string(),
            r.step.to_string(),
            fmt_f64(r.dtr),
            fmt_f64(r.dtl),
            r.ch.to_string(),
            fmt_f64(r.cs),
            fmt_f64(r.r_cum),
            fmt_f64(r.acc_rand),
            fmt_f64(r.acc_abs),
            opt(r.acc_gold),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Contract(e.to_string()))
}

fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            fmt_f64(r.avg_ratio),
            fmt_f64(r.avg_intensity),
            opt(r.final_gold_acc),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Contract(e.to_string()))
}

fn correlation(summary: &[SummaryRow], cfg: &RunConfig) -> CorrelationOutput {
    let with_gold: Vec<ModelSummary> = summary
        .iter()
        .filter_map(|s| {
            s.final_gold_acc.map(|acc| ModelSummary {
                model: s.model.clone(),
                avg_ratio: s.avg_ratio,
                avg_intensity: s.avg_intensity,
                final_gold_acc: acc,
            })
        })
        .collect();
    let (pearson, note) = match metrics::summarize(with_gold) {
        Ok(CorrelationReport { pearson, .. }) => (Some(pearson), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CorrelationOutput {
        epsilon: cfg.epsilon,
        intensity_averaging: cfg.intensity_averaging,
        models: summary.to_vec(),
        pearson,
        note,
    }
}

/// Computes competition metrics from probability logs and writes
/// `metrics.csv`, `summary.csv`, `correlation.json`, and `plot_series.json`
/// under the metrics directory.
///
/// Series are computed per (model, dataset) on seed-averaged trajectories
/// and per model on the dataset average (dataset `ALL`); the summary uses
/// the `ALL` series.
pub fn cmd_metrics(log_paths: &[PathBuf], cfg: &RunConfig) -> Result<MetricsOutput> {
    cfg.validate()?;
    let records = read_logs(log_paths)?;
    let in_split: Vec<_> = records
        .into_iter()
        .filter(|r| r.split.is_none_or(|s| s == cfg.eval_split))
        .collect();
    let kept = cfg.checkpoints.apply(&in_split);
    if kept.is_empty() {
        return Err(Error::Coverage(format!(
            "no records for the {} split after checkpoint filtering",
            cfg.eval_split.as_str()
        )));
    }
    let set = build_trajectories(kept)?;
    let seeded = set.seed_averaged();
    let averaged = set.dataset_averaged();

    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut summary = Vec::new();
    for model in set.models() {
        let datasets: BTreeSet<&str> = seeded
            .iter()
            .filter(|t| t.model == model)
            .map(|t| t.dataset.as_str())
            .collect();
        for dataset in datasets {
            let res = analyse_series(&model, dataset, &seeded, cfg)?;
            rows.extend(res.rows);
            series.push(res.entry);
        }
        let res = analyse_series(&model, ALL_DATASETS, &averaged, cfg)?;
        summary.push(SummaryRow {
            model: model.clone(),
            avg_ratio: res.entry.avg_ratio,
            avg_intensity: res.entry.avg_intensity,
            final_gold_acc: res.entry.acc_gold.as_ref().and_then(|a| a.last().copied()),
        });
        rows.extend(res.rows);
        series.push(res.entry);
    }

    let dir = cfg.metrics_dir();
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_bytes(&path, &bytes)?;
        files.push(path);
        Ok(())
    };
    emit("metrics.csv", metrics_csv(&rows)?)?;
    emit("summary.csv", summary_csv(&summary)?)?;
    let corr = correlation(&summary, cfg);
    emit("correlation.json", pretty_json(&corr)?)?;
    emit("plot_series.json", pretty_json(&series)?)?;

    if cfg.per_seed_metrics {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model", "dataset", "seed", "i", "step", "dtr", "dtl", "ch", "cs", "r_cum",
        ])?;
        let seeds: BTreeSet<(String, String, u64)> = set
            .per_seed
            .iter()
            .filter_map(|t| t.seed.map(|s| (t.model.clone(), t.dataset.clone(), s)))
            .collect();
        for (model, dataset, seed) in seeds {
            let pick = |setting| {
                set.per_seed
                    .iter()
                    .find(|t| t.model == model && t.dataset == dataset && t.seed == Some(seed) && t.setting == setting)
            };
            let (Some(tr), Some(tl)) = (pick(SettingKind::Random), pick(SettingKind::Abstract)) else {
                continue;
            };
            let d = metrics::deltas(tr, tl)?;
            let s = CompetitionSeries::compute_with(&d, cfg.epsilon, cfg.intensity_averaging);
            for i in 0..d.len() {
                w.write_record([
                    model.clone(),
                    dataset.clone(),
                    seed.to_string(),
                    (i + 1).to_string(),
                    d.steps[i].to_string(),
                    fmt_f64(d.dtr[i]),
                    fmt_f64(d.dtl[i]),
                    s.ch[i].to_string(),
                    fmt_f64(s.cs[i]),
                    fmt_f64(s.r[i]),
                ])?;
            }
        }
        emit(
            "metrics_per_seed.csv",
            w.into_inner().map_err(|e| Error::Contract(e.to_string()))?,
        )?;
    }

    Ok(MetricsOutput {
        rows,
        summary,
        series,
        correlation: corr,
        files,
    })
}
