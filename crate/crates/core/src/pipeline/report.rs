use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::analyze::{CorrelationOutput, SUMMARY_HEADER};
use super::fuse::{render_table, FusionRow};
use super::{fmt_f64, write_bytes};
use crate::error::{Error, Result};
use crate::metrics::IntensityAveraging;
use crate::score_log::ALL_DATASETS;

const CLOSURE_TOLERANCE: f64 = 1e-12;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Contract(format!("{what}: `{s}` is not a number")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    parse_opt(s, what)?.ok_or_else(|| Error::Contract(format!("{what}: missing value")))
}

struct Column<'a> {
    headers: &'a csv::StringRecord,
}

impl Column<'_> {
    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Contract(format!("missing column `{name}`")))
    }
}

#[derive(Default)]
struct Recomputed {
    ch_sum: f64,
    cs_sum: f64,
    n: usize,
    hits: usize,
    last_gold: Option<f64>,
}

/// Recomputes each model's summary values from the `ALL` rows of
/// `metrics.csv` and checks them against `summary.csv`. Returns the list of
/// mismatches, empty when the two files agree.
pub fn check_summary_closure(
    metrics_csv: &str,
    summary_csv: &str,
    averaging: IntensityAveraging,
) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(metrics_csv.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = Column { headers: &headers };
    let (model_i, ds_i, ch_i, cs_i, gold_i) = (
        col.index("model")?,
        col.index("dataset")?,
        col.index("ch")?,
        col.index("cs")?,
        col.index("acc_gold")?,
    );
    let mut per_model: BTreeMap<String, Recomputed> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if &rec[ds_i] != ALL_DATASETS {
            continue;
        }
        let acc = per_model.entry(rec[model_i].to_string()).or_default();
        let ch = parse_f64(&rec[ch_i], "ch")?;
        acc.ch_sum += ch;
        acc.cs_sum += parse_f64(&rec[cs_i], "cs")?;
        acc.n += 1;
        acc.hits += usize::from(ch == 1.0);
        acc.last_gold = parse_opt(&rec[gold_i], "acc_gold")?;
    }

    let mut rdr = csv::Reader::from_reader(summary_csv.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(SUMMARY_HEADER) {
        return Err(Error::Contract("summary.csv has unexpected columns".into()));
    }
    let mut problems = Vec::new();
    let mut seen = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let model = &rec[0];
        let Some(acc) = per_model.get(model) else {
            problems.push(format!("{model}: no {ALL_DATASETS} rows in metrics.csv"));
            continue;
        };
        seen += 1;
        let n = acc.n as f64;
        let intensity = match averaging {
            IntensityAveraging::AllIntervals => acc.cs_sum / n,
            IntensityAveraging::CompetitiveOnly if acc.hits == 0 => 0.0,
            IntensityAveraging::CompetitiveOnly => acc.cs_sum / acc.hits as f64,
        };
        let mut compare = |name: &str, expected: Option<f64>, stated: Option<f64>| match (expected, stated) {
            (Some(e), Some(s)) if (e - s).abs() <= CLOSURE_TOLERANCE => {}
            (None, None) => {}
            _ => problems.push(format!(
                "{model}: {name} is {} in summary.csv but {} from metrics.csv",
                stated.map(fmt_f64).unwrap_or_else(|| "empty".into()),
                expected.map(fmt_f64).unwrap_or_else(|| "empty".into()),
            )),
        };
        compare("avg_ratio", Some(acc.ch_sum / n), parse_opt(&rec[1], "avg_ratio")?);
        compare("avg_intensity", Some(intensity), parse_opt(&rec[2], "avg_intensity")?);
        compare("final_gold_acc", acc.last_gold, parse_opt(&rec[3], "final_gold_acc")?);
    }
    if seen != per_model.len() {
        problems.push(format!(
            "metrics.csv covers {} models but summary.csv lists {seen}",
            per_model.len()
        ));
    }
    Ok(problems)
}

fn read_fusion_table(path: &Path) -> Result<(Vec<String>, Vec<FusionRow>)> {
    let text = read_text(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Contract(format!("{}: too few columns", path.display())));
    }
    let datasets: Vec<String> = headers
        .iter()
        .skip(1)
        .take(headers.len() - 2)
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| parse_opt(v, "table.csv"))
            .collect::<Result<Vec<_>>>()?;
        let (average, per_dataset) = values
            .split_last()
            .map(|(a, rest)| (*a, rest.to_vec()))
            .unwrap_or((None, Vec::new()));
        rows.push(FusionRow {
            name: rec[0].to_string(),
            per_dataset,
            average,
        });
    }
    Ok((datasets, rows))
}

/// Renders `report.txt` from the metrics and, when present, the fusion
/// outputs under `output_dir`. Fails if `summary.csv` does not agree with
/// `metrics.csv`.
pub fn cmd_report(output_dir: &Path) -> Result<String> {
    let metrics_dir = output_dir.join("metrics");
    let correlation: CorrelationOutput = {
        let path = metrics_dir.join("correlation.json");
        serde_json::from_str(&read_text(&path)?)?
    };
    let problems = check_summary_closure(
        &read_text(&metrics_dir.join("metrics.csv"))?,
        &read_text(&metrics_dir.join("summary.csv"))?,
        correlation.intensity_averaging,
    )?;
    if !problems.is_empty() {
        return Err(Error::Contract(format!(
            "summary does not match metrics: {}",
            problems.join("; ")
        )));
    }

    let mut out = String::from("Competition summary\n");
    out.push_str(&format!(
        "epsilon = {}, intensity averaged over {}\n\n",
        fmt_f64(correlation.epsilon),
        match correlation.intensity_averaging {
            IntensityAveraging::AllIntervals => "all intervals",
            IntensityAveraging::CompetitiveOnly => "competitive intervals",
        }
    ));
    let width = correlation
        .models
        .iter()
        .map(|m| m.model.len())
        .max()
        .unwrap_or(5)
        .max(5);
    out.push_str(&format!(
        "{:<width$} | {:>9} | {:>13} | {:>14}\n",
        "model", "avg_ratio", "avg_intensity", "final_gold_acc"
    ));
    for m in &correlation.models {
        out.push_str(&format!(
            "{:<width$} | {:>9.4} | {:>13.4} | {:>14}\n",
            m.model,
            m.avg_ratio,
            m.avg_intensity,
            m.final_gold_acc
                .map(|a| format!("{a:.4}"))
                .unwrap_or_else(|| "-".into())
        ));
    }
    match (correlation.pearson, &correlation.note) {
        (Some(r), _) => out.push_str(&format!("\npearson(avg_intensity, final_gold_acc) = {r:.4}\n")),
        (None, Some(note)) => out.push_str(&format!("\npearson(avg_intensity, final_gold_acc): {note}\n")),
        (None, None) => out.push_str("\npearson(avg_intensity, final_gold_acc) undefined\n"),
    }

    let table = output_dir.join("fusion").join("table.csv");
    if table.is_file() {
        let (datasets, rows) = read_fusion_table(&table)?;
        out.push_str("\nFusion accuracy (%)\n");
        out.push_str(&render_table(&datasets, &rows));
    }
    write_bytes(&output_dir.join("report.txt"), out.as_bytes())?;
    Ok(out)
}
