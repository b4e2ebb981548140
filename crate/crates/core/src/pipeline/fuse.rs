use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::build::BundleManifest;
use super::config::RunConfig;
use super::{fmt_f64, list_files, pretty_json, read_bundles, read_logs, write_bytes};
use crate::demo::{LabelMap, PromptBundle, SettingKind, Split};
use crate::error::{Error, Result};
use crate::fusion::{pair_cases, run_fusion_eval, select_checkpoints, FusionEval, FusionMode, FusionPlan};
use crate::score_log::{build_trajectories, find, ProbRecord, Trajectory};

/// One row of the comparison table: accuracy per dataset plus the average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionRow {
    pub name: String,
    pub per_dataset: Vec<Option<f64>>,
    pub average: Option<f64>,
}

impl FusionRow {
    fn new(name: String, per_dataset: Vec<Option<f64>>) -> Self {
        let average = per_dataset
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            name,
            per_dataset,
            average,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuseOutput {
    pub datasets: Vec<String>,
    pub rows: Vec<FusionRow>,
    pub plans: Vec<FusionPlan>,
    pub evals: Vec<(String, FusionMode, FusionEval)>,
    pub files: Vec<PathBuf>,
}

impl FuseOutput {
    pub fn row(&self, name: &str) -> Option<&FusionRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn eval(&self, dataset: &str, mode: FusionMode) -> Option<&FusionEval> {
        self.evals
            .iter()
            .find(|(d, m, _)| d == dataset && *m == mode)
            .map(|(_, _, e)| e)
    }
}

pub fn fusion_row_name(mode: FusionMode) -> String {
    format!("fusion ({mode})")
}

fn pick_model(given: &Option<String>, models: &BTreeSet<String>, role: &str) -> Result<String> {
    match given {
        Some(m) if models.contains(m) => Ok(m.clone()),
        Some(m) => Err(Error::Coverage(format!(
            "{role} model `{m}` has no records in the logs"
        ))),
        None if models.len() == 1 => Ok(models.iter().next().cloned().unwrap_or_default()),
        None => Err(Error::Config(format!(
            "logs hold {} models; choose the {role} model explicitly",
            models.len()
        ))),
    }
}

type QueryKey = (String, u64, String);

fn final_accuracy(pool: &[Trajectory], model: &str, dataset: &str, setting: SettingKind) -> Option<f64> {
    find(pool, model, dataset, setting)
        .and_then(|t| t.last())
        .map(|p| p.accuracy)
}

/// Selects TR/TL checkpoints on the dev split, freezes fixed and adaptive
/// plans, and evaluates them on the evaluation split against the single
/// checkpoints. Writes `table.csv`, `plans.json`, and per-dataset prediction
/// CSVs under the fusion directory.
pub fn cmd_fuse(log_paths: &[PathBuf], bundle_dir: &Path, cfg: &RunConfig) -> Result<FuseOutput> {
    cfg.validate()?;
    let manifest = BundleManifest::read(bundle_dir)?;
    let mut bundles: Vec<PromptBundle> = Vec::new();
    for f in list_files(bundle_dir, "jsonl")? {
        bundles.extend(read_bundles(&f)?);
    }
    let split_of: BTreeMap<QueryKey, Split> = bundles
        .iter()
        .map(|b| ((b.dataset.clone(), b.seed, b.query_id.clone()), b.split))
        .collect();

    let all_records = read_logs(log_paths)?;
    let records = cfg.checkpoints.apply(&all_records);
    let classify = |r: &ProbRecord| {
        r.split
            .or_else(|| split_of.get(&(r.dataset.clone(), r.seed, r.query_id.clone())).copied())
    };
    let models: BTreeSet<String> = records.iter().map(|r| r.model.clone()).collect();
    let tr_model = pick_model(&cfg.fusion.tr_model, &models, "TR")?;
    let tl_model = pick_model(&cfg.fusion.tl_model, &models, "TL")?;
    let involved = |r: &&&ProbRecord| r.model == tr_model || r.model == tl_model;

    let dev: Vec<&ProbRecord> = records
        .iter()
        .filter(involved)
        .filter(|r| classify(r) == Some(Split::Dev))
        .copied()
        .collect();
    let eval: Vec<&ProbRecord> = records
        .iter()
        .filter(involved)
        .filter(|r| classify(r) == Some(cfg.eval_split))
        .copied()
        .collect();
    let dev_pool = build_trajectories(dev.iter().copied())?.seed_averaged();
    let eval_pool = build_trajectories(eval.iter().copied())?.seed_averaged();
    let eval_owned: Vec<ProbRecord> = eval.iter().map(|r| (*r).clone()).collect();

    let (tr_setting, tl_setting) = if cfg.fusion.gold_gold {
        (SettingKind::Gold, SettingKind::Gold)
    } else {
        (SettingKind::Random, SettingKind::Abstract)
    };

    let datasets: Vec<String> = manifest.datasets.iter().map(|d| d.name.clone()).collect();
    let mut plans = Vec::new();
    let mut evals = Vec::new();
    let mut gold_tr = Vec::new();
    let mut gold_tl = Vec::new();
    let mut single_tr = Vec::new();
    let mut single_tl = Vec::new();
    let mut fused: BTreeMap<FusionMode, Vec<Option<f64>>> = BTreeMap::new();
    let mut files = Vec::new();
    let dir = cfg.fusion_dir();

    for entry in &manifest.datasets {
        let ds = entry.name.as_str();
        let tr_dev = find(&dev_pool, &tr_model, ds, SettingKind::Random);
        let tl_dev = find(&dev_pool, &tl_model, ds, SettingKind::Abstract);
        if tr_dev.is_none() {
            return Err(Error::Coverage(format!(
                "no random-setting dev records for TR model `{tr_model}` on `{ds}`"
            )));
        }
        if tl_dev.is_none() {
            return Err(Error::Coverage(format!(
                "no abstract-setting dev records for TL model `{tl_model}` on `{ds}`"
            )));
        }
        let (tr_choice, tl_choice) = select_checkpoints(tr_dev, tl_dev)?;

        let queries: BTreeMap<(u64, String), (Option<LabelMap>, String)> = bundles
            .iter()
            .filter(|b| b.dataset == ds && b.split == cfg.eval_split && b.setting == tl_setting)
            .map(|b| {
                let gold = b
                    .original_label(&b.gold_answer)
                    .ok_or_else(|| Error::Mapping(format!("{}: gold answer has no label", b.query_id)))?
                    .to_string();
                Ok(((b.seed, b.query_id.clone()), (b.label_map.clone(), gold)))
            })
            .collect::<Result<_>>()?;
        if queries.is_empty() {
            return Err(Error::Coverage(format!(
                "no {tl_setting}-setting {} bundles for `{ds}`",
                cfg.eval_split.as_str()
            )));
        }

        let mut tr_alone = None;
        let mut tl_alone = None;
        for &mode in &cfg.fusion.modes {
            let mut plan = FusionPlan::new(ds, tr_choice.clone(), tl_choice.clone(), &entry.labels, mode);
            if cfg.fusion.gold_gold {
                plan = plan.gold_gold();
            }
            let cases = pair_cases(&plan, &eval_owned, &eval_owned, &queries)?;
            let result = run_fusion_eval(&plan, &cases, &entry.labels)?;
            tr_alone = Some(result.tr_accuracy);
            tl_alone = Some(result.tl_accuracy);
            fused.entry(mode).or_default().push(Some(result.accuracy));

            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "dataset",
                "seed",
                "query_id",
                "mixed_probs",
                "predicted",
                "gold",
                "correct",
            ])?;
            for row in &result.predictions {
                w.write_record([
                    ds.to_string(),
                    row.seed.to_string(),
                    row.prediction.query_id.clone(),
                    probs_json(&row.prediction.mixed_probs)?,
                    row.prediction.predicted.clone(),
                    row.gold.clone(),
                    row.correct.to_string(),
                ])?;
            }
            let path = dir.join("predictions").join(format!("{ds}.{mode}.csv"));
            write_bytes(&path, &w.into_inner().map_err(|e| Error::Contract(e.to_string()))?)?;
            files.push(path);

            plans.push(plan);
            evals.push((ds.to_string(), mode, result));
        }
        single_tr.push(tr_alone);
        single_tl.push(tl_alone);
        gold_tr.push(final_accuracy(&eval_pool, &tr_model, ds, SettingKind::Gold));
        gold_tl.push(final_accuracy(&eval_pool, &tl_model, ds, SettingKind::Gold));
    }

    let mut rows = Vec::new();
    if gold_tr.iter().any(Option::is_some) {
        rows.push(FusionRow::new(format!("{tr_model} gold (final)"), gold_tr));
    }
    if tl_model != tr_model && gold_tl.iter().any(Option::is_some) {
        rows.push(FusionRow::new(format!("{tl_model} gold (final)"), gold_tl));
    }
    rows.push(FusionRow::new(format!("TR {tr_model} {tr_setting} (best)"), single_tr));
    rows.push(FusionRow::new(format!("TL {tl_model} {tl_setting} (best)"), single_tl));
    for &mode in &cfg.fusion.modes {
        rows.push(FusionRow::new(
            fusion_row_name(mode),
            fused.remove(&mode).unwrap_or_default(),
        ));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    header.extend(datasets.iter().cloned());
    header.push("average".into());
    w.write_record(&header)?;
    for row in &rows {
        let mut rec = vec![row.name.clone()];
        rec.extend(row.per_dataset.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        rec.push(row.average.map(fmt_f64).unwrap_or_default());
        w.write_record(&rec)?;
    }
    let table = dir.join("table.csv");
    write_bytes(&table, &w.into_inner().map_err(|e| Error::Contract(e.to_string()))?)?;
    files.push(table);
    let plans_path = dir.join("plans.json");
    write_bytes(&plans_path, &pretty_json(&plans)?)?;
    files.push(plans_path);

    Ok(FuseOutput {
        datasets,
        rows,
        plans,
        evals,
        files,
    })
}

fn probs_json(probs: &[(String, f64)]) -> Result<String> {
    let map: serde_json::Map<String, serde_json::Value> = probs
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::from(*v)))
        .collect();
    Ok(serde_json::to_string(&map)?)
}

/// Plain-text rendering of the comparison table, accuracies in percent.
pub fn render_table(datasets: &[String], rows: &[FusionRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}", "row");
    for d in datasets {
        out.push_str(&format!(" | {:>8}", truncate(d, 8)));
    }
    out.push_str(" |  average\n");
    for r in rows {
        out.push_str(&format!("{:<width$}", r.name));
        for v in &r.per_dataset {
            out.push_str(&format!(" | {:>8}", pct(*v)));
        }
        out.push_str(&format!(" | {:>8}\n", pct(r.average)));
    }
    out
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "-".into())
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
