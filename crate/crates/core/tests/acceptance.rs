//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every check uses an independently written reference where one
//! applies.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use duality_core::corpus::{LabelSpace, LabeledExample};
use duality_core::demo::{BundleBuilder, DemoMode, Setting, Split, EXAMPLE_SEPARATOR, PAIR_JOIN};
use duality_core::fusion::{adaptive_weights, FusionMode};
use duality_core::metrics::{competition_flag, cumulative, intensity, pearson, CompetitionSeries, DeltaSeries};
use duality_core::pipeline::{self, RunConfig};
use duality_core::{rng, AbstractPool, SettingKind};
use rand::Rng;
use tempfile::tempdir;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

mod oracle {
    pub fn flag(dtr: f64, dtl: f64, eps: f64) -> bool {
        let opposite = (dtr > 0.0 && dtl < 0.0) || (dtr < 0.0 && dtl > 0.0);
        opposite && dtr.abs() > eps && dtl.abs() > eps
    }

    pub fn strength(dtr: f64, dtl: f64, eps: f64) -> f64 {
        if !flag(dtr, dtl, eps) {
            0.0
        } else if dtr < 0.0 {
            dtr.abs() / dtl.abs()
        } else {
            dtl.abs() / dtr.abs()
        }
    }

    pub fn running_share(cs: &[f64]) -> Vec<f64> {
        let total: f64 = cs.iter().sum();
        (0..cs.len())
            .map(|i| {
                if total == 0.0 {
                    0.0
                } else {
                    cs[..=i].iter().sum::<f64>() / total
                }
            })
            .collect()
    }

    pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
    }
}

fn random_delta<R: Rng>(r: &mut R, eps: f64) -> f64 {
    match r.random_range(0..10) {
        0 => 0.0,
        1 => eps,
        2 => -eps,
        _ => r.random_range(-0.2..0.2),
    }
}

fn metric_oracle_equivalence() -> Check {
    const EPS: f64 = 0.01;
    let started = Instant::now();
    let mut r = rng::stream(7, &["acceptance", "deltas"]);
    let mut competitive = 0;
    for series_ix in 0..1000 {
        let dtr: Vec<f64> = (0..16).map(|_| random_delta(&mut r, EPS)).collect();
        let dtl: Vec<f64> = (0..16).map(|_| random_delta(&mut r, EPS)).collect();
        let deltas = DeltaSeries::from_raw(dtr.clone(), dtl.clone()).map_err(|e| e.to_string())?;
        let got = CompetitionSeries::compute(&deltas, EPS);
        let cs: Vec<f64> = dtr
            .iter()
            .zip(&dtl)
            .map(|(&a, &b)| oracle::strength(a, b, EPS))
            .collect();
        let share = oracle::running_share(&cs);
        for i in 0..16 {
            let ch = u8::from(oracle::flag(dtr[i], dtl[i], EPS));
            competitive += usize::from(ch);
            ensure(got.ch[i] == ch, || {
                format!("series {series_ix} interval {i}: ch {} vs {ch}", got.ch[i])
            })?;
            ensure(close(got.cs[i], cs[i], 1e-12), || {
                format!("series {series_ix} interval {i}: cs {} vs {}", got.cs[i], cs[i])
            })?;
            ensure(close(got.r[i], share[i], 1e-12), || {
                format!("series {series_ix} interval {i}: R {} vs {}", got.r[i], share[i])
            })?;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed.as_secs_f64() < 5.0, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "1000 series x 16 intervals, {competitive} competitive, {elapsed:?}"
    ))
}

fn fixture_values() -> Check {
    ensure(competition_flag(0.05, -0.02, 0.01), || {
        "competition_flag(0.05, -0.02) != 1".into()
    })?;
    ensure(!competition_flag(0.05, -0.01, 0.01), || {
        "flag must be strict at epsilon".into()
    })?;
    let a = intensity(0.05, -0.02, 0.01);
    let b = intensity(-0.02, 0.05, 0.01);
    ensure(close(a, 0.4, 1e-15) && close(b, 0.4, 1e-15), || {
        format!("intensity {a}, {b}")
    })?;
    let r = cumulative(&[0.0, 0.4, 0.0, 0.6]);
    let want = [0.0, 0.4, 0.4, 1.0];
    ensure(r.iter().zip(want).all(|(x, y)| close(*x, y, 1e-15)), || {
        format!("cumulative {r:?}")
    })?;
    let (wr, wl) = adaptive_weights(0.6, 0.5, 0.25);
    ensure(close(wr, 0.5833, 1e-4) && close(wl, 0.4167, 1e-4), || {
        format!("weights ({wr}, {wl})")
    })?;
    Ok(format!("intensity 0.4/0.4, weights ({wr:.4}, {wl:.4})"))
}

fn pearson_correctness() -> Check {
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
    let up: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.5).collect();
    let down: Vec<f64> = x.iter().map(|v| -0.25 * v + 4.0).collect();
    let r_up = pearson(&x, &up).map_err(|e| e.to_string())?;
    let r_down = pearson(&x, &down).map_err(|e| e.to_string())?;
    ensure(close(r_up, 1.0, 1e-12), || format!("linear r = {r_up}"))?;
    ensure(close(r_down, -1.0, 1e-12), || format!("anti-linear r = {r_down}"))?;
    let mut r = rng::stream(11, &["acceptance", "pearson"]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(3..60);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.3 * v + r.random_range(0.0..1.0)).collect();
        let got = pearson(&a, &b).map_err(|e| e.to_string())?;
        let want = oracle::correlation(&a, &b);
        worst = worst.max((got - want).abs());
        ensure(close(got, want, 1e-10), || format!("n = {n}: {got} vs {want}"))?;
    }
    Ok(format!("+1/-1 exact, 100 random vectors, max diff {worst:.1e}"))
}

fn constructed_fusion_win() -> Check {
    let out = tempdir().map_err(|e| e.to_string())?;
    let mut cfg = small_config(out.path(), vec![]);
    cfg.settings = vec![SettingKind::Random, SettingKind::Abstract];
    cfg.fusion.tr_model = Some("tr".into());
    cfg.fusion.tl_model = Some("tl".into());
    write_balanced_bundles(&cfg, "sst2", &["neg", "pos"], (20, 50));
    let specs = [
        spec(
            "tr",
            3,
            vec![
                (SettingKind::Random, strong_on(&["pos"])),
                (SettingKind::Abstract, curve(0.5, 0.0, &[])),
            ],
        ),
        spec(
            "tl",
            3,
            vec![
                (SettingKind::Random, curve(0.5, 0.0, &[])),
                (SettingKind::Abstract, strong_on(&["neg"])),
            ],
        ),
    ];
    let files = pipeline::list_files(&cfg.bundle_dir(), "jsonl").map_err(|e| e.to_string())?;
    let logs = pipeline::cmd_mock_score(&files, &specs, &cfg.log_dir()).map_err(|e| e.to_string())?;
    let fused = pipeline::cmd_fuse(&logs, &cfg.bundle_dir(), &cfg).map_err(|e| e.to_string())?;
    let adaptive = fused.eval("sst2", FusionMode::Adaptive).ok_or("no adaptive result")?;
    ensure(adaptive.accuracy == 1.0, || {
        format!("adaptive accuracy {}", adaptive.accuracy)
    })?;
    ensure(adaptive.tr_accuracy == 0.5 && adaptive.tl_accuracy == 0.5, || {
        format!("single accuracies {} / {}", adaptive.tr_accuracy, adaptive.tl_accuracy)
    })?;

    let data = tempdir().map_err(|e| e.to_string())?;
    let out = tempdir().map_err(|e| e.to_string())?;
    let ds = write_dataset(data.path(), "trec", 240, &["a", "b", "c"]);
    let cfg = small_config(out.path(), vec![ds]);
    let model = spec(
        "m",
        4,
        vec![
            (SettingKind::Gold, curve(0.8, 0.0, &[])),
            (SettingKind::Random, curve(0.45, 0.3, &[])),
            (SettingKind::Abstract, curve(0.45, 0.3, &[])),
        ],
    );
    let logs = build_and_score(&cfg, &[model]);
    let fused = pipeline::cmd_fuse(&logs, &cfg.bundle_dir(), &cfg).map_err(|e| e.to_string())?;
    let fixed = fused.eval("trec", FusionMode::Fixed).ok_or("no fixed result")?;
    let adaptive = fused.eval("trec", FusionMode::Adaptive).ok_or("no adaptive result")?;
    ensure(fixed.predictions == adaptive.predictions, || {
        "fixed and adaptive predictions differ".into()
    })?;
    Ok(format!(
        "adaptive 1.0 vs singles 0.5; equal-accuracy case agrees on {} predictions",
        fixed.predictions.len()
    ))
}

fn end_to_end_determinism() -> Check {
    let data = tempdir().map_err(|e| e.to_string())?;
    let ds_a = write_dataset(data.path(), "sst2", 200, &["neg", "pos"]);
    let ds_b = write_dataset(data.path(), "agnews", 240, &["world", "sports", "business", "tech"]);
    let models = [
        spec(
            "small",
            9,
            vec![
                (SettingKind::Gold, curve(0.5, 0.3, &[])),
                (SettingKind::Random, curve(0.4, 0.3, &[(4, 0.1)])),
                (SettingKind::Abstract, curve(0.6, 0.1, &[(4, -0.1)])),
            ],
        ),
        spec(
            "large",
            9,
            vec![
                (SettingKind::Gold, curve(0.6, 0.3, &[])),
                (SettingKind::Random, curve(0.5, 0.2, &[(2, -0.1)])),
                (SettingKind::Abstract, curve(0.5, 0.2, &[(2, 0.1)])),
            ],
        ),
    ];
    let run = |dir: &std::path::Path| -> Result<_, String> {
        let mut cfg = small_config(dir, vec![ds_a.clone(), ds_b.clone()]);
        cfg.fusion.tr_model = Some("large".into());
        cfg.fusion.tl_model = Some("small".into());
        let logs = build_and_score(&cfg, &models);
        pipeline::cmd_metrics(&logs, &cfg).map_err(|e| e.to_string())?;
        pipeline::cmd_fuse(&logs, &cfg.bundle_dir(), &cfg).map_err(|e| e.to_string())?;
        Ok(snapshot(dir))
    };
    let a = tempdir().map_err(|e| e.to_string())?;
    let b = tempdir().map_err(|e| e.to_string())?;
    let first = run(a.path())?;
    let second = run(b.path())?;
    ensure(first == second, || {
        let diff: Vec<_> = first
            .iter()
            .filter(|(k, v)| second.get(*k) != Some(*v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        format!("differing files: {diff:?}")
    })?;
    let bytes: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", first.len()))
}

fn template_conformance() -> Check {
    let labels = LabelSpace::new(vec!["neg".into(), "neutral".into(), "pos".into()]).map_err(|e| e.to_string())?;
    let mut r = rng::stream(3, &["acceptance", "template"]);
    let word = |r: &mut rand_chacha::ChaCha8Rng| -> String {
        let words = [
            "the", "film", "was", "great", "dull", "a", "plot", "twist", "ending", "cast",
        ];
        (0..r.random_range(1..12))
            .map(|_| words[r.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let pool: Vec<LabeledExample> = (0..64)
        .map(|i| LabeledExample {
            id: format!("t{i}"),
            input: word(&mut r),
            label: labels.labels()[r.random_range(0..3)].clone(),
        })
        .collect();
    let mut checked = 0;
    for round in 0..100u64 {
        let k = r.random_range(0..=16);
        let kind = SettingKind::ALL[round as usize % 3];
        let setting = Setting::from_kind(kind, AbstractPool::ALL[round as usize % 3]);
        let queries: Vec<LabeledExample> = (0..100)
            .map(|i| LabeledExample {
                id: format!("q{round}-{i}"),
                input: word(&mut r),
                label: labels.labels()[i % 3].clone(),
            })
            .collect();
        let builder = BundleBuilder {
            dataset: "tmpl",
            label_space: &labels,
            train_pool: &pool,
            k,
            seed: round,
            mode: DemoMode::PerExample,
        };
        for b in builder
            .build(&queries, Split::Test, setting)
            .map_err(|e| e.to_string())?
        {
            checked += 1;
            let seps = b.prompt.matches(EXAMPLE_SEPARATOR).count();
            ensure(seps == k, || format!("{}: {seps} separators for k = {k}", b.query_id))?;
            let blocks: Vec<&str> = b.prompt.split(EXAMPLE_SEPARATOR).collect();
            let (query, demos) = blocks.split_last().ok_or("empty prompt")?;
            ensure(
                *query
                    == format!(
                        "{}{PAIR_JOIN}",
                        queries.iter().find(|q| q.id == b.query_id).unwrap().input
                    ),
                || format!("{}: query block {query:?}", b.query_id),
            )?;
            for (block, id) in demos.iter().zip(&b.demo_ids) {
                let demo = pool.iter().find(|d| &d.id == id).ok_or("unknown demo id")?;
                let parts: Vec<&str> = block.split(PAIR_JOIN).collect();
                ensure(parts.len() == 2 && parts[0] == demo.input, || {
                    format!("{}: block {block:?}", b.query_id)
                })?;
                let shown = parts[1];
                let expected_ok = match kind {
                    SettingKind::Gold => shown == demo.label,
                    SettingKind::Random => labels.contains(shown),
                    SettingKind::Abstract => b.label_map.as_ref().and_then(|m| m.forward(&demo.label)) == Some(shown),
                };
                ensure(expected_ok, || format!("{}: label {shown:?} under {kind}", b.query_id))?;
            }
        }
    }
    ensure(checked == 10_000, || format!("checked {checked} bundles"))?;
    Ok(format!("{checked} bundles, k in 0..=16, all settings"))
}

fn mock_competition_detection() -> Check {
    let data = tempdir().map_err(|e| e.to_string())?;
    let out = tempdir().map_err(|e| e.to_string())?;
    let ds = write_dataset(data.path(), "sst2", 200, &["neg", "pos"]);
    let cfg = RunConfig {
        test_n: 100,
        ..small_config(out.path(), vec![ds])
    };
    let bursts = [3usize, 7, 12];
    let model = spec(
        "bursty",
        17,
        vec![
            (SettingKind::Gold, curve(0.6, 0.2, &[])),
            (SettingKind::Random, curve(0.5, 0.0, &[(3, 0.1), (7, -0.05), (12, 0.2)])),
            (
                SettingKind::Abstract,
                curve(0.5, 0.0, &[(3, -0.1), (7, 0.15), (12, -0.1)]),
            ),
        ],
    );
    let logs = build_and_score(&cfg, &[model]);
    let metrics = pipeline::cmd_metrics(&logs, &cfg).map_err(|e| e.to_string())?;
    for dataset in ["sst2", "ALL"] {
        let rows: Vec<_> = metrics.rows.iter().filter(|r| r.dataset == dataset).collect();
        ensure(rows.len() == 16, || format!("{dataset}: {} intervals", rows.len()))?;
        for row in rows {
            let want = u8::from(bursts.contains(&row.i));
            ensure(row.ch == want, || {
                format!("{dataset} interval {}: ch = {}", row.i, row.ch)
            })?;
        }
    }
    let ratio = metrics.summary[0].avg_ratio;
    ensure(ratio == bursts.len() as f64 / 16.0, || format!("avg_ratio {ratio}"))?;
    Ok(format!("ch = 1 at intervals {bursts:?} only, avg_ratio = {ratio}"))
}

fn main() -> ExitCode {
    let checks: [Criterion; 7] = [
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("fixture values", fixture_values),
        ("pearson correctness", pearson_correctness),
        ("constructed fusion win", constructed_fusion_win),
        ("end-to-end determinism", end_to_end_determinism),
        ("template conformance", template_conformance),
        ("mock competition detection", mock_competition_detection),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
