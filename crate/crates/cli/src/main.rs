use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use duality_core::demo::DemoMode;
use duality_core::metrics::IntensityAveraging;
use duality_core::pipeline::{self, MockSuite, RunConfig};
use duality_core::{AbstractPool, FusionMode, SettingKind, Split};

#[derive(Parser, Debug)]
#[command(
    name = "duality",
    version,
    about = "Task recognition vs task learning competition across checkpoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build prompt bundles for every (dataset, setting, seed).
    Build(RunArgs),
    /// Score bundles with synthetic mock models and write probability logs.
    MockScore {
        /// Mock suite file (TOML or JSON) with a `models` list.
        #[arg(long)]
        specs: PathBuf,
        /// Bundle directory; defaults to `<out>/bundles`.
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute competition metrics from probability logs.
    Metrics {
        /// Log files or directories of `.jsonl` logs; defaults to `<out>/logs`.
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fuse the best TR and TL checkpoints and compare against single checkpoints.
    Fuse {
        /// Log files or directories of `.jsonl` logs; defaults to `<out>/logs`.
        #[arg(long, num_args = 1..)]
        logs: Vec<PathBuf>,
        /// Bundle directory; defaults to `<out>/bundles`.
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render a text report from metrics and fusion outputs.
    Report(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Run configuration (TOML or JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file (`.jsonl` or `.csv`); repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Demonstrations per prompt.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<SettingKind>>,
    /// Minimum delta magnitude for competition.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Keep only these checkpoint steps.
    #[arg(long, value_delimiter = ',')]
    checkpoint_steps: Option<Vec<u64>>,
    /// Keep this many evenly spaced checkpoints per model.
    #[arg(long)]
    checkpoint_count: Option<usize>,
    #[arg(long)]
    abstract_pool: Option<AbstractPool>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    test_n: Option<usize>,
    #[arg(long)]
    dev_n: Option<usize>,
    /// `shared` or `per_example`.
    #[arg(long)]
    demo_mode: Option<DemoMode>,
    /// `dev` or `test`.
    #[arg(long)]
    eval_split: Option<Split>,
    /// `all_intervals` or `competitive_only`.
    #[arg(long)]
    intensity_averaging: Option<IntensityAveraging>,
    /// Also write per-seed metrics.
    #[arg(long)]
    per_seed: bool,
    #[arg(long)]
    tr_model: Option<String>,
    #[arg(long)]
    tl_model: Option<String>,
    /// Use gold-setting distributions for both fused checkpoints.
    #[arg(long)]
    gold_gold: bool,
    #[arg(long, value_delimiter = ',')]
    fusion_modes: Option<Vec<FusionMode>>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if !self.datasets.is_empty() {
            cfg.datasets = self.datasets;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(seeds) = self.seeds {
            cfg.seeds = seeds;
        }
        if let Some(settings) = self.settings {
            cfg.settings = settings;
        }
        if let Some(epsilon) = self.epsilon {
            cfg.epsilon = epsilon;
        }
        if let Some(steps) = self.checkpoint_steps {
            cfg.checkpoints.steps = Some(steps);
        }
        if let Some(count) = self.checkpoint_count {
            cfg.checkpoints.count = Some(count);
        }
        if let Some(pool) = self.abstract_pool {
            cfg.abstract_pool = pool;
        }
        if let Some(out) = self.out {
            cfg.output_dir = out;
        }
        if let Some(n) = self.test_n {
            cfg.test_n = n;
        }
        if let Some(n) = self.dev_n {
            cfg.dev_n = n;
        }
        if let Some(mode) = self.demo_mode {
            cfg.demo_mode = mode;
        }
        if let Some(split) = self.eval_split {
            cfg.eval_split = split;
        }
        if let Some(avg) = self.intensity_averaging {
            cfg.intensity_averaging = avg;
        }
        cfg.per_seed_metrics |= self.per_seed;
        if self.tr_model.is_some() {
            cfg.fusion.tr_model = self.tr_model;
        }
        if self.tl_model.is_some() {
            cfg.fusion.tl_model = self.tl_model;
        }
        cfg.fusion.gold_gold |= self.gold_gold;
        if let Some(modes) = self.fusion_modes {
            cfg.fusion.modes = modes;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve_logs(given: Vec<PathBuf>, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let roots = if given.is_empty() { vec![cfg.log_dir()] } else { given };
    let mut out = Vec::new();
    for root in roots {
        if root.is_dir() {
            out.extend(pipeline::list_files(&root, "jsonl")?);
        } else {
            out.push(root);
        }
    }
    Ok(out)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(args) => {
            let cfg = args.resolve()?;
            let out = pipeline::cmd_build(&cfg)?;
            print_files(&out.files);
        }
        Command::MockScore { specs, bundles, run } => {
            let cfg = run.resolve()?;
            let suite = MockSuite::from_file(&specs)?;
            let dir = bundles.unwrap_or_else(|| cfg.bundle_dir());
            let files =
                pipeline::list_files(&dir, "jsonl").with_context(|| format!("listing bundles in {}", dir.display()))?;
            let logs = pipeline::cmd_mock_score(&files, &suite.models, &cfg.log_dir())?;
            print_files(&logs);
        }
        Command::Metrics { logs, run } => {
            let cfg = run.resolve()?;
            let logs = resolve_logs(logs, &cfg)?;
            let out = pipeline::cmd_metrics(&logs, &cfg)?;
            print_files(&out.files);
        }
        Command::Fuse { logs, bundles, run } => {
            let cfg = run.resolve()?;
            let logs = resolve_logs(logs, &cfg)?;
            let dir = bundles.unwrap_or_else(|| cfg.bundle_dir());
            let out = pipeline::cmd_fuse(&logs, &dir, &cfg)?;
            print_files(&out.files);
        }
        Command::Report(args) => {
            let cfg = args.resolve()?;
            print!("{}", pipeline::cmd_report(&cfg.output_dir)?);
        }
    }
    Ok(())
}

fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", e.render().to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<duality_core::Error>())
                .map_or("internal", duality_core::Error::kind);
            eprintln!("{}", error_json(kind, &describe(&e)));
            ExitCode::FAILURE
        }
    }
}
