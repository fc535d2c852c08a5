//! Command-line front end.
//!
//! Every subcommand reads its inputs, writes outputs under `--out-dir` and
//! records its resolved arguments in `<out-dir>/<command>.config.json`.
//! Exit status: 0 success, 1 invalid input or usage, 2 internal failure.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn, LevelFilter};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingError;
use crate::harness::{
    parse_predictions_tsv, regression_ready, render_rows, run_experiment, DataStore, ExperimentConfig,
    ExperimentResults, HarnessError, RunOptions,
};
use crate::manifest::{
    check_warnings, distribution_stats, load_manifest, tier_counts, ManifestError, RecipeInstance, NUTRIENTS,
};
use crate::nn::ModelError;
use crate::rng::GENERATOR_NAME;
use crate::sampling::{
    eval_event_f1, load_stream, plan_for, select_dish_frame, SamplingError, SamplingPlan, Strategy, StrategyKind,
    DEFAULT_TOLERANCE_S,
};
use crate::synthetic::{gen_benchmark, write_benchmark, SyntheticError, SyntheticSpec};

const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser, Serialize)]
#[command(name = "procnutri", version, about = "Process-aware nutrition estimation from cooking videos")]
pub struct Cli {
    /// Seed for every stochastic step; each command documents what it seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Check a manifest or summarise it.
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Generate a synthetic benchmark from a spec file.
    Synth(SynthArgs),
    /// Write sampling plans for one strategy.
    Sample(SampleArgs),
    /// Run an experiment grid and store held-out predictions.
    Train(TrainArgs),
    /// Compute metrics from the predictions of a `train` run.
    Evaluate(EvaluateArgs),
    /// Render a results file as a table.
    Report(ReportArgs),
    /// Event-detection F1 of plans against annotated add events.
    Eventf1(EventF1Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Manifest(ManifestCommand::Validate { .. }) => "manifest-validate",
            Command::Manifest(ManifestCommand::Stats { .. }) => "manifest-stats",
            Command::Synth(_) => "synth",
            Command::Sample(_) => "sample",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
            Command::Eventf1(_) => "eventf1",
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
pub enum ManifestCommand {
    Validate { path: PathBuf },
    Stats { path: PathBuf },
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON synthetic spec; `--seed` overrides its seed.
    #[arg(long)]
    pub spec: PathBuf,
    /// Backbone directory name for the generated embeddings.
    #[arg(long, default_value = "synthetic")]
    pub backbone_tag: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DishArg {
    Gt,
    Predicted,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// gt | pred-k | pred-all | rand-k | uni-k | dish-only
    #[arg(long)]
    pub strategy: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Directory of `<video_id>.process.csv` / `.dish.csv` score streams.
    #[arg(long)]
    pub streams: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gt")]
    pub dish_source: DishArg,
    /// Also report event F1 against the manifest at this tolerance (s).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// JSON list of experiment configs.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Root holding `<backbone_tag>/<video_id>.vnem`.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub streams: Option<PathBuf>,
    /// Worker threads for folds and configs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    Mean,
    Pooled,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// `results.jsonl` written by `evaluate`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    pub view: View,
    /// `predictions.tsv` to split into per-config scatter files.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EventF1Args {
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE_S)]
    pub tolerance: f64,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn user(e: impl fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

fn internal(e: impl fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        user(e)
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        user(e)
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        user(e)
    }
}

impl From<SyntheticError> for CliError {
    fn from(e: SyntheticError) -> Self {
        match e {
            SyntheticError::InvalidSpec(_) => user(e),
            other => internal(other),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        fn is_internal(e: &HarnessError) -> bool {
            match e {
                HarnessError::Config { source, .. } => is_internal(source),
                HarnessError::Io(_) | HarnessError::Model(ModelError::Io(_)) => true,
                HarnessError::Model(ModelError::StaleCache | ModelError::ShapeMismatch(_)) => true,
                _ => false,
            }
        }
        if is_internal(&e) {
            internal(e)
        } else {
            user(e)
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serialises")
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&to_json(&item));
        s.push('\n');
    }
    s
}

fn load_valid_manifest(path: &Path) -> Result<Vec<RecipeInstance>, CliError> {
    load_manifest(path).map_err(|e| user(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    command: &'static str,
    version: &'static str,
    generator: &'static str,
    seed: u64,
    cli: &'a Cli,
}

fn write_echo(cli: &Cli) -> Result<(), CliError> {
    let echo = ConfigEcho {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        generator: GENERATOR_NAME,
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        cli,
    };
    let text = serde_json::to_string_pretty(&echo).expect("arguments serialise") + "\n";
    write_text(&cli.out_dir.join(format!("{}.config.json", cli.command.name())), &text)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .try_init();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli)));
    match result {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            2
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    write_echo(cli)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Manifest(ManifestCommand::Validate { path }) => manifest_validate(path),
        Command::Manifest(ManifestCommand::Stats { path }) => manifest_stats(path, out),
        Command::Synth(a) => synth(a, cli.seed, out),
        Command::Sample(a) => sample(a, seed, out),
        Command::Train(a) => train(a, cli.seed, out),
        Command::Evaluate(a) => evaluate_run(a, out),
        Command::Report(a) => report(a, out),
        Command::Eventf1(a) => eventf1(a, out),
    }
}

fn manifest_validate(path: &Path) -> Result<(), CliError> {
    let m = load_valid_manifest(path)?;
    for w in check_warnings(&m) {
        warn!("{w}");
    }
    let [all, ready, full] = tier_counts(&m);
    println!("ok: {} instances", m.len());
    println!("tiers (all / regression-ready / fully complete): {all} / {ready} / {full}");
    Ok(())
}

/// Text rendering of tier counts and target distribution.
pub fn format_stats(m: &[RecipeInstance]) -> Result<String, CliError> {
    let [all, ready, full] = tier_counts(m);
    let mut s = format!("tiers (all / regression-ready / fully complete): {all} / {ready} / {full}\n");
    let ready_set = regression_ready(m);
    if ready_set.is_empty() {
        s.push_str("no regression-ready instances\n");
        return Ok(s);
    }
    let st = distribution_stats(&ready_set)?;
    writeln!(s, "{:<10} {:>12} {:>12} {:>12} {:>12}", "nutrient", "min", "max", "mean", "median").unwrap();
    for (name, n) in NUTRIENTS.iter().zip(&st.nutrients) {
        writeln!(s, "{name:<10} {:>12.3} {:>12.3} {:>12.3} {:>12.3}", n.min, n.max, n.mean, n.median).unwrap();
    }
    writeln!(s, "all-zero targets: {}", st.zero_count).unwrap();
    Ok(s)
}

fn manifest_stats(path: &Path, out: &Path) -> Result<(), CliError> {
    let m = load_valid_manifest(path)?;
    let text = format_stats(&m)?;
    print!("{text}");
    let ready = regression_ready(&m);
    if !ready.is_empty() {
        write_text(&out.join("stats.json"), &(to_json(&distribution_stats(&ready)?) + "\n"))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut spec: SyntheticSpec = read_json(&a.spec)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let bench = gen_benchmark(&spec)?;
    write_benchmark(&spec, &bench, out, &a.backbone_tag)?;
    write_text(&out.join("spec.resolved.json"), &(to_json(&spec) + "\n"))?;
    println!(
        "wrote {} instances ({} recipes, D={}) to {}",
        bench.manifest.len(),
        spec.recipes(),
        spec.dim,
        out.display()
    );
    Ok(())
}

fn stream_path(dir: Option<&Path>, name: &str) -> Result<PathBuf, CliError> {
    dir.map(|d| d.join(name))
        .ok_or_else(|| user("this strategy needs --streams"))
}

fn sample(a: &SampleArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let m = load_valid_manifest(&a.manifest)?;
    let kind: StrategyKind = a.strategy.parse()?;
    let strategy = Strategy {
        kind,
        k: a.k,
        threshold: a.threshold,
        seed: (kind == StrategyKind::RandK).then_some(seed),
    };
    strategy.validate()?;
    let streams = a.streams.as_deref();
    let mut plans = Vec::with_capacity(m.len());
    for inst in &m {
        let stream = if strategy.needs_stream() {
            Some(load_stream(stream_path(streams, &format!("{}.process.csv", inst.video_id))?)?)
        } else {
            None
        };
        let mut plan = plan_for(&strategy, inst, stream.as_ref())?;
        if let DishArg::Predicted = a.dish_source {
            let s = load_stream(stream_path(streams, &format!("{}.dish.csv", inst.video_id))?)?;
            plan.dish_ts = select_dish_frame(&s)?;
        }
        plans.push(plan);
    }
    write_text(&out.join("plans.jsonl"), &jsonl(&plans))?;
    println!("wrote {} plans ({strategy})", plans.len());
    if let Some(tol) = a.tolerance {
        let summary = f1_summary(&plans, &m, tol)?;
        println!("{}", summary.line());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct InstanceF1 {
    instance_id: String,
    precision: f64,
    recall: f64,
    f1: f64,
    matches: usize,
    n_pred: usize,
    n_gt: usize,
}

#[derive(Debug, Serialize)]
struct F1Summary {
    tolerance_s: f64,
    instances: usize,
    mean_precision: f64,
    mean_recall: f64,
    mean_f1: f64,
    micro_f1: f64,
    #[serde(skip)]
    rows: Vec<InstanceF1>,
}

impl F1Summary {
    fn line(&self) -> String {
        format!(
            "event F1 @ {}s over {} instances: mean P {:.4} R {:.4} F1 {:.4}, micro F1 {:.4}",
            self.tolerance_s, self.instances, self.mean_precision, self.mean_recall, self.mean_f1, self.micro_f1
        )
    }
}

/// Scores plans of instances that have at least one annotated add event.
fn f1_summary(plans: &[SamplingPlan], m: &[RecipeInstance], tol: f64) -> Result<F1Summary, CliError> {
    if !(tol > 0.0) {
        return Err(user(format!("tolerance must be > 0, got {tol}")));
    }
    let mut rows = Vec::new();
    let (mut matches, mut n_pred, mut n_gt) = (0, 0, 0);
    for plan in plans {
        let inst = m
            .iter()
            .find(|i| i.instance_id == plan.instance_id)
            .ok_or_else(|| user(format!("plan for unknown instance `{}`", plan.instance_id)))?;
        let gt: Vec<f64> = inst.add_events().collect();
        if gt.is_empty() {
            continue;
        }
        let r = eval_event_f1(&plan.process_ts, &gt, tol);
        matches += r.matches;
        n_pred += r.n_pred;
        n_gt += r.n_gt;
        rows.push(InstanceF1 {
            instance_id: plan.instance_id.clone(),
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            matches: r.matches,
            n_pred: r.n_pred,
            n_gt: r.n_gt,
        });
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&InstanceF1) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let micro = if n_pred + n_gt == 0 {
        0.0
    } else {
        2.0 * matches as f64 / (n_pred + n_gt) as f64
    };
    Ok(F1Summary {
        tolerance_s: tol,
        instances: rows.len(),
        mean_precision: mean(|r| r.precision),
        mean_recall: mean(|r| r.recall),
        mean_f1: mean(|r| r.f1),
        micro_f1: micro,
        rows,
    })
}

fn read_plans(path: &Path) -> Result<Vec<SamplingPlan>, CliError> {
    let f = fs::File::open(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let mut plans = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| user(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        plans.push(serde_json::from_str(&line).map_err(|e| user(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(plans)
}

fn eventf1(a: &EventF1Args, out: &Path) -> Result<(), CliError> {
    let plans = read_plans(&a.plans)?;
    let m = load_valid_manifest(&a.manifest)?;
    let summary = f1_summary(&plans, &m, a.tolerance)?;
    write_text(&out.join("eventf1.jsonl"), &jsonl(&summary.rows))?;
    write_text(&out.join("eventf1.summary.json"), &(to_json(&summary) + "\n"))?;
    println!("{}", summary.line());
    Ok(())
}

#[derive(Serialize)]
struct LossRecord<'a> {
    config_index: usize,
    fold: usize,
    loss: &'a [f64],
}

fn train(a: &TrainArgs, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut grid: Vec<ExperimentConfig> = read_json(&a.grid)?;
    if grid.is_empty() {
        return Err(user(format!("{}: empty grid", a.grid.display())));
    }
    if let Some(s) = seed {
        grid.iter_mut().for_each(|c| c.seed = s);
    }
    let m = load_valid_manifest(&a.manifest)?;
    let tags: BTreeSet<&str> = grid.iter().map(|c| c.backbone_tag.as_str()).collect();
    let tags: Vec<&str> = tags.into_iter().collect();
    let store = DataStore::load(&a.embeddings, a.streams.as_deref(), &tags, &m)?;
    let ckpt = out.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(internal)?;
    let opts = RunOptions {
        jobs: a.jobs,
        checkpoint_dir: Some(ckpt),
    };
    info!("running {} config(s) with {} job(s)", grid.len(), a.jobs);
    let results = run_experiment(&grid, &m, &store, &opts)?;
    write_text(&out.join("grid.resolved.json"), &(serde_json::to_string_pretty(&grid).expect("grid serialises") + "\n"))?;
    write_text(&out.join("predictions.tsv"), &results.predictions_tsv())?;
    let losses = results
        .configs
        .iter()
        .flat_map(|c| {
            c.folds.iter().map(|f| LossRecord {
                config_index: c.index,
                fold: f.fold,
                loss: &f.loss_trace,
            })
        });
    write_text(&out.join("losses.jsonl"), &jsonl(losses))?;
    for c in &results.configs {
        if !c.skipped.is_empty() {
            warn!("config {}: skipped {}", c.index, c.skipped.join(", "));
        }
    }
    print!("{}", results.render_table());
    Ok(())
}

fn evaluate_run(a: &EvaluateArgs, out: &Path) -> Result<(), CliError> {
    let grid: Vec<ExperimentConfig> = read_json(&a.run.join("grid.resolved.json"))?;
    let rows = parse_predictions_tsv(&read_text(&a.run.join("predictions.tsv"))?)?;
    let results = ExperimentResults::from_predictions(&grid, &rows)?;
    write_text(&out.join("results.jsonl"), &results.to_jsonl())?;
    let table = results.render_table();
    write_text(&out.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Deserialize)]
struct RecordIn {
    config_index: usize,
    label: String,
    backbone_tag: String,
    fold: String,
    nutrient: String,
    mae: f64,
}

/// Table rows from `results.jsonl` text for the `mean` or `pooled` view.
pub fn table_from_records(text: &str, view: &str) -> Result<String, CliError> {
    let mut rows: Vec<(usize, String, String, [f64; 4])> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordIn = serde_json::from_str(line).map_err(|e| user(format!("results line {}: {e}", i + 1)))?;
        if r.fold != view {
            continue;
        }
        let k = NUTRIENTS
            .iter()
            .position(|n| *n == r.nutrient)
            .ok_or_else(|| user(format!("results line {}: unknown nutrient `{}`", i + 1, r.nutrient)))?;
        match rows.iter_mut().find(|x| x.0 == r.config_index) {
            Some(x) => x.3[k] = r.mae,
            None => {
                let mut mae = [f64::NAN; 4];
                mae[k] = r.mae;
                rows.push((r.config_index, r.label, r.backbone_tag, mae));
            }
        }
    }
    if rows.is_empty() {
        return Err(user(format!("no `{view}` records found")));
    }
    Ok(render_rows(rows.into_iter().map(|(_, l, b, m)| (l, b, m))))
}

fn report(a: &ReportArgs, out: &Path) -> Result<(), CliError> {
    let view = match a.view {
        View::Mean => "mean",
        View::Pooled => "pooled",
    };
    let table = table_from_records(&read_text(&a.results)?, view)?;
    write_text(&out.join("report.txt"), &table)?;
    print!("{table}");
    if let Some(p) = &a.predictions {
        let rows = parse_predictions_tsv(&read_text(p)?)?;
        let indices: BTreeSet<usize> = rows.iter().map(|(i, _)| *i).collect();
        for idx in indices {
            for (k, name) in NUTRIENTS.iter().enumerate() {
                let mut s = format!("instance_id\tfold\ttrue_{name}\tpred_{name}\n");
                for (_, r) in rows.iter().filter(|(i, _)| *i == idx) {
                    writeln!(s, "{}\t{}\t{}\t{}", r.instance_id, r.fold, r.target.to_array()[k], r.pred.to_array()[k])
                        .unwrap();
                }
                write_text(&out.join("scatter").join(format!("config{idx:03}_{name}.tsv")), &s)?;
            }
        }
    }
    Ok(())
}
