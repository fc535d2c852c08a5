use std::fmt::Write as _;
use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Aggregate, ExperimentConfig};
use super::data::{make_plans, prepare_examples, DataStore, Example};
use super::folds::{make_folds, FoldAssignment};
use super::metrics::{evaluate, MetricsReport};
use super::norm::NormStats;
use super::train::{predict_examples, train_fold};
use super::HarnessError;
use crate::manifest::{aggregate_targets, NutritionVector, RecipeInstance, NUTRIENTS};
use crate::nn::save_checkpoint;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// When set, each trained fold is written to
    /// `<dir>/config{index:03}_fold{fold}.vnck` with its `.norm.json`.
    pub checkpoint_dir: Option<PathBuf>,
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub instance_id: String,
    pub fold: usize,
    pub target: NutritionVector,
    pub pred: NutritionVector,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub metrics: MetricsReport,
    /// Training-side state; absent when rebuilt from a predictions file.
    pub norm: Option<NormStats>,
    pub loss_trace: Vec<f64>,
    pub predictions: Vec<PredictionRow>,
}

#[derive(Debug, Clone)]
pub struct ConfigOutcome {
    pub index: usize,
    pub config: ExperimentConfig,
    pub folds: Vec<FoldOutcome>,
    /// Mean of the per-fold MAEs.
    pub mean_mae: [f64; 4],
    /// Mean of the per-fold correlations that are defined.
    pub mean_pearson: [Option<f64>; 4],
    /// Metrics over all held-out predictions together.
    pub pooled: MetricsReport,
    /// Instances excluded because the plan selected no process frame.
    pub skipped: Vec<String>,
}

impl ConfigOutcome {
    /// The MAE selected by the config's aggregation flag.
    pub fn headline_mae(&self) -> [f64; 4] {
        match self.config.aggregate {
            Aggregate::MeanOfFolds => self.mean_mae,
            Aggregate::Pooled => self.pooled.mae,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub configs: Vec<ConfigOutcome>,
}

/// Instances with a complete nutrition target.
pub fn regression_ready(instances: &[RecipeInstance]) -> Vec<RecipeInstance> {
    instances
        .iter()
        .filter(|i| aggregate_targets(i).is_ok())
        .cloned()
        .collect()
}

fn annotate(index: usize, config: &ExperimentConfig, e: HarnessError) -> HarnessError {
    HarnessError::Config {
        index,
        label: config.row_label(),
        backbone: config.backbone_tag.clone(),
        source: Box::new(e),
    }
}

struct Prepared {
    examples: Vec<Example>,
    skipped: Vec<String>,
    folds: FoldAssignment,
}

fn prepare(config: &ExperimentConfig, instances: &[RecipeInstance], store: &DataStore) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let plans = make_plans(config, instances, store)?;
    let (examples, skipped) = prepare_examples(config, instances, &plans, store)?;
    let folds = make_folds(instances, config.folds, config.fold_seed)?;
    Ok(Prepared {
        examples,
        skipped,
        folds,
    })
}

fn run_fold(
    index: usize,
    config: &ExperimentConfig,
    prep: &Prepared,
    fold: usize,
    opts: &RunOptions,
) -> Result<FoldOutcome, HarnessError> {
    let fold_of = |e: &Example| prep.folds.fold(&e.instance_id);
    let train: Vec<&Example> = prep.examples.iter().filter(|e| fold_of(e) != Some(fold)).collect();
    let test: Vec<&Example> = prep.examples.iter().filter(|e| fold_of(e) == Some(fold)).collect();
    if test.is_empty() {
        return Err(HarnessError::EmptyTestSet(fold));
    }
    let trained = train_fold(config, fold, &train)?;
    let preds = predict_examples(&trained.model, &trained.norm, &test)?;
    let targets: Vec<NutritionVector> = test.iter().map(|e| e.target).collect();
    let metrics = evaluate(&preds, &targets)?;
    if let Some(dir) = &opts.checkpoint_dir {
        let stem = dir.join(format!("config{index:03}_fold{fold}"));
        save_checkpoint(&trained.model, stem.with_extension("vnck"))?;
        let norm = serde_json::to_string(&trained.norm).expect("norm stats serialise");
        std::fs::write(stem.with_extension("norm.json"), norm + "\n")?;
    }
    info!(
        "config {index} ({} / {}) fold {fold}: kcal MAE {:.3}",
        config.backbone_tag,
        config.row_label(),
        metrics.mae[0]
    );
    let predictions = test
        .iter()
        .zip(preds.iter().zip(&targets))
        .map(|(e, (p, t))| PredictionRow {
            instance_id: e.instance_id.clone(),
            fold,
            target: *t,
            pred: *p,
        })
        .collect();
    Ok(FoldOutcome {
        fold,
        metrics,
        norm: Some(trained.norm),
        loss_trace: trained.loss_trace,
        predictions,
    })
}

fn summarise(
    index: usize,
    config: ExperimentConfig,
    skipped: Vec<String>,
    folds: Vec<FoldOutcome>,
) -> Result<ConfigOutcome, HarnessError> {
    let n = folds.len() as f64;
    let mean_mae = std::array::from_fn(|c| folds.iter().map(|f| f.metrics.mae[c]).sum::<f64>() / n);
    let mean_pearson = std::array::from_fn(|c| {
        let defined: Vec<f64> = folds.iter().filter_map(|f| f.metrics.pearson[c]).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    });
    let all: Vec<&PredictionRow> = folds.iter().flat_map(|f| &f.predictions).collect();
    let preds: Vec<NutritionVector> = all.iter().map(|r| r.pred).collect();
    let targets: Vec<NutritionVector> = all.iter().map(|r| r.target).collect();
    let pooled = evaluate(&preds, &targets)?;
    Ok(ConfigOutcome {
        index,
        config,
        folds,
        mean_mae,
        mean_pearson,
        pooled,
        skipped,
    })
}

/// Runs every config of the grid under the cross-validation protocol.
/// Results come back in declaration order whatever `opts.jobs` is.
pub fn run_experiment(
    grid: &[ExperimentConfig],
    instances: &[RecipeInstance],
    store: &DataStore,
    opts: &RunOptions,
) -> Result<ExperimentResults, HarnessError> {
    let instances = regression_ready(instances);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        let prepared: Vec<Prepared> = grid
            .par_iter()
            .enumerate()
            .map(|(i, c)| prepare(c, &instances, store).map_err(|e| annotate(i, c, e)))
            .collect::<Result<_, _>>()?;
        for (i, p) in prepared.iter().enumerate() {
            if !p.skipped.is_empty() {
                warn!("config {i}: {} instance(s) without process frames skipped", p.skipped.len());
            }
        }
        let units: Vec<(usize, usize)> = grid
            .iter()
            .enumerate()
            .flat_map(|(i, c)| (0..c.folds).map(move |f| (i, f)))
            .collect();
        let mut outcomes: Vec<FoldOutcome> = units
            .par_iter()
            .map(|&(i, f)| run_fold(i, &grid[i], &prepared[i], f, opts).map_err(|e| annotate(i, &grid[i], e)))
            .collect::<Result<_, _>>()?;
        let mut configs = Vec::with_capacity(grid.len());
        for (i, (c, p)) in grid.iter().zip(&prepared).enumerate() {
            let rest = outcomes.split_off(c.folds);
            let mine = std::mem::replace(&mut outcomes, rest);
            configs.push(summarise(i, c.clone(), p.skipped.clone(), mine).map_err(|e| annotate(i, c, e))?);
        }
        Ok(ExperimentResults { configs })
    })
}

/// One line of the machine-readable results table.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord<'a> {
    pub config_index: usize,
    pub label: String,
    pub backbone_tag: &'a str,
    pub variant: String,
    pub pool_mode: crate::nn::PoolMode,
    pub strategy: String,
    pub dish_source: super::config::DishSource,
    /// Fold index, `mean` or `pooled`.
    pub fold: String,
    pub nutrient: &'static str,
    pub n: usize,
    pub mae: f64,
    pub pearson: Option<f64>,
}

impl ExperimentResults {
    /// Recomputes all metrics from held-out predictions. Rows are grouped by
    /// config index and fold in order of appearance.
    pub fn from_predictions(
        grid: &[ExperimentConfig],
        rows: &[(usize, PredictionRow)],
    ) -> Result<Self, HarnessError> {
        let mut configs = Vec::with_capacity(grid.len());
        for (index, config) in grid.iter().enumerate() {
            let mut folds: Vec<(usize, Vec<PredictionRow>)> = Vec::new();
            for (_, r) in rows.iter().filter(|(i, _)| *i == index) {
                match folds.iter_mut().find(|(f, _)| *f == r.fold) {
                    Some((_, v)) => v.push(r.clone()),
                    None => folds.push((r.fold, vec![r.clone()])),
                }
            }
            if folds.is_empty() {
                return Err(annotate(
                    index,
                    config,
                    HarnessError::InvalidConfig("no predictions for this config".into()),
                ));
            }
            let outcomes = folds
                .into_iter()
                .map(|(fold, predictions)| {
                    let preds: Vec<NutritionVector> = predictions.iter().map(|r| r.pred).collect();
                    let targets: Vec<NutritionVector> = predictions.iter().map(|r| r.target).collect();
                    Ok(FoldOutcome {
                        fold,
                        metrics: evaluate(&preds, &targets)?,
                        norm: None,
                        loss_trace: Vec::new(),
                        predictions,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
                .map_err(|e| annotate(index, config, e))?;
            configs.push(summarise(index, config.clone(), Vec::new(), outcomes).map_err(|e| annotate(index, config, e))?);
        }
        Ok(Self { configs })
    }

    pub fn records(&self) -> Vec<ResultRecord<'_>> {
        let mut out = Vec::new();
        for c in &self.configs {
            let base = |fold: String, nutrient: usize, n: usize, mae: f64, pearson: Option<f64>| ResultRecord {
                config_index: c.index,
                label: c.config.row_label(),
                backbone_tag: &c.config.backbone_tag,
                variant: c.config.variant.to_string(),
                pool_mode: c.config.pool_mode,
                strategy: c.config.strategy.to_string(),
                dish_source: c.config.dish_source,
                fold,
                nutrient: NUTRIENTS[nutrient],
                n,
                mae,
                pearson,
            };
            for f in &c.folds {
                for k in 0..4 {
                    out.push(base(f.fold.to_string(), k, f.metrics.n, f.metrics.mae[k], f.metrics.pearson[k]));
                }
            }
            for k in 0..4 {
                out.push(base("mean".into(), k, c.pooled.n, c.mean_mae[k], c.mean_pearson[k]));
            }
            for k in 0..4 {
                out.push(base("pooled".into(), k, c.pooled.n, c.pooled.mae[k], c.pooled.pearson[k]));
            }
        }
        out
    }

    /// Line-delimited JSON of [`records`](Self::records).
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in self.records() {
            s.push_str(&serde_json::to_string(&r).expect("records serialise"));
            s.push('\n');
        }
        s
    }

    /// Held-out predictions as a tab-separated table.
    pub fn predictions_tsv(&self) -> String {
        let mut s = String::from("config_index\tlabel\tbackbone_tag\tinstance_id\tfold");
        for n in NUTRIENTS {
            write!(s, "\ttrue_{n}").unwrap();
        }
        for n in NUTRIENTS {
            write!(s, "\tpred_{n}").unwrap();
        }
        s.push('\n');
        for c in &self.configs {
            for f in &c.folds {
                for r in &f.predictions {
                    write!(s, "{}\t{}\t{}\t{}\t{}", c.index, c.config.row_label(), c.config.backbone_tag, r.instance_id, r.fold)
                        .unwrap();
                    for v in r.target.to_array().into_iter().chain(r.pred.to_array()) {
                        write!(s, "\t{v}").unwrap();
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    /// Headline MAE table: one row per label, one column group per backbone.
    pub fn render_table(&self) -> String {
        render_rows(self.configs.iter().map(|c| (c.config.row_label(), c.config.backbone_tag.clone(), c.headline_mae())))
    }
}

/// Reads a table written by [`ExperimentResults::predictions_tsv`] back
/// into `(config index, row)` pairs.
pub fn parse_predictions_tsv(text: &str) -> Result<Vec<(usize, PredictionRow)>, HarnessError> {
    let bad = |line: usize, m: &str| HarnessError::InvalidConfig(format!("predictions line {line}: {m}"));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 13 {
            return Err(bad(i + 1, &format!("expected 13 columns, found {}", cols.len())));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(i + 1, &format!("bad number `{c}`")));
        let int = |c: &str| c.parse::<usize>().map_err(|_| bad(i + 1, &format!("bad index `{c}`")));
        let vals = cols[5..].iter().map(|c| num(c)).collect::<Result<Vec<f64>, _>>()?;
        out.push((
            int(cols[0])?,
            PredictionRow {
                instance_id: cols[3].to_string(),
                fold: int(cols[4])?,
                target: NutritionVector::from_array([vals[0], vals[1], vals[2], vals[3]]),
                pred: NutritionVector::from_array([vals[4], vals[5], vals[6], vals[7]]),
            },
        ));
    }
    Ok(out)
}

const SHORT: [&str; 4] = ["Cal", "Prot", "Fat", "Carb"];

/// Renders `(row label, backbone, mae)` triples; first appearance fixes
/// row and column order. Missing cells print as `-`.
pub fn render_rows(rows: impl IntoIterator<Item = (String, String, [f64; 4])>) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, [f64; 4])> = Vec::new();
    for (label, tag, mae) in rows {
        let li = labels.iter().position(|l| *l == label).unwrap_or_else(|| {
            labels.push(label);
            labels.len() - 1
        });
        let ti = tags.iter().position(|t| *t == tag).unwrap_or_else(|| {
            tags.push(tag);
            tags.len() - 1
        });
        cells.retain(|(l, t, _)| !(*l == li && *t == ti));
        cells.push((li, ti, mae));
    }
    let lw = labels.iter().map(|l| l.len()).max().unwrap_or(0).max("Strategy".len());
    let cw = 8;
    let group = 4 * (cw + 1) - 1;
    let mut s = format!("{:<lw$}", "");
    for t in &tags {
        write!(s, " | {t:^group$}").unwrap();
    }
    s.push('\n');
    write!(s, "{:<lw$}", "Strategy").unwrap();
    for _ in &tags {
        s.push_str(" |");
        for h in SHORT {
            write!(s, " {h:>cw$}").unwrap();
        }
    }
    s.push('\n');
    s.push_str(&"-".repeat(lw + tags.len() * (group + 3)));
    s.push('\n');
    for (li, label) in labels.iter().enumerate() {
        write!(s, "{label:<lw$}").unwrap();
        for ti in 0..tags.len() {
            s.push_str(" |");
            match cells.iter().find(|(l, t, _)| *l == li && *t == ti) {
                Some((_, _, mae)) => {
                    for (k, v) in mae.iter().enumerate() {
                        let prec = if k == 0 { 0 } else { 1 };
                        write!(s, " {v:>cw$.prec$}").unwrap();
                    }
                }
                None => {
                    for _ in 0..4 {
                        write!(s, " {:>cw$}", "-").unwrap();
                    }
                }
            }
        }
        s.push('\n');
    }
    s
}
