use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::warn;

use super::config::{DishSource, ExperimentConfig};
use super::HarnessError;
use crate::embedding::{read_embeddings, EmbeddingSequence};
use crate::manifest::{aggregate_targets, NutritionVector, RecipeInstance};
use crate::sampling::{load_stream, plan_for, select_dish_frame, SamplingPlan, ScoreStream, StrategyKind};

/// Embedding file of `video_id` under backbone `tag`.
pub fn embedding_path(root: &Path, tag: &str, video_id: &str) -> PathBuf {
    root.join(tag).join(format!("{video_id}.vnem"))
}

/// Process-score stream of `video_id`.
pub fn process_stream_path(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.process.csv"))
}

/// Dish-score stream of `video_id`.
pub fn dish_stream_path(dir: &Path, video_id: &str) -> PathBuf {
    dir.join(format!("{video_id}.dish.csv"))
}

/// In-memory embeddings and score streams keyed by video.
#[derive(Debug, Default, Clone)]
pub struct DataStore {
    embeddings: BTreeMap<(String, String), Arc<EmbeddingSequence>>,
    process_streams: BTreeMap<String, ScoreStream>,
    dish_streams: BTreeMap<String, ScoreStream>,
}

impl DataStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_embeddings(&mut self, tag: &str, seq: EmbeddingSequence) {
        self.embeddings
            .insert((tag.to_string(), seq.video_id().to_string()), Arc::new(seq));
    }

    pub fn insert_process_stream(&mut self, stream: ScoreStream) {
        self.process_streams.insert(stream.video_id.clone(), stream);
    }

    pub fn insert_dish_stream(&mut self, stream: ScoreStream) {
        self.dish_streams.insert(stream.video_id.clone(), stream);
    }

    pub fn embeddings(&self, tag: &str, video_id: &str) -> Option<&EmbeddingSequence> {
        self.embeddings
            .get(&(tag.to_string(), video_id.to_string()))
            .map(|a| a.as_ref())
    }

    pub fn process_stream(&self, video_id: &str) -> Option<&ScoreStream> {
        self.process_streams.get(video_id)
    }

    pub fn dish_stream(&self, video_id: &str) -> Option<&ScoreStream> {
        self.dish_streams.get(video_id)
    }

    /// Loads whatever exists on disk for the given backbones and videos.
    /// Absent files are skipped; they surface later as missing-artifact
    /// errors only if a configuration needs them.
    pub fn load(
        emb_root: &Path,
        stream_dir: Option<&Path>,
        tags: &[&str],
        instances: &[RecipeInstance],
    ) -> Result<Self, HarnessError> {
        let mut store = Self::new();
        for inst in instances {
            for tag in tags {
                let p = embedding_path(emb_root, tag, &inst.video_id);
                if p.exists() && store.embeddings(tag, &inst.video_id).is_none() {
                    store.insert_embeddings(tag, read_embeddings(&p)?);
                }
            }
            if let Some(dir) = stream_dir {
                let p = process_stream_path(dir, &inst.video_id);
                if p.exists() {
                    store.insert_process_stream(load_stream(&p)?);
                }
                let p = dish_stream_path(dir, &inst.video_id);
                if p.exists() {
                    store.insert_dish_stream(load_stream(&p)?);
                }
            }
        }
        Ok(store)
    }
}

/// Model inputs and target of one instance.
#[derive(Debug, Clone)]
pub struct Example {
    pub instance_id: String,
    pub z_dish: Vec<f64>,
    /// `None` for the dish-only head.
    pub bag: Option<Vec<Vec<f64>>>,
    pub target: NutritionVector,
}

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| v as f64).collect()
}

/// Sampling plans for every instance under `config`'s strategy and dish source.
pub fn make_plans(
    config: &ExperimentConfig,
    instances: &[RecipeInstance],
    store: &DataStore,
) -> Result<Vec<SamplingPlan>, HarnessError> {
    instances
        .iter()
        .map(|inst| {
            let mut plan = plan_for(&config.strategy, inst, store.process_stream(&inst.video_id))?;
            if config.dish_source == DishSource::Predicted {
                let s = store
                    .dish_stream(&inst.video_id)
                    .ok_or_else(|| crate::sampling::SamplingError::MissingStream(inst.video_id.clone()))?;
                plan.dish_ts = select_dish_frame(s)?;
            }
            Ok(plan)
        })
        .collect()
}

/// Builds one example per instance. Fusion heads need a non-empty process
/// bag; instances whose plan selects no frame are returned in the second
/// list instead. With the dish-only strategy a fusion head receives the dish
/// frame as its single process frame.
pub fn prepare_examples(
    config: &ExperimentConfig,
    instances: &[RecipeInstance],
    plans: &[SamplingPlan],
    store: &DataStore,
) -> Result<(Vec<Example>, Vec<String>), HarnessError> {
    let mut examples = Vec::with_capacity(instances.len());
    let mut skipped = Vec::new();
    for (inst, plan) in instances.iter().zip(plans) {
        let seq = store
            .embeddings(&config.backbone_tag, &inst.video_id)
            .ok_or_else(|| HarnessError::MissingEmbeddings(inst.instance_id.clone()))?;
        let z_dish = widen(seq.slice_at(&[plan.dish_ts])?[0]);
        let bag = if !config.variant.uses_process() {
            None
        } else if config.strategy.kind == StrategyKind::DishOnly {
            Some(vec![z_dish.clone()])
        } else if plan.process_ts.is_empty() {
            warn!(
                "{}: no process frames selected by {}; instance skipped",
                inst.instance_id, config.strategy
            );
            skipped.push(inst.instance_id.clone());
            continue;
        } else {
            Some(seq.slice_at(&plan.process_ts)?.into_iter().map(widen).collect())
        };
        examples.push(Example {
            instance_id: inst.instance_id.clone(),
            z_dish,
            bag,
            target: aggregate_targets(inst)?,
        });
    }
    Ok((examples, skipped))
}

/// Embedding width of `tag` as seen in the store.
pub fn backbone_dim(store: &DataStore, tag: &str, instances: &[RecipeInstance]) -> Option<usize> {
    instances
        .iter()
        .find_map(|i| store.embeddings(tag, &i.video_id))
        .map(|s| s.dim())
}

