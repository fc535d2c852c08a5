//! Cross-validation protocol, target normalisation, training loop, metrics
//! and the grid runner.

mod config;
mod data;
mod experiment;
mod folds;
mod metrics;
mod norm;
mod train;

use thiserror::Error;

pub use config::{Aggregate, DishSource, ExperimentConfig};
pub use data::{
    backbone_dim, dish_stream_path, embedding_path, make_plans, prepare_examples, process_stream_path, DataStore,
    Example,
};
pub use experiment::{
    parse_predictions_tsv, regression_ready, render_rows, run_experiment, ConfigOutcome, ExperimentResults, FoldOutcome, PredictionRow,
    ResultRecord, RunOptions,
};
pub use folds::{make_folds, FoldAssignment, DEFAULT_FOLDS, DEFAULT_FOLD_SEED};
pub use metrics::{evaluate, pearson, MetricsReport};
pub use norm::{zscore_apply, zscore_fit, zscore_invert, NormStats};
pub use train::{predict_examples, train_fold, TrainedFold};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("only {recipes} distinct recipes for {k} folds")]
    TooFewRecipes { recipes: usize, k: usize },
    #[error("no embeddings for instance `{0}`")]
    MissingEmbeddings(String),
    #[error("{preds} predictions for {targets} targets")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("fold {0} has no training instances")]
    EmptyTrainingSet(usize),
    #[error("fold {0} has no test instances")]
    EmptyTestSet(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config {index} ({backbone} / {label}): {source}")]
    Config {
        index: usize,
        label: String,
        backbone: String,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error(transparent)]
    Sampling(#[from] crate::sampling::SamplingError),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error(transparent)]
    Model(#[from] crate::nn::ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
