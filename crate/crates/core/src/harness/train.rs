use super::config::ExperimentConfig;
use super::data::Example;
use super::norm::{zscore_apply, zscore_fit, zscore_invert, NormStats};
use super::HarnessError;
use crate::manifest::NutritionVector;
use crate::nn::{smooth_l1, AdamState, FusionModel, OUTPUTS};
use crate::rng;

/// A trained head with the normalisation it was fitted under.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub model: FusionModel,
    pub norm: NormStats,
    /// Mean training loss of each epoch, measured before that epoch's update.
    pub loss_trace: Vec<f64>,
}

fn fold_seed(config: &ExperimentConfig, fold: usize, label: &[u8]) -> u64 {
    rng::derive_seed(config.seed, &[label, &(fold as u64).to_le_bytes()])
}

/// Trains a fresh head on `train` for `config.epochs` full-batch Adam steps.
pub fn train_fold(config: &ExperimentConfig, fold: usize, train: &[&Example]) -> Result<TrainedFold, HarnessError> {
    config.validate()?;
    let first = train.first().ok_or(HarnessError::EmptyTrainingSet(fold))?;
    let targets: Vec<NutritionVector> = train.iter().map(|e| e.target).collect();
    let norm = zscore_fit(&targets)?;
    let normalised: Vec<[f64; OUTPUTS]> = targets.iter().map(|t| zscore_apply(t, &norm)).collect();

    let mut model = FusionModel::init(
        config.variant,
        config.head_config(first.z_dish.len()),
        fold_seed(config, fold, b"init"),
    );
    let mut adam = AdamState::new(config.lr);
    let scale = 1.0 / train.len() as f64;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut drop_rng = rng::seeded(rng::derive_seed(
            fold_seed(config, fold, b"dropout"),
            &[&(epoch as u64).to_le_bytes()],
        ));
        let mut grads = model.zero_grads();
        let mut total = 0.0;
        for (ex, target) in train.iter().zip(&normalised) {
            let (y, cache) = model.forward(&ex.z_dish, ex.bag.as_deref(), Some(&mut drop_rng))?;
            let (loss, g) = smooth_l1(&y, target, config.beta);
            total += loss;
            model.backward_into(&cache, &g.map(|v| v * scale), &mut grads)?;
        }
        loss_trace.push(total * scale);
        model.adam_step(&grads, &mut adam)?;
    }
    Ok(TrainedFold {
        model,
        norm,
        loss_trace,
    })
}

/// Eval-mode predictions in physical units.
pub fn predict_examples(
    model: &FusionModel,
    norm: &NormStats,
    examples: &[&Example],
) -> Result<Vec<NutritionVector>, HarnessError> {
    examples
        .iter()
        .map(|ex| Ok(zscore_invert(&model.predict(&ex.z_dish, ex.bag.as_deref())?, norm)))
        .collect()
}
