use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::nn::{HeadConfig, PoolMode, Variant, DEFAULT_ATTN_HIDDEN, DEFAULT_DROPOUT, DEFAULT_HIDDEN, DEFAULT_LR};
use crate::sampling::{Strategy, StrategyKind};

/// Where the final-dish timestamp comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DishSource {
    /// The manifest's annotated `dish_frame_ts`.
    #[default]
    Gt,
    /// Argmax of the video's dish-score stream.
    Predicted,
}

/// How per-fold predictions are reduced to the headline number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    #[default]
    MeanOfFolds,
    Pooled,
}

fn default_lr() -> f64 {
    DEFAULT_LR
}
fn default_epochs() -> usize {
    50
}
fn default_beta() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    42
}
fn default_folds() -> usize {
    super::DEFAULT_FOLDS
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_attn_hidden() -> usize {
    DEFAULT_ATTN_HIDDEN
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}
fn default_variant() -> Variant {
    Variant::Gated
}
fn default_pool() -> PoolMode {
    PoolMode::Weighted
}

/// One row of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in rendered tables; derived from the strategy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub backbone_tag: String,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_pool")]
    pub pool_mode: PoolMode,
    pub strategy: Strategy,
    #[serde(default)]
    pub dish_source: DishSource,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Smooth-L1 transition point.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Seed for parameter initialisation and dropout.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_seed")]
    pub fold_seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_attn_hidden")]
    pub attn_hidden: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub aggregate: Aggregate,
}

impl ExperimentConfig {
    pub fn new(backbone_tag: impl Into<String>, variant: Variant, strategy: Strategy) -> Self {
        Self {
            label: None,
            backbone_tag: backbone_tag.into(),
            variant,
            pool_mode: PoolMode::Weighted,
            strategy,
            dish_source: DishSource::Gt,
            lr: DEFAULT_LR,
            epochs: default_epochs(),
            beta: 1.0,
            seed: 42,
            fold_seed: 42,
            folds: super::DEFAULT_FOLDS,
            hidden: DEFAULT_HIDDEN,
            attn_hidden: DEFAULT_ATTN_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            aggregate: Aggregate::MeanOfFolds,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a finite non-negative number, got {}", self.lr));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.hidden < 2 || self.attn_hidden < 1 {
            return bad("hidden widths must be positive (hidden >= 2)".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.folds));
        }
        self.strategy.validate()?;
        Ok(())
    }

    pub fn head_config(&self, dim: usize) -> HeadConfig {
        HeadConfig {
            dim,
            hidden: self.hidden,
            attn_hidden: self.attn_hidden,
            dropout: self.dropout,
            pool_mode: self.pool_mode,
        }
    }

    /// Table row label.
    pub fn row_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let mut s = self.strategy.to_string();
        if self.strategy.kind != StrategyKind::DishOnly || self.variant != Variant::DishOnly {
            if self.variant != Variant::Gated {
                s.push_str(&format!(" [{}]", self.variant));
            }
            if self.variant.uses_process() && self.pool_mode != PoolMode::Weighted {
                s.push_str(" [mean]");
            }
        }
        s
    }
}
