//! Process-frame sampling strategies, final-dish frame selection and
//! event-detection scoring.

mod events;
mod stream;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::RecipeInstance;
use crate::rng;

pub use events::{eval_event_f1, eval_event_f1_scored, EventF1, DEFAULT_TOLERANCE_S};
pub use stream::{
    load_stream, parse_stream, save_stream, write_stream, ScoreEntry, ScoreStream, DEFAULT_CLIP_LEN_S,
    DEFAULT_STRIDE_S,
};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Frame budgets of the benchmark grid.
pub const FRAME_BUDGETS: [usize; 3] = [20, 50, 200];

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("score stream for `{video_id}`: {message}")]
    InvalidStream { video_id: String, message: String },
    #[error("score stream for `{0}` is empty")]
    EmptyStream(String),
    #[error("no score stream for `{0}`")]
    MissingStream(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Gt,
    PredK,
    PredAll,
    RandK,
    UniK,
    DishOnly,
}

impl FromStr for StrategyKind {
    type Err = SamplingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "gt" => StrategyKind::Gt,
            "pred-k" | "pred" => StrategyKind::PredK,
            "pred-all" => StrategyKind::PredAll,
            "rand-k" | "rand" | "random-k" => StrategyKind::RandK,
            "uni-k" | "uni" | "uniform-k" => StrategyKind::UniK,
            "dish-only" | "dish" => StrategyKind::DishOnly,
            other => return Err(SamplingError::InvalidArgument(format!("unknown strategy `{other}`"))),
        })
    }
}

/// A fully parameterised sampling strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            k: None,
            threshold: None,
            seed: None,
        }
    }

    pub fn with_k(kind: StrategyKind, k: usize) -> Self {
        Self {
            k: Some(k),
            ..Self::new(kind)
        }
    }

    pub fn needs_stream(&self) -> bool {
        matches!(self.kind, StrategyKind::PredK | StrategyKind::PredAll)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let needs_k = matches!(self.kind, StrategyKind::PredK | StrategyKind::RandK | StrategyKind::UniK);
        match self.k {
            None if needs_k => Err(SamplingError::InvalidArgument(format!("{self} requires k"))),
            Some(0) => Err(SamplingError::InvalidArgument("k must be >= 1".into())),
            _ => Ok(()),
        }?;
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(SamplingError::InvalidArgument(format!("threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.k.map(|k| k.to_string()).unwrap_or_else(|| "?".into());
        match self.kind {
            StrategyKind::Gt => f.write_str("GT"),
            StrategyKind::DishOnly => f.write_str("Dish-only"),
            StrategyKind::PredK => write!(f, "Pred-{k}"),
            StrategyKind::PredAll => match self.threshold {
                Some(t) if t != DEFAULT_THRESHOLD => write!(f, "Pred-all@{t}"),
                _ => f.write_str("Pred-all"),
            },
            StrategyKind::RandK => write!(f, "Rand-{k}"),
            StrategyKind::UniK => write!(f, "Uni-{k}"),
        }
    }
}

/// Timestamps chosen for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub instance_id: String,
    pub video_id: String,
    pub strategy: Strategy,
    pub process_ts: Vec<f64>,
    pub dish_ts: f64,
}

fn sort_times(ts: &mut [f64]) {
    ts.sort_by(f64::total_cmp);
}

pub fn sample_gt(instance: &RecipeInstance) -> SamplingPlan {
    let mut ts: Vec<f64> = instance.add_events().collect();
    sort_times(&mut ts);
    SamplingPlan {
        instance_id: instance.instance_id.clone(),
        video_id: instance.video_id.clone(),
        strategy: Strategy::new(StrategyKind::Gt),
        process_ts: ts,
        dish_ts: instance.dish_frame_ts,
    }
}

/// Window indices ordered by descending score, earlier windows first on ties.
fn ranked_windows(stream: &ScoreStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..stream.entries.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ea, eb) = (&stream.entries[a], &stream.entries[b]);
        eb.score
            .total_cmp(&ea.score)
            .then(ea.start_ts.total_cmp(&eb.start_ts))
    });
    idx
}

fn clamp_to(duration_s: f64, t: f64) -> f64 {
    t.clamp(0.0, duration_s)
}

/// Centers of the `k` highest-scoring windows, sorted by time.
pub fn sample_pred_topk(stream: &ScoreStream, k: usize, duration_s: f64) -> Result<Vec<f64>, SamplingError> {
    if stream.is_empty() {
        return Err(SamplingError::EmptyStream(stream.video_id.clone()));
    }
    if k == 0 {
        return Err(SamplingError::InvalidArgument("k must be >= 1".into()));
    }
    let mut ts: Vec<f64> = ranked_windows(stream)
        .into_iter()
        .take(k)
        .map(|i| clamp_to(duration_s, stream.center(&stream.entries[i])))
        .collect();
    sort_times(&mut ts);
    Ok(ts)
}

/// Centers of every window scoring strictly above `threshold`.
pub fn sample_pred_all(stream: &ScoreStream, threshold: f64, duration_s: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = stream
        .entries
        .iter()
        .filter(|e| e.score > threshold)
        .map(|e| clamp_to(duration_s, stream.center(e)))
        .collect();
    sort_times(&mut ts);
    ts
}

/// `k` i.i.d. draws from `[0, duration_s)`, sorted.
pub fn sample_random(duration_s: f64, k: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    let mut ts: Vec<f64> = (0..k).map(|_| r.random::<f64>() * duration_s).collect();
    sort_times(&mut ts);
    ts
}

/// Bin centers `(i + 0.5) * duration / k`.
pub fn sample_uniform(duration_s: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (i as f64 + 0.5) * duration_s / k as f64)
        .collect()
}

/// Center of the single highest-scoring window; earliest on ties.
pub fn select_dish_frame(stream: &ScoreStream) -> Result<f64, SamplingError> {
    let best = stream
        .entries
        .iter()
        .reduce(|best, e| match e.score.total_cmp(&best.score) {
            Ordering::Greater => e,
            _ => best,
        })
        .ok_or_else(|| SamplingError::EmptyStream(stream.video_id.clone()))?;
    Ok(stream.center(best))
}

/// Builds the plan for one instance. `stream` is required by the
/// prediction-based strategies and ignored otherwise.
pub fn plan_for(
    strategy: &Strategy,
    instance: &RecipeInstance,
    stream: Option<&ScoreStream>,
) -> Result<SamplingPlan, SamplingError> {
    strategy.validate()?;
    let duration = instance.duration_s;
    let k = strategy.k.unwrap_or(0);
    let need_stream = || stream.ok_or_else(|| SamplingError::MissingStream(instance.video_id.clone()));
    let process_ts = match strategy.kind {
        StrategyKind::Gt => sample_gt(instance).process_ts,
        StrategyKind::DishOnly => Vec::new(),
        StrategyKind::PredK => sample_pred_topk(need_stream()?, k, duration)?,
        StrategyKind::PredAll => {
            sample_pred_all(need_stream()?, strategy.threshold.unwrap_or(DEFAULT_THRESHOLD), duration)
        }
        StrategyKind::RandK => {
            let seed = rng::derive_seed(strategy.seed.unwrap_or(0), &[b"rand-k", instance.video_id.as_bytes()]);
            sample_random(duration, k, seed)
        }
        StrategyKind::UniK => sample_uniform(duration, k),
    };
    Ok(SamplingPlan {
        instance_id: instance.instance_id.clone(),
        video_id: instance.video_id.clone(),
        strategy: strategy.clone(),
        process_ts,
        dish_ts: instance.dish_frame_ts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Ingredient, NutritionVector};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn stream_of(scores: &[f64]) -> ScoreStream {
        ScoreStream::from_scores("v", 2.0, 1.0, scores)
    }

    fn instance(events: &[Option<f64>]) -> RecipeInstance {
        RecipeInstance {
            instance_id: "i".into(),
            recipe_id: "r".into(),
            video_id: "v".into(),
            duration_s: 100.0,
            dish_frame_ts: 95.0,
            ingredients: events
                .iter()
                .enumerate()
                .map(|(j, ts)| Ingredient {
                    name: format!("ing{j}"),
                    nutrition: Some(NutritionVector::ZERO),
                    add_event_ts: *ts,
                })
                .collect(),
        }
    }

    #[test]
    fn gt_sorts_events() {
        let p = sample_gt(&instance(&[Some(3.0), Some(10.0), Some(7.0), None]));
        assert_eq!(p.process_ts, vec![3.0, 7.0, 10.0]);
        assert_eq!(p.dish_ts, 95.0);
        assert!(sample_gt(&instance(&[None])).process_ts.is_empty());
        let seven: Vec<Option<f64>> = (0..7).map(|i| Some(i as f64 * 4.0 + 1.0)).collect();
        assert_eq!(sample_gt(&instance(&seven)).process_ts.len(), 7);
    }

    #[test]
    fn topk_examples() {
        let s = stream_of(&[0.1, 0.9, 0.5, 0.7]);
        assert_eq!(sample_pred_topk(&s, 2, 100.0).unwrap(), vec![2.0, 4.0]);
        assert_eq!(sample_pred_topk(&stream_of(&[0.5, 0.5]), 1, 100.0).unwrap(), vec![1.0]);
        assert_eq!(sample_pred_topk(&s, 10, 100.0).unwrap().len(), 4);
        assert!(matches!(
            sample_pred_topk(&stream_of(&[]), 1, 100.0),
            Err(SamplingError::EmptyStream(_))
        ));
    }

    #[test]
    fn threshold_examples() {
        let s = stream_of(&[0.2, 0.8, 0.6]);
        assert_eq!(sample_pred_all(&s, 0.5, 100.0), vec![2.0, 3.0]);
        assert!(sample_pred_all(&s, 1.0, 100.0).is_empty());
        assert!(sample_pred_all(&stream_of(&[1.0]), 1.0, 100.0).is_empty());
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(sample_uniform(10.0, 5), vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        assert_eq!(sample_uniform(37.0, 1), vec![18.5]);
    }

    #[test]
    fn random_is_deterministic_and_in_range() {
        let a = sample_random(100.0, 1000, 5);
        assert_eq!(a, sample_random(100.0, 1000, 5));
        assert_ne!(a, sample_random(100.0, 1000, 6));
        assert!(a.iter().all(|t| (0.0..100.0).contains(t)));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((45.0..=55.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn dish_frame_examples() {
        assert_eq!(select_dish_frame(&stream_of(&[0.3, 0.9, 0.4])).unwrap(), 2.0);
        assert_eq!(select_dish_frame(&stream_of(&[0.3])).unwrap(), 1.0);
        assert_eq!(select_dish_frame(&stream_of(&[0.9, 0.3, 0.9])).unwrap(), 1.0);
        assert!(select_dish_frame(&stream_of(&[])).is_err());
    }

    #[test]
    fn plans_per_strategy() {
        let inst = instance(&[Some(20.0), Some(50.0)]);
        let s = stream_of(&[0.1; 98]);
        for (st, n) in [
            (Strategy::new(StrategyKind::Gt), 2),
            (Strategy::new(StrategyKind::DishOnly), 0),
            (Strategy::with_k(StrategyKind::PredK, 20), 20),
            (Strategy::new(StrategyKind::PredAll), 0),
            (Strategy::with_k(StrategyKind::RandK, 20), 20),
            (Strategy::with_k(StrategyKind::UniK, 20), 20),
        ] {
            let p = plan_for(&st, &inst, Some(&s)).unwrap();
            assert_eq!(p.process_ts.len(), n, "{st}");
            assert!(p.process_ts.iter().all(|t| (0.0..=100.0).contains(t)));
        }
        assert!(plan_for(&Strategy::with_k(StrategyKind::PredK, 3), &inst, None).is_err());
        assert!(plan_for(&Strategy::new(StrategyKind::UniK), &inst, None).is_err());
        assert_eq!("uni-k".parse::<StrategyKind>().unwrap(), StrategyKind::UniK);
        assert_eq!(Strategy::with_k(StrategyKind::PredK, 20).to_string(), "Pred-20");
    }

    #[test]
    fn random_plans_depend_on_video() {
        let a = instance(&[]);
        let mut b = a.clone();
        b.video_id = "other".into();
        let st = Strategy {
            seed: Some(1),
            ..Strategy::with_k(StrategyKind::RandK, 5)
        };
        let pa = plan_for(&st, &a, None).unwrap();
        assert_eq!(pa, plan_for(&st, &a, None).unwrap());
        assert_ne!(pa.process_ts, plan_for(&st, &b, None).unwrap().process_ts);
    }

    fn brute_topk(stream: &ScoreStream, k: usize) -> Vec<f64> {
        // Oracle: selection by repeated linear max-scan.
        let mut taken = vec![false; stream.entries.len()];
        let mut out = Vec::new();
        for _ in 0..k.min(stream.entries.len()) {
            let mut best: Option<usize> = None;
            for (i, e) in stream.entries.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                if best.is_none_or(|b| e.score > stream.entries[b].score) {
                    best = Some(i);
                }
            }
            let b = best.unwrap();
            taken[b] = true;
            out.push(stream.entries[b].start_ts + 1.0);
        }
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn topk_matches_brute_force_500() {
        let mut r = rng::seeded(99);
        let scores: Vec<f64> = (0..500).map(|_| r.random::<f64>()).collect();
        let s = stream_of(&scores);
        assert_eq!(sample_pred_topk(&s, 200, 1000.0).unwrap(), brute_topk(&s, 200));
    }

    proptest! {
        #[test]
        fn topk_equals_oracle(scores in proptest::collection::vec(0u8..=10, 1..60), k in 1usize..70) {
            // coarse scores force ties
            let s = stream_of(&scores.iter().map(|v| *v as f64 / 10.0).collect::<Vec<_>>());
            prop_assert_eq!(sample_pred_topk(&s, k, 1000.0).unwrap(), brute_topk(&s, k));
        }

        #[test]
        fn topk_with_large_k_is_pred_all_at_zero(scores in proptest::collection::vec(0.001..1.0f64, 1..60)) {
            let s = stream_of(&scores);
            prop_assert_eq!(
                sample_pred_topk(&s, scores.len() + 3, 1000.0).unwrap(),
                sample_pred_all(&s, 0.0, 1000.0)
            );
        }

        #[test]
        fn uniform_spacing(duration in 0.5..5000.0f64, k in 1usize..300) {
            let ts = sample_uniform(duration, k);
            prop_assert_eq!(ts.len(), k);
            for w in ts.windows(2) {
                prop_assert!((w[1] - w[0] - duration / k as f64).abs() <= 1e-3);
            }
            prop_assert!(ts.iter().all(|t| *t >= 0.0 && *t <= duration));
        }

        #[test]
        fn outputs_sorted_and_in_range(
            scores in proptest::collection::vec(0.0..=1.0f64, 1..80),
            k in 1usize..40,
            seed in any::<u64>(),
        ) {
            let duration = scores.len() as f64 + 1.0;
            let s = stream_of(&scores);
            for ts in [
                sample_pred_topk(&s, k, duration).unwrap(),
                sample_pred_all(&s, 0.5, duration),
                sample_random(duration, k, seed),
                sample_uniform(duration, k),
            ] {
                prop_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(ts.iter().all(|t| *t >= 0.0 && *t <= duration));
            }
        }

        #[test]
        fn dish_frame_is_argmax(scores in proptest::collection::vec(0.0..=1.0f64, 1..100)) {
            let s = stream_of(&scores);
            let mut best = 0;
            for i in 1..scores.len() {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            prop_assert_eq!(select_dish_frame(&s).unwrap(), best as f64 + 1.0);
        }
    }
}
