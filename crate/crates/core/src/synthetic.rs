//! Synthetic benchmarks with known latent structure.
//!
//! Each latent ingredient has a fixed nutrition vector and a fixed unit
//! direction in embedding space. Frames around an ingredient's add event
//! show its direction; the final-dish frame shows the sum of the directions
//! of the ingredients that are not hidden in that instance. Targets are
//! always the exact sum over all ingredients, so hiding only removes
//! evidence from the dish frame.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{write_embeddings, EmbeddingError, EmbeddingSequence};
use crate::harness::{dish_stream_path, embedding_path, process_stream_path};
use crate::manifest::{round_ms, save_manifest, Ingredient, ManifestError, NutritionVector, RecipeInstance};
use crate::rng::{self, Rng64};
use crate::sampling::{save_stream, SamplingError, ScoreStream, DEFAULT_CLIP_LEN_S, DEFAULT_STRIDE_S};

/// Half-width of the triangular score bump (full width 3 s).
pub const BUMP_HALF_WIDTH_S: f64 = 1.5;
/// Minimum spacing between add events of one instance.
const EVENT_GAP_S: f64 = 4.0;
/// Events keep this far from the video start and from the dish frame.
const EVENT_MARGIN_S: f64 = 5.0;
/// Dish frame offset from the end of the video.
const DISH_OFFSET_S: f64 = 2.5;
pub const WATER: &str = "water";

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

fn d_vocab() -> usize {
    12
}
fn d_dim() -> usize {
    64
}
fn d_hidden() -> f64 {
    0.5
}
fn d_noise() -> f64 {
    0.1
}
fn d_duration() -> [f64; 2] {
    [60.0, 180.0]
}
fn d_events() -> [usize; 2] {
    [3, 6]
}
fn d_fps() -> f32 {
    1.0
}
fn d_water() -> f64 {
    4.0 / 52.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_instances: usize,
    /// Defaults to the real benchmark's recipe/instance ratio (69/80).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_recipes: Option<usize>,
    #[serde(default = "d_vocab")]
    pub vocab_size: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
    /// Probability that an ingredient is absent from the dish embedding.
    #[serde(default = "d_hidden")]
    pub hidden_fraction: f64,
    /// Norm scale of the per-frame embedding noise.
    #[serde(default = "d_noise")]
    pub noise_sigma: f64,
    #[serde(default = "d_duration")]
    pub duration_range_s: [f64; 2],
    /// Inclusive range of ingredients (and add events) per recipe.
    #[serde(default = "d_events")]
    pub events_per_instance_range: [usize; 2],
    #[serde(default)]
    pub score_noise: f64,
    #[serde(default = "d_fps")]
    pub fps: f32,
    /// Share of recipes made of water only (all-zero targets).
    #[serde(default = "d_water")]
    pub water_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, n_instances: usize) -> Self {
        Self {
            seed,
            n_instances,
            n_recipes: None,
            vocab_size: d_vocab(),
            dim: d_dim(),
            hidden_fraction: d_hidden(),
            noise_sigma: d_noise(),
            duration_range_s: d_duration(),
            events_per_instance_range: d_events(),
            score_noise: 0.0,
            fps: d_fps(),
            water_fraction: d_water(),
        }
    }

    pub fn recipes(&self) -> usize {
        self.n_recipes
            .unwrap_or_else(|| ((self.n_instances * 69) as f64 / 80.0).round().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidSpec(m));
        let [elo, ehi] = self.events_per_instance_range;
        let [dlo, dhi] = self.duration_range_s;
        if self.n_instances == 0 {
            return bad("n_instances must be >= 1".into());
        }
        if self.recipes() == 0 || self.recipes() > self.n_instances {
            return bad(format!("n_recipes must lie in [1, n_instances], got {}", self.recipes()));
        }
        if !(0.0..=1.0).contains(&self.hidden_fraction) {
            return bad(format!("hidden_fraction {} outside [0, 1]", self.hidden_fraction));
        }
        if !(0.0..=1.0).contains(&self.water_fraction) {
            return bad(format!("water_fraction {} outside [0, 1]", self.water_fraction));
        }
        if !(self.noise_sigma >= 0.0 && self.score_noise >= 0.0) {
            return bad("noise scales must be >= 0".into());
        }
        if self.dim == 0 || !(self.fps > 0.0) {
            return bad("dim and fps must be positive".into());
        }
        if elo == 0 || elo > ehi || ehi > self.vocab_size {
            return bad(format!(
                "events_per_instance_range [{elo}, {ehi}] must satisfy 1 <= lo <= hi <= vocab_size"
            ));
        }
        let need = 2.0 * EVENT_MARGIN_S + DISH_OFFSET_S + (ehi - 1) as f64 * EVENT_GAP_S;
        if !(dlo >= need && dhi >= dlo) {
            return bad(format!("duration_range_s [{dlo}, {dhi}] must satisfy {need} <= lo <= hi"));
        }
        Ok(())
    }
}

/// Latent parameters of a generated benchmark. Test-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub test_only: bool,
    pub spec: SyntheticSpec,
    pub ingredients: Vec<LatentIngredient>,
    pub recipes: Vec<Vec<usize>>,
    pub instances: Vec<LatentInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentIngredient {
    pub name: String,
    pub nutrition: NutritionVector,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentInstance {
    pub instance_id: String,
    pub recipe: usize,
    /// Vocabulary indices in event order.
    pub ingredients: Vec<usize>,
    pub hidden: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub manifest: Vec<RecipeInstance>,
    pub embeddings: Vec<EmbeddingSequence>,
    pub truth: SyntheticTruth,
}

fn unit_vector(dim: usize, r: &mut Rng64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// kcal log-uniform in [10, 1000], split over protein/fat/carb by a flat
/// Dirichlet draw and converted at 4/9/4 kcal per gram.
fn nutrition(r: &mut Rng64) -> NutritionVector {
    let kcal = r.random_range(10f64.ln()..1000f64.ln()).exp();
    let w: [f64; 3] = std::array::from_fn(|_| Exp1.sample(r));
    let total: f64 = w.iter().sum();
    NutritionVector::new(
        kcal,
        kcal * w[0] / total / 4.0,
        kcal * w[1] / total / 9.0,
        kcal * w[2] / total / 4.0,
    )
}

/// Sorted event times with at least `EVENT_GAP_S` between neighbours,
/// rounded to milliseconds and kept away from half-second boundaries so
/// the peak window is unambiguous.
fn event_times(n: usize, lo: f64, hi: f64, r: &mut Rng64) -> Vec<f64> {
    let slack = (hi - lo) - (n - 1) as f64 * EVENT_GAP_S;
    let mut u: Vec<f64> = (0..n).map(|_| r.random_range(0.0..=slack)).collect();
    u.sort_by(f64::total_cmp);
    u.iter()
        .enumerate()
        .map(|(i, x)| {
            let t = round_ms(lo + x + i as f64 * EVENT_GAP_S);
            let frac = t - t.floor();
            if (frac - 0.5).abs() < 0.05 {
                round_ms(t + 0.1)
            } else {
                t
            }
        })
        .collect()
}

fn add_noise(row: &mut [f32], scale: f64, r: &mut Rng64) {
    if scale == 0.0 {
        return;
    }
    for v in row {
        let n: f64 = StandardNormal.sample(r);
        *v = (*v as f64 + n * scale) as f32;
    }
}

pub fn gen_benchmark(spec: &SyntheticSpec) -> Result<SyntheticBenchmark, SyntheticError> {
    spec.validate()?;
    let dim = spec.dim;
    let mut ing_rng = rng::seeded(rng::derive_seed(spec.seed, &[b"ingredients"]));
    let mut ingredients: Vec<LatentIngredient> = (0..spec.vocab_size)
        .map(|j| LatentIngredient {
            name: format!("ing{j:02}"),
            nutrition: nutrition(&mut ing_rng),
            direction: unit_vector(dim, &mut ing_rng),
        })
        .collect();
    let water = ingredients.len();
    ingredients.push(LatentIngredient {
        name: WATER.into(),
        nutrition: NutritionVector::ZERO,
        direction: unit_vector(dim, &mut ing_rng),
    });

    let n_recipes = spec.recipes();
    let n_water = ((n_recipes as f64) * spec.water_fraction).round() as usize;
    let mut rec_rng = rng::seeded(rng::derive_seed(spec.seed, &[b"recipes"]));
    let [elo, ehi] = spec.events_per_instance_range;
    let recipes: Vec<Vec<usize>> = (0..n_recipes)
        .map(|r| {
            if r < n_water {
                vec![water]
            } else {
                let n = rec_rng.random_range(elo..=ehi);
                let mut set = sample_indices(&mut rec_rng, spec.vocab_size, n).into_vec();
                set.sort_unstable();
                set
            }
        })
        .collect();
    // every recipe appears at least once; the rest are drawn at random
    let recipe_of: Vec<usize> = (0..spec.n_instances)
        .map(|i| if i < n_recipes { i } else { rec_rng.random_range(0..n_recipes) })
        .collect();

    let noise_scale = spec.noise_sigma / (dim as f64).sqrt();
    let generated: Vec<(RecipeInstance, EmbeddingSequence, LatentInstance)> = (0..spec.n_instances)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(spec.seed, &[b"instance", &(i as u64).to_le_bytes()]));
            let recipe = recipe_of[i];
            let mut order = recipes[recipe].clone();
            // event order varies per instance
            for a in (1..order.len()).rev() {
                let b = r.random_range(0..=a);
                order.swap(a, b);
            }
            let duration = round_ms(r.random_range(spec.duration_range_s[0]..=spec.duration_range_s[1]));
            let dish_ts = round_ms(duration - DISH_OFFSET_S);
            let times = event_times(order.len(), EVENT_MARGIN_S, dish_ts - EVENT_MARGIN_S, &mut r);
            let hidden: Vec<bool> = order.iter().map(|_| r.random_bool(spec.hidden_fraction)).collect();

            let fps = spec.fps as f64;
            let n_frames = ((duration * fps).floor() as usize).max(1);
            let mut data = vec![0f32; n_frames * dim];
            let frame_of = |t: f64| ((t * fps).floor() as usize).min(n_frames - 1);
            for (k, &t) in times.iter().enumerate() {
                let c = frame_of(t);
                let dir = &ingredients[order[k]].direction;
                for f in c.saturating_sub(1)..=(c + 1).min(n_frames - 1) {
                    for (d, v) in data[f * dim..(f + 1) * dim].iter_mut().enumerate() {
                        *v = dir[d] as f32;
                    }
                }
            }
            let dish_frame = frame_of(dish_ts);
            let mut dish = vec![0f64; dim];
            for (k, &j) in order.iter().enumerate() {
                if !hidden[k] {
                    for (acc, v) in dish.iter_mut().zip(&ingredients[j].direction) {
                        *acc += v;
                    }
                }
            }
            for (d, v) in data[dish_frame * dim..(dish_frame + 1) * dim].iter_mut().enumerate() {
                *v = dish[d] as f32;
            }
            for f in 0..n_frames {
                add_noise(&mut data[f * dim..(f + 1) * dim], noise_scale, &mut r);
            }

            let instance_id = format!("syn{i:04}");
            let video_id = format!("vid{i:04}");
            let inst = RecipeInstance {
                instance_id: instance_id.clone(),
                recipe_id: format!("rec{recipe:03}"),
                video_id: video_id.clone(),
                duration_s: duration,
                dish_frame_ts: dish_ts,
                ingredients: order
                    .iter()
                    .zip(&times)
                    .map(|(&j, &t)| Ingredient {
                        name: ingredients[j].name.clone(),
                        nutrition: Some(ingredients[j].nutrition),
                        add_event_ts: Some(t),
                    })
                    .collect(),
            };
            let seq = EmbeddingSequence::new(video_id, dim, spec.fps, data)?;
            let latent = LatentInstance {
                instance_id,
                recipe,
                ingredients: order,
                hidden,
            };
            Ok((inst, seq, latent))
        })
        .collect::<Result<_, SyntheticError>>()?;

    let mut manifest = Vec::with_capacity(generated.len());
    let mut embeddings = Vec::with_capacity(generated.len());
    let mut instances = Vec::with_capacity(generated.len());
    for (m, e, l) in generated {
        manifest.push(m);
        embeddings.push(e);
        instances.push(l);
    }
    Ok(SyntheticBenchmark {
        manifest,
        embeddings,
        truth: SyntheticTruth {
            test_only: true,
            spec: spec.clone(),
            ingredients,
            recipes,
            instances,
        },
    })
}

/// Sliding-window scores (2 s clips, 1 s stride) peaking at each event with
/// a triangular bump of width 3 s, plus Gaussian noise of std `score_noise`,
/// clipped to [0, 1].
pub fn gen_score_stream(
    video_id: &str,
    events: &[f64],
    duration_s: f64,
    score_noise: f64,
    seed: u64,
) -> ScoreStream {
    let mut r = rng::seeded(rng::derive_seed(seed, &[b"scores", video_id.as_bytes()]));
    let n_windows = (((duration_s - DEFAULT_CLIP_LEN_S) / DEFAULT_STRIDE_S).floor() as i64 + 1).max(1) as usize;
    let scores: Vec<f64> = (0..n_windows)
        .map(|w| {
            let center = w as f64 * DEFAULT_STRIDE_S + DEFAULT_CLIP_LEN_S / 2.0;
            let bump = events
                .iter()
                .map(|e| (1.0 - (center - e).abs() / BUMP_HALF_WIDTH_S).max(0.0))
                .fold(0.0, f64::max);
            let noise = if score_noise > 0.0 {
                let n: f64 = StandardNormal.sample(&mut r);
                score_noise * n
            } else {
                0.0
            };
            (bump + noise).clamp(0.0, 1.0)
        })
        .collect();
    ScoreStream::from_scores(video_id, DEFAULT_CLIP_LEN_S, DEFAULT_STRIDE_S, &scores)
}

/// Process-score streams for every instance of a benchmark.
pub fn gen_process_streams(spec: &SyntheticSpec, manifest: &[RecipeInstance]) -> Vec<ScoreStream> {
    manifest
        .iter()
        .map(|inst| {
            let events: Vec<f64> = inst.add_events().collect();
            gen_score_stream(&inst.video_id, &events, inst.duration_s, spec.score_noise, spec.seed)
        })
        .collect()
}

/// Dish-score streams: a single bump at the annotated dish frame.
pub fn gen_dish_streams(spec: &SyntheticSpec, manifest: &[RecipeInstance]) -> Vec<ScoreStream> {
    manifest
        .iter()
        .map(|inst| {
            gen_score_stream(
                &inst.video_id,
                &[inst.dish_frame_ts],
                inst.duration_s,
                spec.score_noise,
                rng::derive_seed(spec.seed, &[b"dish"]),
            )
        })
        .collect()
}

/// Writes `manifest.jsonl`, `embeddings/<tag>/*.vnem`,
/// `streams/*.{process,dish}.csv` and the test-only `truth.json`.
pub fn write_benchmark(
    spec: &SyntheticSpec,
    bench: &SyntheticBenchmark,
    out_dir: &Path,
    backbone_tag: &str,
) -> Result<(), SyntheticError> {
    let emb_root = out_dir.join("embeddings");
    let stream_dir = out_dir.join("streams");
    fs::create_dir_all(emb_root.join(backbone_tag))?;
    fs::create_dir_all(&stream_dir)?;
    save_manifest(&bench.manifest, out_dir.join("manifest.jsonl"))?;
    for seq in &bench.embeddings {
        write_embeddings(seq, embedding_path(&emb_root, backbone_tag, seq.video_id()))?;
    }
    for s in gen_process_streams(spec, &bench.manifest) {
        save_stream(&s, process_stream_path(&stream_dir, &s.video_id))?;
    }
    for s in gen_dish_streams(spec, &bench.manifest) {
        save_stream(&s, dish_stream_path(&stream_dir, &s.video_id))?;
    }
    let truth = serde_json::to_string_pretty(&bench.truth).map_err(io::Error::other)?;
    fs::write(out_dir.join("truth.json"), truth + "\n")?;
    Ok(())
}
