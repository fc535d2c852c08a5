//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use procnutri::nn::{smooth_l1, FusionModel, HeadConfig, PoolMode, Variant};
use procnutri::rng::{self, Rng64};
use rand::Rng;

pub fn random_vec(r: &mut Rng64, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn random_bag(r: &mut Rng64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_vec(r, dim)).collect()
}

pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_at: (usize, usize),
}

/// Relative error with a floor on the denominator so that parameters whose
/// true gradient is ~0 are judged on absolute error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences of the Smooth-L1
/// loss. `dropout_seed` fixes one dropout mask for every evaluation; `None`
/// checks eval mode. `sample` limits the check to that many randomly chosen
/// parameters per tensor.
pub fn gradient_check(
    model: &FusionModel,
    z_d: &[f64],
    bag: Option<&[Vec<f64>]>,
    target: &[f64; 4],
    dropout_seed: Option<u64>,
    h: f64,
    sample: Option<usize>,
) -> GradCheck {
    let loss_of = |m: &FusionModel| -> f64 {
        let mut r = dropout_seed.map(rng::seeded);
        let (y, _) = m.forward(z_d, bag, r.as_mut()).unwrap();
        smooth_l1(&y, target, 1.0).0
    };
    let mut r = dropout_seed.map(rng::seeded);
    let (y, cache) = model.forward(z_d, bag, r.as_mut()).unwrap();
    let (_, g) = smooth_l1(&y, target, 1.0);
    let grads = model.backward(&cache, &g).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut probe = model.clone();
    let mut pick = rng::seeded(0xC0FFEE);
    let mut out = GradCheck {
        checked: 0,
        worst_rel: 0.0,
        worst_at: (0, 0),
    };
    for (t, tensor) in analytic.iter().enumerate() {
        let indices: Vec<usize> = match sample {
            Some(k) if k < tensor.len() => (0..k).map(|_| pick.random_range(0..tensor.len())).collect(),
            _ => (0..tensor.len()).collect(),
        };
        for j in indices {
            let orig = probe.params().slices()[t][j];
            probe.params_mut().slices_mut()[t][j] = orig + h;
            let up = loss_of(&probe);
            probe.params_mut().slices_mut()[t][j] = orig - h;
            let down = loss_of(&probe);
            probe.params_mut().slices_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(tensor[j], numeric);
            if e > out.worst_rel {
                out.worst_rel = e;
                out.worst_at = (t, j);
            }
            out.checked += 1;
        }
    }
    out
}

pub fn small_config(dim: usize, mode: PoolMode) -> HeadConfig {
    HeadConfig {
        dim,
        hidden: 32,
        attn_hidden: 8,
        dropout: 0.3,
        pool_mode: mode,
    }
}

pub const VARIANTS: [Variant; 3] = [Variant::DishOnly, Variant::Concat, Variant::Gated];
pub const POOL_MODES: [PoolMode; 2] = [PoolMode::Weighted, PoolMode::Mean];

use procnutri::harness::DataStore;
use procnutri::manifest::RecipeInstance;
use procnutri::sampling::{ScoreStream, DEFAULT_CLIP_LEN_S, DEFAULT_STRIDE_S};
use procnutri::synthetic::{gen_benchmark, gen_dish_streams, gen_process_streams, SyntheticSpec};

pub const SYN_TAG: &str = "synthetic";

/// Generates a benchmark and loads it into an in-memory store.
pub fn synthetic_store(spec: &SyntheticSpec) -> (Vec<RecipeInstance>, DataStore) {
    let b = gen_benchmark(spec).unwrap();
    let mut store = DataStore::new();
    for e in b.embeddings {
        store.insert_embeddings(SYN_TAG, e);
    }
    for s in gen_process_streams(spec, &b.manifest) {
        store.insert_process_stream(s);
    }
    for s in gen_dish_streams(spec, &b.manifest) {
        store.insert_dish_stream(s);
    }
    (b.manifest, store)
}

/// Random stream with scores on a coarse grid so that ties occur.
pub fn random_stream(r: &mut Rng64, video_id: &str) -> ScoreStream {
    let n = r.random_range(1..80);
    let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..=20) as f64 / 20.0).collect();
    ScoreStream::from_scores(video_id, DEFAULT_CLIP_LEN_S, DEFAULT_STRIDE_S, &scores)
}

/// Top-k by full sort: score descending, then start time ascending.
pub fn brute_topk(s: &ScoreStream, k: usize, duration: f64) -> Vec<f64> {
    let mut all: Vec<(f64, f64)> = s.entries.iter().map(|e| (e.score, e.start_ts)).collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let mut ts: Vec<f64> = all
        .iter()
        .take(k)
        .map(|(_, start)| (start + s.clip_len_s / 2.0).clamp(0.0, duration))
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts
}

/// Threshold selection by a plain filter loop.
pub fn brute_threshold(s: &ScoreStream, thr: f64, duration: f64) -> Vec<f64> {
    let mut ts = Vec::new();
    for e in &s.entries {
        if e.score > thr {
            ts.push((e.start_ts + s.clip_len_s / 2.0).clamp(0.0, duration));
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts
}
