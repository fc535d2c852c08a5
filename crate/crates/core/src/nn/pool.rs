//! Attention pooling over a bag of frame embeddings.
//!
//! Each embedding is scored by a two-layer network (`D -> a_h -> 1`, ReLU in
//! between); the scores are softmax-normalised and the bag is reduced to
//! their weighted sum. Mean mode skips the scorer and weights every frame by
//! `1 / N`.

use serde::{Deserialize, Serialize};

use super::linear::{relu_in_place, Linear};
use super::ModelError;
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    Weighted,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPool {
    pub layer1: Linear,
    pub layer2: Linear,
}

impl AttentionPool {
    pub fn init(dim: usize, hidden: usize, rng: &mut Rng64) -> Self {
        Self {
            layer1: Linear::glorot(dim, hidden, true, rng),
            layer2: Linear::glorot(hidden, 1, true, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layer1: self.layer1.zeros_like(),
            layer2: self.layer2.zeros_like(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layer1.in_dim
    }

    /// Raw attention score of one embedding, with the hidden activation.
    fn score(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut h = self.layer1.forward(z);
        relu_in_place(&mut h);
        (self.layer2.forward(&h)[0], h)
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub alphas: Vec<f64>,
    hidden: Vec<Vec<f64>>,
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_bag(bag: &[Vec<f64>], dim: usize) -> Result<(), ModelError> {
    if bag.is_empty() {
        return Err(ModelError::EmptyBag);
    }
    if let Some(row) = bag.iter().find(|r| r.len() != dim) {
        return Err(ModelError::DimMismatch {
            expected: dim,
            got: row.len(),
        });
    }
    Ok(())
}

pub(crate) fn pool_forward(
    params: &AttentionPool,
    bag: &[Vec<f64>],
    mode: PoolMode,
) -> Result<(Vec<f64>, PoolCache), ModelError> {
    let dim = params.dim();
    check_bag(bag, dim)?;
    let n = bag.len();
    let (alphas, hidden) = match mode {
        PoolMode::Mean => (vec![1.0 / n as f64; n], Vec::new()),
        PoolMode::Weighted => {
            let (scores, hidden): (Vec<f64>, Vec<Vec<f64>>) = bag.iter().map(|z| params.score(z)).unzip();
            (softmax(&scores), hidden)
        }
    };
    let mut pooled = vec![0.0; dim];
    for (a, z) in alphas.iter().zip(bag) {
        for (p, v) in pooled.iter_mut().zip(z) {
            *p += a * v;
        }
    }
    Ok((pooled, PoolCache { alphas, hidden }))
}

/// Aggregates a bag into one process representation and returns it with
/// the per-frame weights.
pub fn attention_pool(
    bag: &[Vec<f64>],
    params: &AttentionPool,
    mode: PoolMode,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let (pooled, cache) = pool_forward(params, bag, mode)?;
    Ok((pooled, cache.alphas))
}

/// Backpropagates `grad_pooled` into the scorer parameters. Embeddings are
/// frozen, so no input gradient is produced.
pub(crate) fn pool_backward(
    params: &AttentionPool,
    bag: &[Vec<f64>],
    cache: &PoolCache,
    grad_pooled: &[f64],
    mode: PoolMode,
    grads: &mut AttentionPool,
) {
    if mode == PoolMode::Mean {
        return;
    }
    // d pooled / d alpha_i = z_i
    let g_alpha: Vec<f64> = bag
        .iter()
        .map(|z| z.iter().zip(grad_pooled).map(|(a, b)| a * b).sum())
        .collect();
    let weighted: f64 = cache.alphas.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
    for (i, z) in bag.iter().enumerate() {
        // softmax Jacobian: d alpha_j / d s_i = alpha_j (delta_ij - alpha_i)
        let g_score = cache.alphas[i] * (g_alpha[i] - weighted);
        let h = &cache.hidden[i];
        let mut g_hidden = params
            .layer2
            .backward(h, &[g_score], &mut grads.layer2, true)
            .expect("input gradient requested");
        for (g, hv) in g_hidden.iter_mut().zip(h) {
            if *hv <= 0.0 {
                *g = 0.0;
            }
        }
        params.layer1.backward(z, &g_hidden, &mut grads.layer1, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_bag(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = crate::rng::seeded(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn single_frame_bag_returns_the_frame() {
        let mut r = crate::rng::seeded(4);
        let p = AttentionPool::init(6, 5, &mut r);
        let bag = random_bag(1, 6, 1);
        for mode in [PoolMode::Weighted, PoolMode::Mean] {
            let (zp, a) = attention_pool(&bag, &p, mode).unwrap();
            assert_eq!(a, vec![1.0]);
            assert_eq!(zp, bag[0]);
        }
    }

    #[test]
    fn empty_bag_is_rejected() {
        let mut r = crate::rng::seeded(4);
        let p = AttentionPool::init(3, 2, &mut r);
        assert!(matches!(attention_pool(&[], &p, PoolMode::Mean), Err(ModelError::EmptyBag)));
        assert!(matches!(
            attention_pool(&[vec![1.0]], &p, PoolMode::Mean),
            Err(ModelError::DimMismatch { .. })
        ));
    }

    #[test]
    fn constant_scores_reduce_to_mean() {
        let mut r = crate::rng::seeded(5);
        let mut p = AttentionPool::init(8, 4, &mut r);
        p.layer2.weight.iter_mut().for_each(|w| *w = 0.0);
        p.layer2.bias[0] = 0.0;
        let bag = random_bag(7, 8, 2);
        let (w, _) = attention_pool(&bag, &p, PoolMode::Weighted).unwrap();
        let (m, _) = attention_pool(&bag, &p, PoolMode::Mean).unwrap();
        for (a, b) in w.iter().zip(&m) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_sum_matches_scalar_loop() {
        let mut r = crate::rng::seeded(6);
        let p = AttentionPool::init(5, 3, &mut r);
        let bag = random_bag(5, 5, 3);
        // Oracle: explicit per-element loops, naive softmax.
        let mut scores = Vec::new();
        for z in &bag {
            let mut s = p.layer2.bias[0];
            for h in 0..3 {
                let mut pre = p.layer1.bias[h];
                for d in 0..5 {
                    pre += p.layer1.weight[h * 5 + d] * z[d];
                }
                s += p.layer2.weight[h] * pre.max(0.0);
            }
            scores.push(s);
        }
        let denom: f64 = scores.iter().map(|s| s.exp()).sum();
        let mut expect = [0.0; 5];
        for (i, z) in bag.iter().enumerate() {
            for d in 0..5 {
                expect[d] += scores[i].exp() / denom * z[d];
            }
        }
        let (zp, alphas) = attention_pool(&bag, &p, PoolMode::Weighted).unwrap();
        for d in 0..5 {
            assert!((zp[d] - expect[d]).abs() < 1e-12);
        }
        assert!((alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
