//! Regression heads on top of frozen embeddings.
//!
//! Three variants share one parameter container:
//!
//! * `DishOnly`: `y = h(z_d)`, head `D -> d_h -> d_h/2 -> 4`
//! * `Concat`:   `y = h([z_d; z_p])`, head `2D -> d_h -> d_h/2 -> 4`
//! * `Gated`:    `y = h(s(w) W_d z_d + (1 - s(w)) W_e z_p)`, head `d_h -> d_h -> 4`
//!
//! where `z_p` is the attention-pooled process bag and `s` the logistic
//! sigmoid. Hidden head layers use ReLU followed by inverted dropout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::{relu_in_place, Linear};
use super::pool::{pool_backward, pool_forward, AttentionPool, PoolCache, PoolMode};
use super::ModelError;
use crate::rng::{self, Rng64};

pub const DEFAULT_HIDDEN: usize = 512;
pub const DEFAULT_ATTN_HIDDEN: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.3;
pub const GATE_INIT: f64 = 0.5;
pub const OUTPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    DishOnly,
    Concat,
    Gated,
}

impl Variant {
    pub fn uses_process(self) -> bool {
        self != Variant::DishOnly
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::DishOnly => "dish-only",
            Variant::Concat => "concat",
            Variant::Gated => "gated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Embedding width `D`.
    pub dim: usize,
    /// Fusion hidden width `d_h`.
    pub hidden: usize,
    /// Attention scorer hidden width.
    pub attn_hidden: usize,
    pub dropout: f64,
    pub pool_mode: PoolMode,
}

impl HeadConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            hidden: DEFAULT_HIDDEN,
            attn_hidden: DEFAULT_ATTN_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            pool_mode: PoolMode::Weighted,
        }
    }

    /// Layer widths of the MLP head, input first.
    pub fn head_dims(&self, variant: Variant) -> Vec<usize> {
        let (d, h) = (self.dim, self.hidden);
        match variant {
            Variant::DishOnly => vec![d, h, h / 2, OUTPUTS],
            Variant::Concat => vec![2 * d, h, h / 2, OUTPUTS],
            Variant::Gated => vec![h, h, OUTPUTS],
        }
    }
}

/// Trainable parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub pool: Option<AttentionPool>,
    pub proj_dish: Option<Linear>,
    pub proj_proc: Option<Linear>,
    /// Gate logit `w`; only trainable for the gated variant.
    pub gate: Option<f64>,
    pub head: Vec<Linear>,
}

impl FusionParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            pool: self.pool.as_ref().map(AttentionPool::zeros_like),
            proj_dish: self.proj_dish.as_ref().map(Linear::zeros_like),
            proj_proc: self.proj_proc.as_ref().map(Linear::zeros_like),
            gate: self.gate.map(|_| 0.0),
            head: self.head.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Every parameter tensor in declaration order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(p) = &self.pool {
            out.extend([&p.layer1.weight[..], &p.layer1.bias, &p.layer2.weight, &p.layer2.bias]);
        }
        if let Some(l) = &self.proj_dish {
            out.push(&l.weight);
        }
        if let Some(l) = &self.proj_proc {
            out.push(&l.weight);
        }
        if let Some(g) = &self.gate {
            out.push(std::slice::from_ref(g));
        }
        for l in &self.head {
            out.extend([&l.weight[..], &l.bias]);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(p) = &mut self.pool {
            out.extend([
                &mut p.layer1.weight[..],
                &mut p.layer1.bias,
                &mut p.layer2.weight,
                &mut p.layer2.bias,
            ]);
        }
        if let Some(l) = &mut self.proj_dish {
            out.push(&mut l.weight);
        }
        if let Some(l) = &mut self.proj_proc {
            out.push(&mut l.weight);
        }
        if let Some(g) = &mut self.gate {
            out.push(std::slice::from_mut(g));
        }
        for l in &mut self.head {
            out.extend([&mut l.weight[..], &mut l.bias]);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &FusionParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    variant: Variant,
    config: HeadConfig,
    params: FusionParams,
    version: u64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    variant: Variant,
    z_dish: Vec<f64>,
    bag: Vec<Vec<f64>>,
    pool: Option<PoolCache>,
    pooled: Vec<f64>,
    /// `(W_d z_d, W_e z_p, s(w))` for the gated variant.
    gated: Option<(Vec<f64>, Vec<f64>, f64)>,
    /// Input of every head layer (post activation and dropout).
    layer_inputs: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit; `None` in eval mode.
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    /// Attention weights over the process bag, if one was pooled.
    pub fn alphas(&self) -> Option<&[f64]> {
        self.pool.as_ref().map(|p| &p.alphas[..])
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

impl FusionModel {
    pub fn init(variant: Variant, config: HeadConfig, seed: u64) -> Self {
        assert!(config.dim >= 1, "embedding dim must be positive");
        let mut r = rng::seeded(rng::derive_seed(seed, &[b"init"]));
        let (pool, proj_dish, proj_proc, gate) = match variant {
            Variant::DishOnly => (None, None, None, None),
            Variant::Concat => (Some(AttentionPool::init(config.dim, config.attn_hidden, &mut r)), None, None, None),
            Variant::Gated => {
                let pool = AttentionPool::init(config.dim, config.attn_hidden, &mut r);
                let wd = Linear::glorot(config.dim, config.hidden, false, &mut r);
                let we = Linear::glorot(config.dim, config.hidden, false, &mut r);
                (Some(pool), Some(wd), Some(we), Some(GATE_INIT))
            }
        };
        let dims = config.head_dims(variant);
        let head = dims
            .windows(2)
            .map(|w| Linear::glorot(w[0], w[1], true, &mut r))
            .collect();
        Self {
            variant,
            config,
            params: FusionParams {
                pool,
                proj_dish,
                proj_proc,
                gate,
                head,
            },
            version: 0,
        }
    }

    /// Rebuilds a model from stored parameters, checking their shapes.
    pub fn from_parts(variant: Variant, config: HeadConfig, params: FusionParams) -> Result<Self, ModelError> {
        let template = Self::init(variant, config, 0);
        let want: Vec<usize> = template.params.slices().iter().map(|s| s.len()).collect();
        let got: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
        if want != got {
            return Err(ModelError::ShapeMismatch(format!(
                "parameter shapes {got:?} do not match {variant} layout {want:?}"
            )));
        }
        Ok(Self {
            variant,
            config,
            params,
            version: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut FusionParams {
        self.version += 1;
        &mut self.params
    }

    pub fn zero_grads(&self) -> FusionParams {
        self.params.zeros_like()
    }

    /// Current gate mix coefficient `s(w)`, if the model is gated.
    pub fn gate_mix(&self) -> Option<f64> {
        self.params.gate.map(sigmoid)
    }

    /// Runs the head. `train_rng` enables dropout; `None` is eval mode.
    pub fn forward(
        &self,
        z_dish: &[f64],
        process: Option<&[Vec<f64>]>,
        mut train_rng: Option<&mut Rng64>,
    ) -> Result<([f64; OUTPUTS], ForwardCache), ModelError> {
        let dim = self.config.dim;
        if z_dish.len() != dim {
            return Err(ModelError::DimMismatch {
                expected: dim,
                got: z_dish.len(),
            });
        }
        let mut cache = ForwardCache {
            version: self.version,
            variant: self.variant,
            z_dish: z_dish.to_vec(),
            bag: Vec::new(),
            pool: None,
            pooled: Vec::new(),
            gated: None,
            layer_inputs: Vec::with_capacity(self.params.head.len()),
            masks: Vec::with_capacity(self.params.head.len()),
        };

        let head_input = match self.variant {
            Variant::DishOnly => z_dish.to_vec(),
            Variant::Concat | Variant::Gated => {
                let bag = match process {
                    Some(b) if !b.is_empty() => b,
                    _ => return Err(ModelError::MissingProcess),
                };
                let pool = self.params.pool.as_ref().expect("fusion model has a pool");
                let (pooled, pool_cache) = pool_forward(pool, bag, self.config.pool_mode)?;
                cache.bag = bag.to_vec();
                cache.pool = Some(pool_cache);
                let input = if self.variant == Variant::Concat {
                    let mut v = z_dish.to_vec();
                    v.extend_from_slice(&pooled);
                    v
                } else {
                    let a = self.params.proj_dish.as_ref().expect("gated").forward(z_dish);
                    let b = self.params.proj_proc.as_ref().expect("gated").forward(&pooled);
                    let s = sigmoid(self.params.gate.expect("gated"));
                    let mixed = a.iter().zip(&b).map(|(x, y)| s * x + (1.0 - s) * y).collect();
                    cache.gated = Some((a, b, s));
                    mixed
                };
                cache.pooled = pooled;
                input
            }
        };

        let n_layers = self.params.head.len();
        let keep = 1.0 - self.config.dropout;
        let mut x = head_input;
        for (l, layer) in self.params.head.iter().enumerate() {
            let mut y = layer.forward(&x);
            cache.layer_inputs.push(x);
            if l + 1 < n_layers {
                relu_in_place(&mut y);
                let mask = match train_rng.as_deref_mut() {
                    Some(r) if self.config.dropout > 0.0 => {
                        let m: Vec<f64> = (0..y.len())
                            .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        for (v, s) in y.iter_mut().zip(&m) {
                            *v *= s;
                        }
                        Some(m)
                    }
                    _ => None,
                };
                cache.masks.push(mask);
            }
            x = y;
        }
        let out: [f64; OUTPUTS] = x.try_into().expect("head ends in 4 outputs");
        Ok((out, cache))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, z_dish: &[f64], process: Option<&[Vec<f64>]>) -> Result<[f64; OUTPUTS], ModelError> {
        self.forward(z_dish, process, None).map(|(y, _)| y)
    }

    /// Gradients of `loss_grad . y` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64; OUTPUTS]) -> Result<FusionParams, ModelError> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        loss_grad: &[f64; OUTPUTS],
        grads: &mut FusionParams,
    ) -> Result<(), ModelError> {
        if cache.version != self.version || cache.variant != self.variant {
            return Err(ModelError::StaleCache);
        }
        let head = &self.params.head;
        let mut g = loss_grad.to_vec();
        for l in (0..head.len()).rev() {
            let want_input = l > 0 || self.variant != Variant::DishOnly;
            let g_in = head[l].backward(&cache.layer_inputs[l], &g, &mut grads.head[l], want_input);
            if l == 0 {
                g = g_in.unwrap_or_default();
                break;
            }
            let mut g_in = g_in.expect("input gradient requested");
            // layer_inputs[l] = dropout(relu(pre)), so a zero entry either
            // came from the ReLU or was dropped; both block the gradient.
            let mask = &cache.masks[l - 1];
            for (i, gv) in g_in.iter_mut().enumerate() {
                let act = cache.layer_inputs[l][i];
                *gv = if act > 0.0 {
                    *gv * mask.as_ref().map_or(1.0, |m| m[i])
                } else {
                    0.0
                };
            }
            g = g_in;
        }

        let g_pooled = match self.variant {
            Variant::DishOnly => return Ok(()),
            Variant::Concat => g[self.config.dim..].to_vec(),
            Variant::Gated => {
                let (a, b, s) = cache.gated.as_ref().ok_or(ModelError::StaleCache)?;
                let g_a: Vec<f64> = g.iter().map(|v| s * v).collect();
                let g_b: Vec<f64> = g.iter().map(|v| (1.0 - s) * v).collect();
                let g_mix: f64 = g.iter().zip(a.iter().zip(b)).map(|(gv, (x, y))| gv * (x - y)).sum();
                *grads.gate.as_mut().expect("gated") += s * (1.0 - s) * g_mix;
                let pd = self.params.proj_dish.as_ref().expect("gated");
                pd.backward(&cache.z_dish, &g_a, grads.proj_dish.as_mut().expect("gated"), false);
                let pp = self.params.proj_proc.as_ref().expect("gated");
                pp.backward(&cache.pooled, &g_b, grads.proj_proc.as_mut().expect("gated"), true)
                    .expect("input gradient requested")
            }
        };
        let pool = self.params.pool.as_ref().expect("fusion model has a pool");
        let pool_cache = cache.pool.as_ref().ok_or(ModelError::StaleCache)?;
        pool_backward(
            pool,
            &cache.bag,
            pool_cache,
            &g_pooled,
            self.config.pool_mode,
            grads.pool.as_mut().expect("fusion model has a pool"),
        );
        Ok(())
    }
}

/// Model with default widths (`d_h = 512`, attention hidden 128, dropout 0.3,
/// weighted pooling).
pub fn init_model(variant: Variant, dim: usize, seed: u64) -> FusionModel {
    FusionModel::init(variant, HeadConfig::new(dim), seed)
}
