use rand::Rng;

use crate::rng::Rng64;

/// Dense affine map `y = W x + b` with `W` stored row-major (`out x in`).
/// A layer built without bias keeps an empty `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize, with_bias: bool) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: if with_bias { vec![0.0; out_dim] } else { Vec::new() },
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, with_bias: bool, rng: &mut Rng64) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, with_bias);
        for w in &mut layer.weight {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.out_dim, self.has_bias())
    }

    pub fn has_bias(&self) -> bool {
        !self.bias.is_empty()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        (0..self.out_dim)
            .map(|o| {
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + self.bias.get(o).copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the input.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Linear, want_input: bool) -> Option<Vec<f64>> {
        let mut grad_in = want_input.then(|| vec![0.0; self.in_dim]);
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let span = o * self.in_dim..(o + 1) * self.in_dim;
            for (gw, v) in grad.weight[span.clone()].iter_mut().zip(x) {
                *gw += g * v;
            }
            if self.has_bias() {
                grad.bias[o] += g;
            }
            if let Some(gi) = grad_in.as_mut() {
                for (acc, w) in gi.iter_mut().zip(&self.weight[span]) {
                    *acc += g * w;
                }
            }
        }
        grad_in
    }
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}
