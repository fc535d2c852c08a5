use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::manifest::NutritionVector;

/// Standard deviations at or below this are replaced by 1.
const STD_FLOOR: f64 = 1e-12;

/// Per-nutrient z-score statistics (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

pub fn zscore_fit(targets: &[NutritionVector]) -> Result<NormStats, HarnessError> {
    if targets.len() < 2 {
        return Err(HarnessError::InvalidConfig(format!(
            "need at least 2 targets to fit normalisation, got {}",
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mut mean = [0.0; 4];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.to_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 4];
    for t in targets {
        for (c, v) in t.to_array().into_iter().enumerate() {
            var[c] += (v - mean[c]).powi(2);
        }
    }
    let std = var.map(|v| {
        let s = (v / n).sqrt();
        if s <= STD_FLOOR {
            1.0
        } else {
            s
        }
    });
    Ok(NormStats { mean, std })
}

pub fn zscore_apply(t: &NutritionVector, stats: &NormStats) -> [f64; 4] {
    let a = t.to_array();
    std::array::from_fn(|c| (a[c] - stats.mean[c]) / stats.std[c])
}

pub fn zscore_invert(n: &[f64; 4], stats: &NormStats) -> NutritionVector {
    NutritionVector::from_array(std::array::from_fn(|c| n[c] * stats.std[c] + stats.mean[c]))
}
