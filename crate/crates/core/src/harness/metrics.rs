use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::manifest::NutritionVector;

/// Per-nutrient errors for one prediction set, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mae: [f64; 4],
    /// Absent when either side has zero variance.
    pub pearson: [Option<f64>; 4],
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn evaluate(preds: &[NutritionVector], targets: &[NutritionVector]) -> Result<MetricsReport, HarnessError> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(HarnessError::LengthMismatch {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    let n = preds.len();
    let col = |v: &[NutritionVector], c: usize| v.iter().map(|t| t.to_array()[c]).collect::<Vec<_>>();
    let mae = std::array::from_fn(|c| {
        preds
            .iter()
            .zip(targets)
            .map(|(p, t)| (p.to_array()[c] - t.to_array()[c]).abs())
            .sum::<f64>()
            / n as f64
    });
    let pearson = std::array::from_fn(|c| pearson(&col(preds, c), &col(targets, c)));
    Ok(MetricsReport { n, mae, pearson })
}
