use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::manifest::{aggregate_targets, RecipeInstance};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_FOLD_SEED: u64 = 42;

/// Recipe-grouped fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, instance_id: &str) -> Option<usize> {
        self.fold_of.get(instance_id).copied()
    }

    /// Test-fold sizes, indexed by fold.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for f in self.fold_of.values() {
            s[*f] += 1;
        }
        s
    }

    /// Indices into `instances` of the test set of `fold`, in input order.
    pub fn test_indices(&self, instances: &[RecipeInstance], fold: usize) -> Vec<usize> {
        (0..instances.len())
            .filter(|&i| self.fold(&instances[i].instance_id) == Some(fold))
            .collect()
    }

    pub fn train_indices(&self, instances: &[RecipeInstance], fold: usize) -> Vec<usize> {
        (0..instances.len())
            .filter(|&i| {
                self.fold(&instances[i].instance_id)
                    .is_some_and(|f| f != fold)
            })
            .collect()
    }
}

/// Calorie-stratified, recipe-grouped k-fold split.
///
/// Instances are grouped by `recipe_id`; groups are ordered by their total
/// calorie target, cut into consecutive blocks of `k`, each block is shuffled
/// with the seeded generator, and the `j`-th group of a block goes to fold
/// `j`.
pub fn make_folds(instances: &[RecipeInstance], k: usize, seed: u64) -> Result<FoldAssignment, HarnessError> {
    if k < 2 {
        return Err(HarnessError::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    let mut groups: BTreeMap<&str, (f64, Vec<&str>)> = BTreeMap::new();
    for inst in instances {
        let kcal = aggregate_targets(inst)?.kcal;
        let g = groups.entry(inst.recipe_id.as_str()).or_default();
        g.0 += kcal;
        g.1.push(&inst.instance_id);
    }
    if groups.len() < k {
        return Err(HarnessError::TooFewRecipes {
            recipes: groups.len(),
            k,
        });
    }
    let mut ordered: Vec<(&str, f64, Vec<&str>)> = groups.into_iter().map(|(r, (c, ids))| (r, c, ids)).collect();
    ordered.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
    let mut r = rng::seeded(rng::derive_seed(seed, &[b"folds"]));
    let mut fold_of = BTreeMap::new();
    for block in ordered.chunks_mut(k) {
        block.shuffle(&mut r);
        for (fold, (_, _, ids)) in block.iter().enumerate() {
            for id in ids {
                fold_of.insert(id.to_string(), fold);
            }
        }
    }
    Ok(FoldAssignment { k, seed, fold_of })
}
