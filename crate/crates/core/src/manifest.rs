//! Benchmark data model: recipe instances, tiers, dish-level targets and
//! distribution statistics.
//!
//! Manifests are JSON Lines files, one [`RecipeInstance`] per line. Blank
//! lines are ignored. Timestamps are kept at millisecond precision.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUTRIENTS: [&str; 4] = ["kcal", "protein_g", "fat_g", "carb_g"];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    InvalidField {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate instance_id `{id}`")]
    DuplicateInstanceId { line: usize, id: String },
    #[error("ingredient `{0}` has no nutrition label")]
    MissingNutrition(String),
    #[error("manifest is empty")]
    EmptyManifest,
}

/// Dish- or ingredient-level nutrition in the fixed order
/// `[kcal, protein, fat, carb]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NutritionVector {
    pub kcal: f64,
    pub protein_g: f64,
    pub fat_g: f64,
    pub carb_g: f64,
}

impl NutritionVector {
    pub const ZERO: Self = Self {
        kcal: 0.0,
        protein_g: 0.0,
        fat_g: 0.0,
        carb_g: 0.0,
    };

    pub fn new(kcal: f64, protein_g: f64, fat_g: f64, carb_g: f64) -> Self {
        Self {
            kcal,
            protein_g,
            fat_g,
            carb_g,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.kcal, self.protein_g, self.fat_g, self.carb_g]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|v| *v == 0.0)
    }
}

impl Add for NutritionVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (a, b) = (self.to_array(), rhs.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl AddAssign for NutritionVector {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingredient {
    pub name: String,
    pub nutrition: Option<NutritionVector>,
    pub add_event_ts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeInstance {
    pub instance_id: String,
    pub recipe_id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub dish_frame_ts: f64,
    pub ingredients: Vec<Ingredient>,
}

impl RecipeInstance {
    /// Present add-event timestamps in ingredient order.
    pub fn add_events(&self) -> impl Iterator<Item = f64> + '_ {
        self.ingredients.iter().filter_map(|i| i.add_event_ts)
    }
}

/// Benchmark tier. Ordered so that a richer annotation compares greater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    All,
    RegressionReady,
    FullyComplete,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::All => "all",
            Tier::RegressionReady => "regression-ready",
            Tier::FullyComplete => "fully-complete",
        })
    }
}

/// Sums ingredient nutrition into the dish-level target.
pub fn aggregate_targets(instance: &RecipeInstance) -> Result<NutritionVector, ManifestError> {
    instance
        .ingredients
        .iter()
        .try_fold(NutritionVector::ZERO, |acc, ing| match ing.nutrition {
            Some(n) => Ok(acc + n),
            None => Err(ManifestError::MissingNutrition(ing.name.clone())),
        })
}

pub fn classify_tier(instance: &RecipeInstance) -> Tier {
    let all_nutrition = instance.ingredients.iter().all(|i| i.nutrition.is_some());
    if !all_nutrition {
        return Tier::All;
    }
    if instance.ingredients.iter().all(|i| i.add_event_ts.is_some()) {
        Tier::FullyComplete
    } else {
        Tier::RegressionReady
    }
}

/// Cumulative tier counts: `[all, regression_ready, fully_complete]`.
pub fn tier_counts(instances: &[RecipeInstance]) -> [usize; 3] {
    let mut counts = [instances.len(), 0, 0];
    for inst in instances {
        match classify_tier(inst) {
            Tier::All => {}
            Tier::RegressionReady => counts[1] += 1,
            Tier::FullyComplete => {
                counts[1] += 1;
                counts[2] += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NutrientStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionStats {
    pub count: usize,
    /// One entry per nutrient, in [`NUTRIENTS`] order.
    pub nutrients: [NutrientStats; 4],
    /// Instances whose whole target vector is zero.
    pub zero_count: usize,
}

pub fn distribution_stats(instances: &[RecipeInstance]) -> Result<DistributionStats, ManifestError> {
    if instances.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    let targets = instances
        .iter()
        .map(aggregate_targets)
        .collect::<Result<Vec<_>, _>>()?;
    let zero_count = targets.iter().filter(|t| t.is_zero()).count();
    let nutrients = std::array::from_fn(|c| {
        let mut col: Vec<f64> = targets.iter().map(|t| t.to_array()[c]).collect();
        col.sort_by(f64::total_cmp);
        let n = col.len();
        let median = if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        };
        NutrientStats {
            min: col[0],
            max: col[n - 1],
            mean: col.iter().sum::<f64>() / n as f64,
            median,
        }
    });
    Ok(DistributionStats {
        count: targets.len(),
        nutrients,
        zero_count,
    })
}

pub fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Non-fatal annotation issues found during validation.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifestWarning {
    AddEventAfterDish {
        instance_id: String,
        ingredient: String,
        add_event_ts: f64,
        dish_frame_ts: f64,
    },
}

impl fmt::Display for ManifestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestWarning::AddEventAfterDish {
                instance_id,
                ingredient,
                add_event_ts,
                dish_frame_ts,
            } => write!(
                f,
                "{instance_id}: add-event for `{ingredient}` at {add_event_ts}s is after the dish frame at {dish_frame_ts}s"
            ),
        }
    }
}

pub fn check_warnings(instances: &[RecipeInstance]) -> Vec<ManifestWarning> {
    let mut out = Vec::new();
    for inst in instances {
        for ing in &inst.ingredients {
            if let Some(ts) = ing.add_event_ts {
                if ts > inst.dish_frame_ts {
                    out.push(ManifestWarning::AddEventAfterDish {
                        instance_id: inst.instance_id.clone(),
                        ingredient: ing.name.clone(),
                        add_event_ts: ts,
                        dish_frame_ts: inst.dish_frame_ts,
                    });
                }
            }
        }
    }
    out
}

// On-disk record shapes.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngredientRecord {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kcal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    protein_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fat_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carb_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    add_event_ts: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    instance_id: String,
    recipe_id: String,
    video_id: String,
    duration_s: f64,
    dish_frame_ts: f64,
    ingredients: Vec<IngredientRecord>,
}

impl From<&RecipeInstance> for InstanceRecord {
    fn from(inst: &RecipeInstance) -> Self {
        InstanceRecord {
            instance_id: inst.instance_id.clone(),
            recipe_id: inst.recipe_id.clone(),
            video_id: inst.video_id.clone(),
            duration_s: round_ms(inst.duration_s),
            dish_frame_ts: round_ms(inst.dish_frame_ts),
            ingredients: inst
                .ingredients
                .iter()
                .map(|ing| {
                    let n = ing.nutrition;
                    IngredientRecord {
                        name: ing.name.clone(),
                        kcal: n.map(|n| n.kcal),
                        protein_g: n.map(|n| n.protein_g),
                        fat_g: n.map(|n| n.fat_g),
                        carb_g: n.map(|n| n.carb_g),
                        add_event_ts: ing.add_event_ts.map(round_ms),
                    }
                })
                .collect(),
        }
    }
}

fn invalid(line: usize, field: impl Into<String>, message: impl Into<String>) -> ManifestError {
    ManifestError::InvalidField {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn instance_from_record(rec: InstanceRecord, line: usize) -> Result<RecipeInstance, ManifestError> {
    if rec.instance_id.is_empty() {
        return Err(invalid(line, "instance_id", "must not be empty"));
    }
    let duration_s = round_ms(rec.duration_s);
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(invalid(line, "duration_s", "must be a positive number of seconds"));
    }
    let dish_frame_ts = round_ms(rec.dish_frame_ts);
    if !(0.0..=duration_s).contains(&dish_frame_ts) {
        return Err(invalid(
            line,
            "dish_frame_ts",
            format!("{dish_frame_ts} outside [0, {duration_s}]"),
        ));
    }
    let mut ingredients = Vec::with_capacity(rec.ingredients.len());
    for (j, ing) in rec.ingredients.into_iter().enumerate() {
        let field = |f: &str| format!("ingredients[{j}].{f}");
        let nutrition = match (ing.kcal, ing.protein_g, ing.fat_g, ing.carb_g) {
            (None, None, None, None) => None,
            (Some(k), Some(p), Some(f), Some(c)) => {
                let n = NutritionVector::new(k, p, f, c);
                if !n.is_valid() {
                    return Err(invalid(line, field("kcal"), "nutrition must be finite and >= 0"));
                }
                Some(n)
            }
            _ => {
                return Err(invalid(
                    line,
                    field("kcal"),
                    "nutrition must have all of kcal, protein_g, fat_g, carb_g or none",
                ))
            }
        };
        let add_event_ts = ing.add_event_ts.map(round_ms);
        if let Some(ts) = add_event_ts {
            if !(0.0..=duration_s).contains(&ts) {
                return Err(invalid(
                    line,
                    field("add_event_ts"),
                    format!("{ts} outside [0, {duration_s}]"),
                ));
            }
        }
        ingredients.push(Ingredient {
            name: ing.name,
            nutrition,
            add_event_ts,
        });
    }
    Ok(RecipeInstance {
        instance_id: rec.instance_id,
        recipe_id: rec.recipe_id,
        video_id: rec.video_id,
        duration_s,
        dish_frame_ts,
        ingredients,
    })
}

/// Parses manifest text. Line numbers in errors are 1-based; a file
/// without records is rejected.
pub fn parse_manifest(reader: impl BufRead) -> Result<Vec<RecipeInstance>, ManifestError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let inst = instance_from_record(rec, line_no)?;
        if !seen.insert(inst.instance_id.clone()) {
            return Err(ManifestError::DuplicateInstanceId {
                line: line_no,
                id: inst.instance_id,
            });
        }
        out.push(inst);
    }
    if out.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<RecipeInstance>, ManifestError> {
    parse_manifest(BufReader::new(File::open(path)?))
}

pub fn write_manifest(instances: &[RecipeInstance], mut w: impl Write) -> Result<(), ManifestError> {
    for inst in instances {
        let line = serde_json::to_string(&InstanceRecord::from(inst))
            .map_err(|e| ManifestError::Io(e.into()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_manifest(instances: &[RecipeInstance], path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_manifest(instances, &mut w)?;
    w.flush()?;
    Ok(())
}
