//! The black-box fitness classifier the learner is trying to understand.

mod stats;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::world::{check_in_ranges, Diet, Label, LabeledSample, LeafRange, WorldConfig};

pub use stats::{class_distribution_stats, DistributionStats, Quartiles};
pub use tree::{train, Node, TrainParams};

/// Classifier output: a label and the IMPROVE confidence it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub label: Label,
    pub score: f64,
}

impl PredictionResult {
    /// Label is IMPROVE iff `score >= 0.5`.
    pub fn from_score(score: f64) -> Self {
        let label = if score >= 0.5 { Label::Improve } else { Label::Worsen };
        Self { label, score }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub sample_count: usize,
    pub depth_limit: usize,
    pub min_leaf: usize,
    pub training_accuracy: f64,
    /// Size of the generated dataset the training rows were taken from, when
    /// the training rows are a prefix of a larger generated set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<usize>,
}

/// A serializable fitness classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainedModel {
    DecisionTree {
        /// Per-plant input domain.
        bounds: Vec<LeafRange>,
        tree: Node,
        train_meta: TrainMeta,
    },
    /// Wraps the exact ground-truth rule (scores 0 or 1).
    Oracle { world: WorldConfig },
}

impl TrainedModel {
    pub fn oracle(world: &WorldConfig) -> Self {
        TrainedModel::Oracle { world: world.clone() }
    }

    pub fn bounds(&self) -> Vec<LeafRange> {
        match self {
            TrainedModel::DecisionTree { bounds, .. } => bounds.clone(),
            TrainedModel::Oracle { world } => world.ranges(),
        }
    }

    pub fn predict(&self, diet: &Diet) -> Result<PredictionResult> {
        match self {
            TrainedModel::DecisionTree { bounds, tree, .. } => {
                check_in_ranges(bounds, diet)?;
                Ok(PredictionResult::from_score(tree.score(diet)))
            }
            TrainedModel::Oracle { world } => {
                let score = match world.ground_truth_label(diet)? {
                    Label::Improve => 1.0,
                    Label::Worsen => 0.0,
                };
                Ok(PredictionResult::from_score(score))
            }
        }
    }

    pub fn train_meta(&self) -> Option<&TrainMeta> {
        match self {
            TrainedModel::DecisionTree { train_meta, .. } => Some(train_meta),
            TrainedModel::Oracle { .. } => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<()> {
        match self {
            TrainedModel::DecisionTree { bounds, tree, .. } => tree.validate(bounds),
            TrainedModel::Oracle { world } => world.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_improve: usize,
    pub false_improve: usize,
    pub true_worsen: usize,
    pub false_worsen: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_improve + self.false_improve + self.true_worsen + self.false_worsen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub clean_accuracy: f64,
    /// Confusion counts against the (possibly noisy) label.
    pub confusion: Confusion,
}

pub fn evaluate(model: &TrainedModel, samples: &[LabeledSample]) -> Result<AccuracyReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation samples"));
    }
    let mut confusion = Confusion::default();
    let mut clean_hits = 0usize;
    for s in samples {
        let predicted = model.predict(&s.diet)?.label;
        match (predicted, s.label) {
            (Label::Improve, Label::Improve) => confusion.true_improve += 1,
            (Label::Improve, Label::Worsen) => confusion.false_improve += 1,
            (Label::Worsen, Label::Worsen) => confusion.true_worsen += 1,
            (Label::Worsen, Label::Improve) => confusion.false_worsen += 1,
        }
        if predicted == s.clean_label {
            clean_hits += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(AccuracyReport {
        accuracy: (confusion.true_improve + confusion.true_worsen) as f64 / n,
        clean_accuracy: clean_hits as f64 / n,
        confusion,
    })
}

/// Output of [`train_for_world`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub model: TrainedModel,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub holdout: AccuracyReport,
}

/// Generates `samples` labelled diets with `params.seed`, trains on the first
/// `1 - holdout_fraction` of them and evaluates on the rest. The model's input
/// domain is the world's leaf ranges.
pub fn train_for_world(
    world: &WorldConfig,
    samples: usize,
    holdout_fraction: f64,
    params: &TrainParams,
) -> Result<TrainingRun> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::Validation(format!(
            "holdout fraction {holdout_fraction} is outside [0, 1)"
        )));
    }
    let all = crate::world::generate_dataset(world, samples, params.seed)?;
    let holdout_rows = (samples as f64 * holdout_fraction).round() as usize;
    let (train_rows, test_rows) = all.split_at(samples - holdout_rows);
    let mut model = train(train_rows, params)?;
    if let TrainedModel::DecisionTree { bounds, train_meta, .. } = &mut model {
        *bounds = world.ranges();
        train_meta.dataset_size = (holdout_rows > 0).then_some(samples);
    }
    let holdout = if test_rows.is_empty() {
        evaluate(&model, train_rows)?
    } else {
        evaluate(&model, test_rows)?
    };
    Ok(TrainingRun {
        model,
        train_rows: train_rows.len(),
        holdout_rows,
        holdout,
    })
}
