//! Greedy Gini classification tree on integer features.
//!
//! Split quality is compared in exact integer arithmetic so the chosen split
//! never depends on floating-point rounding.

use serde::{Deserialize, Serialize};

use super::{TrainMeta, TrainedModel};
use crate::error::{Error, Result};
use crate::world::{Diet, Label, LabeledSample, LeafRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafPayload {
    pub label: Label,
    /// Fraction of training rows at this leaf labeled IMPROVE.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        plant: usize,
        /// Half-integer; `diet[plant] <= threshold` goes left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        leaf: LeafPayload,
    },
}

impl Node {
    pub fn leaf(score: f64) -> Self {
        let label = if score >= 0.5 { Label::Improve } else { Label::Worsen };
        Node::Leaf {
            leaf: LeafPayload { label, score },
        }
    }

    pub fn score(&self, diet: &Diet) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { leaf } => return leaf.score,
                Node::Split {
                    plant,
                    threshold,
                    left,
                    right,
                } => {
                    node = if f64::from(diet.get(*plant)) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub(super) fn validate(&self, bounds: &[LeafRange]) -> Result<()> {
        match self {
            Node::Leaf { leaf } => {
                if !(0.0..=1.0).contains(&leaf.score) || leaf.label.is_improve() != (leaf.score >= 0.5) {
                    return Err(Error::Validation(format!("inconsistent leaf {leaf:?}")));
                }
                Ok(())
            }
            Node::Split {
                plant,
                threshold,
                left,
                right,
            } => {
                let range = bounds
                    .get(*plant)
                    .ok_or_else(|| Error::Validation(format!("split on unknown plant {plant}")))?;
                let is_half = (threshold - threshold.floor() - 0.5).abs() < 1e-12;
                if !is_half || *threshold < f64::from(range.min) || *threshold > f64::from(range.max) {
                    return Err(Error::Validation(format!(
                        "threshold {threshold} for plant {plant} is not a half-integer inside its range"
                    )));
                }
                left.validate(bounds)?;
                right.validate(bounds)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainParams {
    pub depth_limit: usize,
    pub min_leaf: usize,
    /// Recorded in the model metadata; training itself uses no randomness.
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            depth_limit: 8,
            min_leaf: 5,
            seed: 42,
        }
    }
}

/// Grows a tree by greedy Gini minimization.
///
/// Candidate thresholds are `v + 0.5` for each integer `v` between the
/// feature's observed domain bounds. Ties go to the lowest plant index, then
/// the lowest threshold. A split is admissible only if both children keep at
/// least `min_leaf` rows; growth stops at `depth_limit`, at a pure node or when
/// no split is admissible.
pub fn train(samples: &[LabeledSample], params: &TrainParams) -> Result<TrainedModel> {
    let first = samples.first().ok_or(Error::Empty("training samples"))?;
    if params.depth_limit < 1 {
        return Err(Error::Validation("depth_limit must be at least 1".into()));
    }
    let plants = first.diet.len();
    if samples.iter().any(|s| s.diet.len() != plants) {
        return Err(Error::Validation("training diets have inconsistent lengths".into()));
    }
    let bounds: Vec<LeafRange> = (0..plants)
        .map(|p| {
            let (lo, hi) = samples
                .iter()
                .map(|s| s.diet.get(p))
                .fold((u32::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)));
            LeafRange::new(lo, hi)
        })
        .collect();

    let rows: Vec<&LabeledSample> = samples.iter().collect();
    let grower = Grower {
        bounds: &bounds,
        depth_limit: params.depth_limit,
        min_leaf: params.min_leaf.max(1),
    };
    let tree = grower.grow(rows, 0);

    let hits = samples
        .iter()
        .filter(|s| (tree.score(&s.diet) >= 0.5) == s.label.is_improve())
        .count();
    Ok(TrainedModel::DecisionTree {
        bounds,
        tree,
        train_meta: TrainMeta {
            seed: params.seed,
            sample_count: samples.len(),
            depth_limit: params.depth_limit,
            min_leaf: params.min_leaf,
            training_accuracy: hits as f64 / samples.len() as f64,
            dataset_size: None,
        },
    })
}

struct Grower<'a> {
    bounds: &'a [LeafRange],
    depth_limit: usize,
    min_leaf: usize,
}

/// Exact split score: sum over children of `(a^2 + b^2) / n`, kept as a fraction.
/// Maximizing it minimizes the weighted Gini impurity.
#[derive(Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: (u64, u64), right: (u64, u64)) -> Self {
        let q = |(a, b): (u64, u64)| u128::from(a * a + b * b);
        let nl = u128::from(left.0 + left.1);
        let nr = u128::from(right.0 + right.1);
        Self {
            num: q(left) * nr + q(right) * nl,
            den: nl * nr,
        }
    }

    fn beats(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }
}

impl Grower<'_> {
    fn grow(&self, rows: Vec<&LabeledSample>, depth: usize) -> Node {
        let n = rows.len() as u64;
        let improve = rows.iter().filter(|s| s.label.is_improve()).count() as u64;
        let score = improve as f64 / n as f64;
        if depth >= self.depth_limit || improve == 0 || improve == n || n < 2 * self.min_leaf as u64 {
            return Node::leaf(score);
        }
        let Some((plant, cut)) = self.best_split(&rows) else {
            return Node::leaf(score);
        };
        let (left, right): (Vec<_>, Vec<_>) = rows.into_iter().partition(|s| s.diet.get(plant) <= cut);
        Node::Split {
            plant,
            threshold: f64::from(cut) + 0.5,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }

    /// Returns `(plant, v)` for the best split `x[plant] <= v`.
    fn best_split(&self, rows: &[&LabeledSample]) -> Option<(usize, u32)> {
        let mut best: Option<(SplitScore, usize, u32)> = None;
        for (plant, range) in self.bounds.iter().enumerate() {
            let width = (range.max - range.min) as usize + 1;
            // (improve, worsen) counts per leaf value
            let mut hist = vec![(0u64, 0u64); width];
            for s in rows {
                let slot = &mut hist[(s.diet.get(plant) - range.min) as usize];
                if s.label.is_improve() {
                    slot.0 += 1;
                } else {
                    slot.1 += 1;
                }
            }
            let total = hist.iter().fold((0, 0), |acc, h| (acc.0 + h.0, acc.1 + h.1));
            let mut left = (0u64, 0u64);
            for (offset, h) in hist.iter().enumerate().take(width - 1) {
                left = (left.0 + h.0, left.1 + h.1);
                let right = (total.0 - left.0, total.1 - left.1);
                if left.0 + left.1 < self.min_leaf as u64 || right.0 + right.1 < self.min_leaf as u64 {
                    continue;
                }
                let candidate = SplitScore::new(left, right);
                if best.as_ref().is_none_or(|(b, _, _)| candidate.beats(b)) {
                    best = Some((candidate, plant, range.min + offset as u32));
                }
            }
        }
        best.map(|(_, plant, cut)| (plant, cut))
    }
}
