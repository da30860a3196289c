//! Feedback-driven counterfactual explanations.
//!
//! The learner's feedback ([`FeedbackConstraints`]) restricts which plants may
//! change, within which ranges, under which time budget and with how many
//! simultaneous changes. Inside that subspace the explainer returns the
//! cheapest diet (time-weighted L1 distance) the model classifies as IMPROVE,
//! or, when none exists, a [`GuidanceSuggestion`] telling the learner how to
//! relax the feedback so that one does.

mod guidance;
pub mod instances;
mod oracle;
mod search;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{DistributionStats, PredictionResult, TrainedModel};
use crate::world::{Diet, Label, LeafRange, WorldConfig};

pub use oracle::{brute_force_optimal, check_instance, InstanceCheck, BRUTE_FORCE_LIMIT};

/// Default cap on simultaneously changed plants.
pub const DEFAULT_MAX_CHANGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantRange {
    pub plant: usize,
    pub min: u32,
    pub max: u32,
}

impl PlantRange {
    pub fn range(&self) -> LeafRange {
        LeafRange::new(self.min, self.max)
    }
}

/// Learner feedback: which plants may change, how far, and at what cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackConstraints {
    pub mutable_plants: Vec<usize>,
    /// Allowed values per mutable plant; a mutable plant without an entry may
    /// take any value in its world range.
    #[serde(default)]
    pub ranges: Vec<PlantRange>,
    pub budget: u32,
    pub max_changes: usize,
}

/// Partially specified feedback as sent by a client; missing fields take the
/// defaults (all plants, full ranges, the round budget, three changes).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackInput {
    #[serde(default)]
    pub mutable_plants: Option<Vec<usize>>,
    #[serde(default)]
    pub ranges: Vec<PlantRange>,
    #[serde(default)]
    pub budget: Option<u32>,
    #[serde(default)]
    pub max_changes: Option<usize>,
}

impl FeedbackInput {
    pub fn resolve(self, world: &WorldConfig) -> Result<FeedbackConstraints> {
        let constraints = FeedbackConstraints {
            mutable_plants: self.mutable_plants.unwrap_or_else(|| (0..world.num_plants()).collect()),
            ranges: self.ranges,
            budget: self.budget.unwrap_or(world.round_budget),
            max_changes: self.max_changes.unwrap_or(DEFAULT_MAX_CHANGES.min(world.num_plants())),
        };
        constraints.validate(world)?;
        Ok(constraints)
    }
}

impl FeedbackConstraints {
    /// All plants mutable over full ranges, round budget, three changes.
    pub fn defaults(world: &WorldConfig) -> Self {
        Self {
            mutable_plants: (0..world.num_plants()).collect(),
            ranges: Vec::new(),
            budget: world.round_budget,
            max_changes: DEFAULT_MAX_CHANGES.min(world.num_plants()),
        }
    }

    pub fn validate(&self, world: &WorldConfig) -> Result<()> {
        self.allowed(world).map(|_| ())
    }

    /// Sorted `(plant, allowed range)` pairs for the mutable plants.
    pub fn allowed(&self, world: &WorldConfig) -> Result<Vec<(usize, LeafRange)>> {
        let bad = |msg: String| Err(Error::Constraint(msg));
        let plants = world.num_plants();
        if self.mutable_plants.is_empty() {
            return bad("at least one plant must be mutable".into());
        }
        let mutable: BTreeSet<usize> = self.mutable_plants.iter().copied().collect();
        if mutable.len() != self.mutable_plants.len() {
            return bad("mutable plants listed more than once".into());
        }
        if let Some(p) = mutable.iter().find(|&&p| p >= plants) {
            return bad(format!("unknown plant index {p}"));
        }
        if self.max_changes < 1 || self.max_changes > plants {
            return bad(format!("max_changes must be within 1..={plants}"));
        }
        let mut allowed: Vec<(usize, LeafRange)> = mutable.iter().map(|&p| (p, world.plants[p].range())).collect();
        let mut seen = BTreeSet::new();
        for r in &self.ranges {
            if !mutable.contains(&r.plant) {
                return bad(format!("range given for non-mutable plant {}", r.plant));
            }
            if !seen.insert(r.plant) {
                return bad(format!("plant {} has more than one range", r.plant));
            }
            let full = world.plants[r.plant].range();
            if r.min > r.max || r.min < full.min || r.max > full.max {
                return bad(format!(
                    "range {}..={} for plant {} must be non-empty and within {}..={}",
                    r.min, r.max, r.plant, full.min, full.max
                ));
            }
            let slot = allowed.iter_mut().find(|(p, _)| *p == r.plant).expect("mutable plant");
            slot.1 = r.range();
        }
        Ok(allowed)
    }

    pub fn is_mutable(&self, plant: usize) -> bool {
        self.mutable_plants.contains(&plant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantChange {
    pub plant: usize,
    pub old: u32,
    pub new: u32,
}

/// Where healthy diets in the training data sit for one plant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionHint {
    pub plant: usize,
    pub q25: u32,
    pub q75: u32,
    pub text: String,
}

impl DistributionHint {
    pub fn new(plant: usize, name: &str, q25: u32, q75: u32) -> Self {
        Self {
            plant,
            q25,
            q75,
            text: format!("For plant {name}, healthy diets in our data typically use between {q25} and {q75} leaves."),
        }
    }
}

/// A better diet the learner could have chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub original: Diet,
    pub suggested: Diet,
    /// Sum over changed plants of `leaf_cost * |new - old|`.
    pub distance: u32,
    pub changed_plants: Vec<PlantChange>,
    pub predicted: PredictionResult,
    pub hints: Vec<DistributionHint>,
}

impl Counterfactual {
    pub(crate) fn build(world: &WorldConfig, original: &Diet, suggested: Diet, predicted: PredictionResult) -> Self {
        let changed_plants: Vec<PlantChange> = original
            .leaves()
            .iter()
            .zip(suggested.leaves())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(plant, (&old, &new))| PlantChange { plant, old, new })
            .collect();
        let distance = changed_plants
            .iter()
            .map(|c| world.leaf_cost(c.plant) * c.old.abs_diff(c.new))
            .sum();
        Self {
            original: original.clone(),
            suggested,
            distance,
            changed_plants,
            predicted,
            hints: Vec::new(),
        }
    }

    pub fn sparsity(&self) -> usize {
        self.changed_plants.len()
    }

    pub fn is_identity(&self) -> bool {
        self.changed_plants.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GuidanceReason {
    /// The stated subspace holds no IMPROVE diet within budget.
    NoFlipInSubspace,
    /// An IMPROVE diet exists but costs more than the budget allows.
    BudgetTooTight,
}

/// How to relax feedback so that an explanation exists.
///
/// Applying it widens every mutable plant to its full range, adds
/// `suggested_additions` to the mutable set and replaces the budget and change
/// cap when suggested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceSuggestion {
    pub reason: GuidanceReason,
    pub suggested_additions: Vec<usize>,
    pub suggested_ranges: Vec<PlantRange>,
    pub suggested_budget: Option<u32>,
    pub suggested_max_changes: Option<usize>,
    pub message: String,
}

impl GuidanceSuggestion {
    pub fn apply(&self, constraints: &FeedbackConstraints) -> FeedbackConstraints {
        let mut mutable: BTreeSet<usize> = constraints.mutable_plants.iter().copied().collect();
        mutable.extend(self.suggested_additions.iter().copied());
        FeedbackConstraints {
            mutable_plants: mutable.into_iter().collect(),
            ranges: self.suggested_ranges.clone(),
            budget: self.suggested_budget.unwrap_or(constraints.budget),
            max_changes: self.suggested_max_changes.unwrap_or(constraints.max_changes),
        }
    }
}

/// Result of asking for an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Explanation {
    Counterfactual(Counterfactual),
    Guidance(GuidanceSuggestion),
}

impl Explanation {
    pub fn counterfactual(&self) -> Option<&Counterfactual> {
        match self {
            Explanation::Counterfactual(cf) => Some(cf),
            Explanation::Guidance(_) => None,
        }
    }

    pub fn guidance(&self) -> Option<&GuidanceSuggestion> {
        match self {
            Explanation::Counterfactual(_) => None,
            Explanation::Guidance(g) => Some(g),
        }
    }
}

/// Objective quality of one counterfactual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goodness {
    pub validity: bool,
    pub proximity: u32,
    pub sparsity: usize,
    pub feasibility: bool,
}

/// Scores `cf` with `model` deciding validity.
pub fn goodness_of(
    cf: &Counterfactual,
    model: &TrainedModel,
    constraints: &FeedbackConstraints,
    world: &WorldConfig,
) -> Goodness {
    let validity = model
        .predict(&cf.suggested)
        .map(|p| p.label == Label::Improve)
        .unwrap_or(false);
    Goodness {
        validity,
        proximity: cf.distance,
        sparsity: cf.sparsity(),
        feasibility: is_feasible(cf, constraints, world),
    }
}

/// Range, mutability, change-cap and budget compliance. An identity
/// counterfactual suggests nothing and is always feasible.
pub fn is_feasible(cf: &Counterfactual, constraints: &FeedbackConstraints, world: &WorldConfig) -> bool {
    if cf.is_identity() {
        return cf.original == cf.suggested;
    }
    let Ok(allowed) = constraints.allowed(world) else {
        return false;
    };
    if world.check_diet(&cf.suggested).is_err() || cf.original.len() != cf.suggested.len() {
        return false;
    }
    let recomputed = Counterfactual::build(world, &cf.original, cf.suggested.clone(), cf.predicted);
    if recomputed.changed_plants != cf.changed_plants || recomputed.distance != cf.distance {
        return false;
    }
    let in_range = cf.changed_plants.iter().all(|c| {
        allowed
            .iter()
            .find(|(p, _)| *p == c.plant)
            .is_some_and(|(_, r)| r.contains(c.new))
    });
    in_range && cf.sparsity() <= constraints.max_changes && world.cost_unchecked(&cf.suggested) <= constraints.budget
}

/// Counterfactual generation bound to a world, a model and training-data hints.
#[derive(Debug, Clone, Copy)]
pub struct Explainer<'a> {
    world: &'a WorldConfig,
    model: &'a TrainedModel,
    stats: &'a DistributionStats,
}

impl<'a> Explainer<'a> {
    pub fn new(world: &'a WorldConfig, model: &'a TrainedModel, stats: &'a DistributionStats) -> Self {
        Self { world, model, stats }
    }

    pub fn world(&self) -> &WorldConfig {
        self.world
    }

    pub fn model(&self) -> &TrainedModel {
        self.model
    }

    /// Minimal-distance IMPROVE diet inside the learner's subspace, or guidance
    /// when the subspace has none.
    ///
    /// An original already predicted IMPROVE yields the identity counterfactual.
    /// Otherwise single-plant changes are searched first, then pairs, then
    /// larger sets up to `max_changes`; a larger stage is entered only while its
    /// distance lower bound can still beat the incumbent, so the result is
    /// optimal over all candidates. Ties go to fewer changes, then to the
    /// lexicographically smallest suggested diet.
    pub fn generate_counterfactual(&self, original: &Diet, constraints: &FeedbackConstraints) -> Result<Explanation> {
        self.world.check_diet(original)?;
        let allowed = constraints.allowed(self.world)?;
        let predicted = self.model.predict(original)?;
        if predicted.label == Label::Improve {
            return Ok(Explanation::Counterfactual(Counterfactual::build(
                self.world,
                original,
                original.clone(),
                predicted,
            )));
        }
        let space = search::Space::new(
            self.world,
            self.model,
            original,
            &allowed,
            Some(constraints.budget),
            constraints.max_changes,
        );
        match space.staged_search()? {
            Some(found) => {
                let mut cf = Counterfactual::build(self.world, original, found.diet, found.predicted);
                cf.hints = self.hints_for(&cf);
                Ok(Explanation::Counterfactual(cf))
            }
            None => Ok(Explanation::Guidance(self.guide_constraints(original, constraints)?)),
        }
    }

    fn hints_for(&self, cf: &Counterfactual) -> Vec<DistributionHint> {
        cf.changed_plants
            .iter()
            .filter_map(|c| {
                self.stats
                    .for_plant(c.plant)
                    .map(|q| DistributionHint::new(c.plant, self.world.plant_name(c.plant), q.q25, q.q75))
            })
            .collect()
    }

    pub fn goodness_of(&self, cf: &Counterfactual, constraints: &FeedbackConstraints) -> Goodness {
        goodness_of(cf, self.model, constraints, self.world)
    }
}

#[cfg(test)]
mod tests;
