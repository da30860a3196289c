//! Cardinality-staged counterfactual search.

use itertools::Itertools;

use crate::error::Result;
use crate::predictor::{PredictionResult, TrainedModel};
use crate::world::{Diet, Label, LeafRange, WorldConfig};

#[derive(Debug, Clone)]
struct Choice {
    plant: usize,
    cost: u32,
    /// Allowed values other than the original one.
    values: Vec<u32>,
    /// Cheapest possible change of this plant.
    min_step: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Found {
    pub diet: Diet,
    pub distance: u32,
    pub changes: usize,
    pub predicted: PredictionResult,
}

impl Found {
    fn beats(&self, other: &Found) -> bool {
        (self.distance, self.changes, self.diet.leaves()) < (other.distance, other.changes, other.diet.leaves())
    }
}

pub(crate) struct Space<'a> {
    world: &'a WorldConfig,
    model: &'a TrainedModel,
    original: &'a Diet,
    choices: Vec<Choice>,
    budget: Option<u32>,
    max_changes: usize,
}

impl<'a> Space<'a> {
    pub fn new(
        world: &'a WorldConfig,
        model: &'a TrainedModel,
        original: &'a Diet,
        allowed: &[(usize, LeafRange)],
        budget: Option<u32>,
        max_changes: usize,
    ) -> Self {
        let choices = allowed
            .iter()
            .filter_map(|&(plant, range)| {
                let old = original.get(plant);
                let cost = world.leaf_cost(plant);
                let values: Vec<u32> = range.values().filter(|&v| v != old).collect();
                let min_step = values.iter().map(|&v| cost * v.abs_diff(old)).min()?;
                Some(Choice {
                    plant,
                    cost,
                    values,
                    min_step,
                })
            })
            .collect();
        Self {
            world,
            model,
            original,
            choices,
            budget,
            max_changes,
        }
    }

    pub fn staged_search(&self) -> Result<Option<Found>> {
        let mut steps: Vec<u32> = self.choices.iter().map(|c| c.min_step).collect();
        steps.sort_unstable();
        let base_cost = self.world.cost_unchecked(self.original);
        let mut best: Option<Found> = None;

        for k in 1..=self.max_changes.min(self.choices.len()) {
            // Any k-change candidate costs at least the k cheapest steps; an equal
            // distance would still lose the tie on sparsity.
            let stage_bound: u32 = steps[..k].iter().sum();
            if best.as_ref().is_some_and(|b| stage_bound >= b.distance) {
                break;
            }
            for subset in self.choices.iter().combinations(k) {
                let subset_bound: u32 = subset.iter().map(|c| c.min_step).sum();
                if best.as_ref().is_some_and(|b| subset_bound > b.distance) {
                    continue;
                }
                for values in subset
                    .iter()
                    .map(|c| c.values.iter().copied())
                    .multi_cartesian_product()
                {
                    if let Some(found) = self.evaluate(&subset, &values, base_cost, best.as_ref())? {
                        best = Some(found);
                    }
                }
            }
        }
        Ok(best)
    }

    fn evaluate(
        &self,
        subset: &[&Choice],
        values: &[u32],
        base_cost: u32,
        best: Option<&Found>,
    ) -> Result<Option<Found>> {
        let mut distance = 0;
        let mut cost = i64::from(base_cost);
        for (c, &v) in subset.iter().zip(values) {
            let old = self.original.get(c.plant);
            distance += c.cost * v.abs_diff(old);
            cost += i64::from(c.cost) * (i64::from(v) - i64::from(old));
        }
        if best.is_some_and(|b| distance > b.distance) {
            return Ok(None);
        }
        if self.budget.is_some_and(|budget| cost > i64::from(budget)) {
            return Ok(None);
        }
        let mut leaves = self.original.leaves().to_vec();
        for (c, &v) in subset.iter().zip(values) {
            leaves[c.plant] = v;
        }
        let candidate = Found {
            diet: Diet(leaves),
            distance,
            changes: subset.len(),
            predicted: PredictionResult::from_score(0.0),
        };
        if best.is_some_and(|b| !candidate.beats(b)) {
            return Ok(None);
        }
        let predicted = self.model.predict(&candidate.diet)?;
        if predicted.label != Label::Improve {
            return Ok(None);
        }
        Ok(Some(Found { predicted, ..candidate }))
    }
}
