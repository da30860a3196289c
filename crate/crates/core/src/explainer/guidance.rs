//! Guidance when the learner's feedback admits no explanation.

use itertools::Itertools;

use super::search::Space;
use super::{Explainer, FeedbackConstraints, GuidanceReason, GuidanceSuggestion, PlantRange};
use crate::error::{Error, Result};
use crate::world::{Diet, Label, LeafRange};

/// Candidate relaxation of the learner's feedback.
#[derive(Debug, Clone)]
struct Relaxed {
    mutable: Vec<usize>,
    max_changes: usize,
}

impl Explainer<'_> {
    /// Suggests how to relax `constraints` so that an explanation exists.
    ///
    /// Ranges of the current mutable plants are widened first. If a flip then
    /// exists only above the budget the suggestion is to raise the budget to
    /// the cheapest such flip. If no flip exists at all, non-mutable plants are
    /// added in ascending index order until one fits the budget; failing that,
    /// the budget and finally the change cap are raised. The suggestion is
    /// checked against the search before it is returned.
    pub fn guide_constraints(&self, original: &Diet, constraints: &FeedbackConstraints) -> Result<GuidanceSuggestion> {
        self.world.check_diet(original)?;
        constraints.validate(self.world)?;
        let budget = constraints.budget;
        let mut relaxed = Relaxed {
            mutable: constraints.mutable_plants.iter().copied().sorted().collect(),
            max_changes: constraints.max_changes,
        };

        let suggestion = if self.flips_within(original, &relaxed, budget)? {
            self.suggest(GuidanceReason::NoFlipInSubspace, constraints, &relaxed, None)
        } else if let Some(min_budget) = self.cheapest_flip(original, &relaxed)? {
            self.suggest(GuidanceReason::BudgetTooTight, constraints, &relaxed, Some(min_budget))
        } else {
            self.grow(original, constraints, &mut relaxed)?
        };

        let applied = suggestion.apply(constraints);
        match self.generate_counterfactual(original, &applied)? {
            super::Explanation::Counterfactual(_) => Ok(suggestion),
            super::Explanation::Guidance(_) => Err(Error::ModelDegenerate),
        }
    }

    fn grow(
        &self,
        original: &Diet,
        constraints: &FeedbackConstraints,
        relaxed: &mut Relaxed,
    ) -> Result<GuidanceSuggestion> {
        let budget = constraints.budget;
        for plant in 0..self.world.num_plants() {
            if relaxed.mutable.contains(&plant) {
                continue;
            }
            relaxed.mutable.push(plant);
            relaxed.mutable.sort_unstable();
            if self.flips_within(original, relaxed, budget)? {
                return Ok(self.suggest(GuidanceReason::NoFlipInSubspace, constraints, relaxed, None));
            }
        }
        if let Some(min_budget) = self.cheapest_flip(original, relaxed)? {
            return Ok(self.suggest(GuidanceReason::BudgetTooTight, constraints, relaxed, Some(min_budget)));
        }
        while relaxed.max_changes < self.world.num_plants() {
            relaxed.max_changes += 1;
            if let Some(min_budget) = self.cheapest_flip(original, relaxed)? {
                return Ok(if min_budget <= budget {
                    self.suggest(GuidanceReason::NoFlipInSubspace, constraints, relaxed, None)
                } else {
                    self.suggest(GuidanceReason::BudgetTooTight, constraints, relaxed, Some(min_budget))
                });
            }
        }
        Err(Error::ModelDegenerate)
    }

    fn full_ranges(&self, relaxed: &Relaxed) -> Vec<(usize, LeafRange)> {
        relaxed
            .mutable
            .iter()
            .map(|&p| (p, self.world.plants[p].range()))
            .collect()
    }

    fn flips_within(&self, original: &Diet, relaxed: &Relaxed, budget: u32) -> Result<bool> {
        let allowed = self.full_ranges(relaxed);
        let space = Space::new(
            self.world,
            self.model,
            original,
            &allowed,
            Some(budget),
            relaxed.max_changes,
        );
        Ok(space.staged_search()?.is_some())
    }

    /// Lowest diet cost of any IMPROVE diet reachable with at most
    /// `max_changes` changes over full ranges of the mutable plants.
    fn cheapest_flip(&self, original: &Diet, relaxed: &Relaxed) -> Result<Option<u32>> {
        let mut best: Option<u32> = None;
        let base = original.leaves();
        for (plant, range) in self.full_ranges(relaxed) {
            debug_assert!(range.contains(base[plant]));
        }
        let per_plant: Vec<Vec<u32>> = (0..base.len())
            .map(|p| {
                if relaxed.mutable.contains(&p) {
                    self.world.plants[p].range().values().collect()
                } else {
                    vec![base[p]]
                }
            })
            .collect();
        for leaves in per_plant.into_iter().multi_cartesian_product() {
            let changes = leaves.iter().zip(base).filter(|(a, b)| a != b).count();
            if changes > relaxed.max_changes {
                continue;
            }
            let diet = Diet(leaves);
            let cost = self.world.cost_unchecked(&diet);
            if best.is_some_and(|b| cost >= b) {
                continue;
            }
            if self.model.predict(&diet)?.label == Label::Improve {
                best = Some(cost);
            }
        }
        Ok(best)
    }

    fn suggest(
        &self,
        reason: GuidanceReason,
        constraints: &FeedbackConstraints,
        relaxed: &Relaxed,
        budget: Option<u32>,
    ) -> GuidanceSuggestion {
        let additions: Vec<usize> = relaxed
            .mutable
            .iter()
            .copied()
            .filter(|p| !constraints.is_mutable(*p))
            .collect();
        let max_changes = (relaxed.max_changes != constraints.max_changes).then_some(relaxed.max_changes);
        let ranges = self
            .full_ranges(relaxed)
            .into_iter()
            .map(|(plant, r)| PlantRange {
                plant,
                min: r.min,
                max: r.max,
            })
            .collect();
        let names = |plants: &[usize]| plants.iter().map(|&p| self.world.plant_name(p)).join(", ");

        let mut parts = Vec::new();
        if additions.is_empty() && budget.is_none() && max_changes.is_none() {
            parts.push(format!(
                "No better diet fits your ranges. Try allowing the full leaf range for {}.",
                names(&relaxed.mutable)
            ));
        }
        if !additions.is_empty() {
            parts.push(format!(
                "Changing only {} cannot make Shub healthier. Try also changing {}.",
                names(&constraints.mutable_plants),
                names(&additions)
            ));
        }
        if let Some(b) = budget {
            parts.push(format!(
                "A healthier diet exists but needs at least {b} time units; your budget is {}.",
                constraints.budget
            ));
        }
        if let Some(k) = max_changes {
            parts.push(format!("Allow up to {k} plants to change at once."));
        }

        GuidanceSuggestion {
            reason,
            suggested_additions: additions,
            suggested_ranges: ranges,
            suggested_budget: budget,
            suggested_max_changes: max_changes,
            message: parts.join(" "),
        }
    }
}
