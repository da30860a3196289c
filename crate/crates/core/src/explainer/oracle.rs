//! Exhaustive reference for the staged search.

use super::{Counterfactual, FeedbackConstraints};
use crate::error::{Error, Result};
use crate::predictor::TrainedModel;
use crate::world::{Diet, Label, WorldConfig};

/// Largest subspace `brute_force_optimal` will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Enumerates every diet in the constrained subgrid and keeps the best
/// IMPROVE candidate under the same objective and tie-break as
/// [`super::Explainer::generate_counterfactual`]. Hints are not attached.
pub fn brute_force_optimal(
    world: &WorldConfig,
    model: &TrainedModel,
    original: &Diet,
    constraints: &FeedbackConstraints,
) -> Result<Option<Counterfactual>> {
    world.check_diet(original)?;
    let allowed = constraints.allowed(world)?;
    let predicted = model.predict(original)?;
    if predicted.label == Label::Improve {
        return Ok(Some(Counterfactual::build(
            world,
            original,
            original.clone(),
            predicted,
        )));
    }

    // Per plant: the original value first, then every allowed value.
    let mut options: Vec<Vec<u32>> = original.leaves().iter().map(|&v| vec![v]).collect();
    for (plant, range) in &allowed {
        options[*plant].extend(range.values().filter(|&v| v != original.get(*plant)));
    }
    let size: u64 = options.iter().map(|o| o.len() as u64).product();
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SubspaceTooLarge(size));
    }

    let mut best: Option<(u32, usize, Vec<u32>)> = None;
    let mut index = vec![0usize; options.len()];
    loop {
        let leaves: Vec<u32> = index.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        let changes = index.iter().filter(|&&i| i != 0).count();
        let mut distance = 0u32;
        let mut cost = 0u32;
        for (p, &v) in leaves.iter().enumerate() {
            distance += world.plants[p].leaf_cost * v.abs_diff(original.get(p));
            cost += world.plants[p].leaf_cost * v;
        }
        if changes <= constraints.max_changes && cost <= constraints.budget {
            let key = (distance, changes, leaves);
            let better = match &best {
                None => true,
                Some(b) => key < *b,
            };
            if better && model.predict(&Diet(key.2.clone()))?.label == Label::Improve {
                best = Some(key);
            }
        }

        // advance the odometer
        let mut p = options.len();
        loop {
            if p == 0 {
                return best
                    .map(|(_, _, leaves)| {
                        let diet = Diet(leaves);
                        let predicted = model.predict(&diet)?;
                        Ok(Counterfactual::build(world, original, diet, predicted))
                    })
                    .transpose();
            }
            p -= 1;
            index[p] += 1;
            if index[p] < options[p].len() {
                break;
            }
            index[p] = 0;
        }
    }
}

/// Result of comparing the staged search with [`brute_force_optimal`] on one
/// problem.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InstanceCheck {
    /// Same suggestion and distance. `valid` means the suggestion is predicted
    /// IMPROVE and respects the constraints (or is the unchanged diet).
    Agree {
        distance: u32,
        valid: bool,
    },
    /// Neither finds a counterfactual; `guidance_sound` means applying the
    /// returned guidance yields one.
    BothInfeasible {
        guidance_sound: bool,
    },
    Disagree {
        detail: String,
    },
}

impl InstanceCheck {
    pub fn passed(&self) -> bool {
        match self {
            InstanceCheck::Agree { valid, .. } => *valid,
            InstanceCheck::BothInfeasible { guidance_sound } => *guidance_sound,
            InstanceCheck::Disagree { .. } => false,
        }
    }
}

pub fn check_instance(
    explainer: &super::Explainer<'_>,
    instance: &super::instances::Instance,
) -> Result<InstanceCheck> {
    use super::Explanation;
    let (world, model) = (explainer.world(), explainer.model());
    let got = explainer.generate_counterfactual(&instance.original, &instance.constraints)?;
    let want = brute_force_optimal(world, model, &instance.original, &instance.constraints)?;
    Ok(match (got, want) {
        (Explanation::Counterfactual(cf), Some(reference)) => {
            if cf.distance != reference.distance || cf.suggested != reference.suggested {
                InstanceCheck::Disagree {
                    detail: format!(
                        "staged {} at {} vs exhaustive {} at {}",
                        cf.suggested, cf.distance, reference.suggested, reference.distance
                    ),
                }
            } else {
                let valid = model.predict(&cf.suggested)?.label == Label::Improve
                    && (cf.is_identity() || super::is_feasible(&cf, &instance.constraints, world));
                InstanceCheck::Agree {
                    distance: cf.distance,
                    valid,
                }
            }
        }
        (Explanation::Guidance(g), None) => {
            let applied = g.apply(&instance.constraints);
            let guidance_sound = matches!(
                explainer.generate_counterfactual(&instance.original, &applied)?,
                Explanation::Counterfactual(_)
            );
            InstanceCheck::BothInfeasible { guidance_sound }
        }
        (Explanation::Counterfactual(cf), None) => InstanceCheck::Disagree {
            detail: format!("staged found {} but exhaustive search found nothing", cf.suggested),
        },
        (Explanation::Guidance(_), Some(reference)) => InstanceCheck::Disagree {
            detail: format!(
                "exhaustive found {} but staged search returned guidance",
                reference.suggested
            ),
        },
    })
}
