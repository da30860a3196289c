//! Seeded random explanation problems for equivalence checks.

use serde::{Deserialize, Serialize};

use super::{FeedbackConstraints, PlantRange};
use crate::rng::SeedRng;
use crate::world::{Diet, WorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub original: Diet,
    pub constraints: FeedbackConstraints,
}

/// An affordable original diet plus random feedback: each plant mutable with
/// probability 1/2 (at least one), half of the mutable plants given a random
/// sub-range, a budget between half and one and a half round budgets and a
/// change cap of 1 to 3.
pub fn random_instance(world: &WorldConfig, rng: &mut SeedRng) -> Instance {
    let plants = world.num_plants();
    let original = world.sample_affordable_diet(rng);
    let mut mutable: Vec<usize> = (0..plants).filter(|_| rng.chance(0.5)).collect();
    if mutable.is_empty() {
        mutable.push(rng.below(plants as u64) as usize);
    }
    let ranges = mutable
        .iter()
        .filter_map(|&plant| {
            let full = world.plants[plant].range();
            if rng.chance(0.5) {
                return None;
            }
            let a = rng.between(full.min, full.max);
            let b = rng.between(full.min, full.max);
            Some(PlantRange {
                plant,
                min: a.min(b),
                max: a.max(b),
            })
        })
        .collect();
    let budget = rng.between(world.round_budget / 2, world.round_budget * 3 / 2);
    let max_changes = rng.between(1, 3.min(plants as u32)) as usize;
    Instance {
        original,
        constraints: FeedbackConstraints {
            mutable_plants: mutable,
            ranges,
            budget,
            max_changes,
        },
    }
}

pub fn random_instances(world: &WorldConfig, n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = SeedRng::new(seed);
    (0..n).map(|_| random_instance(world, &mut rng)).collect()
}
