use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::LabeledSample;

/// Nearest-rank quartiles of a plant's leaf counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: u32,
    pub median: u32,
    pub q75: u32,
}

impl Quartiles {
    /// `values` must be non-empty.
    pub fn nearest_rank(values: &mut [u32]) -> Self {
        values.sort_unstable();
        let n = values.len();
        let at = |p: f64| {
            let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
            values[rank - 1]
        };
        Self {
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
        }
    }
}

/// Leaf-count quartiles of IMPROVE-labeled rows, plus the same over all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub improve: Vec<Quartiles>,
    pub overall: Vec<Quartiles>,
    pub improve_count: usize,
    pub sample_count: usize,
}

impl DistributionStats {
    pub fn for_plant(&self, plant: usize) -> Option<Quartiles> {
        self.improve.get(plant).copied()
    }
}

pub fn class_distribution_stats(samples: &[LabeledSample]) -> Result<DistributionStats> {
    let improving: Vec<&LabeledSample> = samples.iter().filter(|s| s.label.is_improve()).collect();
    if improving.is_empty() {
        return Err(Error::Empty("IMPROVE-labeled samples"));
    }
    let plants = improving[0].diet.len();
    let column = |rows: &[&LabeledSample], p: usize| {
        let mut values: Vec<u32> = rows.iter().map(|s| s.diet.get(p)).collect();
        Quartiles::nearest_rank(&mut values)
    };
    let all: Vec<&LabeledSample> = samples.iter().collect();
    Ok(DistributionStats {
        improve: (0..plants).map(|p| column(&improving, p)).collect(),
        overall: (0..plants).map(|p| column(&all, p)).collect(),
        improve_count: improving.len(),
        sample_count: samples.len(),
    })
}
