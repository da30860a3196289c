//! The plant world: diets, time costs, the ground-truth fitness rule and the
//! synthetic training data drawn from it.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::TrainedModel;
use crate::rng::SeedRng;

/// Maximum number of draws `sample_initial_diet` makes before giving up.
pub const INITIAL_DIET_MAX_DRAWS: usize = 10_000;

/// Outcome of feeding a diet to Shub.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Improve,
    Worsen,
}

impl Label {
    pub fn is_improve(self) -> bool {
        self == Label::Improve
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Improve => Label::Worsen,
            Label::Worsen => Label::Improve,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Improve => "IMPROVE",
            Label::Worsen => "WORSEN",
        })
    }
}

/// Leaf counts per plant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Diet(pub Vec<u32>);

impl Diet {
    pub fn new(leaves: impl Into<Vec<u32>>) -> Self {
        Diet(leaves.into())
    }

    pub fn leaves(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, plant: usize) -> u32 {
        self.0[plant]
    }
}

impl fmt::Display for Diet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Inclusive integer interval of leaf counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafRange {
    pub min: u32,
    pub max: u32,
}

impl LeafRange {
    pub fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn width(&self) -> u64 {
        u64::from(self.max - self.min) + 1
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        self.min..=self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub plant_id: usize,
    pub display_name: String,
    /// Time units needed to find one leaf.
    pub leaf_cost: u32,
    #[serde(default)]
    pub leaf_min: u32,
    #[serde(default = "default_leaf_max")]
    pub leaf_max: u32,
}

fn default_leaf_max() -> u32 {
    6
}

impl PlantConfig {
    pub fn range(&self) -> LeafRange {
        LeafRange::new(self.leaf_min, self.leaf_max)
    }
}

/// Pairwise interaction term `coefficient * x[a] * x[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub plants: [usize; 2],
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub plants: Vec<PlantConfig>,
    pub gain_weights: Vec<f64>,
    pub interaction: Interaction,
    pub improve_threshold: f64,
    pub label_noise: f64,
    pub round_budget: u32,
}

impl Default for WorldConfig {
    /// Five plants costing 1..5 time units, a 20-unit round budget and the rule
    /// `g = 3*x2 + 2*x4 + 0.5*x2*x4 - 2*x1 - x5`, IMPROVE iff `g >= 8`.
    fn default() -> Self {
        let plants = (0..5)
            .map(|i| PlantConfig {
                plant_id: i,
                display_name: format!("P{}", i + 1),
                leaf_cost: i as u32 + 1,
                leaf_min: 0,
                leaf_max: 6,
            })
            .collect();
        WorldConfig {
            plants,
            gain_weights: vec![-2.0, 3.0, 0.0, 2.0, -1.0],
            interaction: Interaction {
                plants: [1, 3],
                coefficient: 0.5,
            },
            improve_threshold: 8.0,
            label_noise: 0.05,
            round_budget: 20,
        }
    }
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let world: WorldConfig = serde_json::from_str(text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("world config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::Validation(msg));
        if self.plants.is_empty() {
            return invalid("world has no plants".into());
        }
        for (i, p) in self.plants.iter().enumerate() {
            if p.plant_id != i {
                return invalid(format!(
                    "plant ids must be contiguous from 0, found {} at {i}",
                    p.plant_id
                ));
            }
            if p.leaf_cost < 1 {
                return invalid(format!("plant {i} has zero leaf cost"));
            }
            if p.leaf_min > p.leaf_max {
                return invalid(format!("plant {i} has leaf_min > leaf_max"));
            }
        }
        if self.gain_weights.len() != self.plants.len() || self.gain_weights.iter().any(|w| !w.is_finite()) {
            return invalid("gain_weights must hold one finite weight per plant".into());
        }
        let [a, b] = self.interaction.plants;
        if a >= self.plants.len() || b >= self.plants.len() || !self.interaction.coefficient.is_finite() {
            return invalid("interaction must reference two valid plants with a finite coefficient".into());
        }
        if !self.improve_threshold.is_finite() {
            return invalid("improve_threshold must be finite".into());
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return invalid(format!("label_noise {} outside [0, 0.5)", self.label_noise));
        }
        let cheapest = self.plants.iter().map(|p| p.leaf_cost).min().unwrap_or(0);
        if self.round_budget < cheapest {
            return invalid(format!(
                "round_budget {} cannot afford a single leaf",
                self.round_budget
            ));
        }
        Ok(())
    }

    pub fn num_plants(&self) -> usize {
        self.plants.len()
    }

    pub fn ranges(&self) -> Vec<LeafRange> {
        self.plants.iter().map(PlantConfig::range).collect()
    }

    pub fn leaf_cost(&self, plant: usize) -> u32 {
        self.plants[plant].leaf_cost
    }

    pub fn plant_name(&self, plant: usize) -> &str {
        &self.plants[plant].display_name
    }

    pub fn check_diet(&self, diet: &Diet) -> Result<()> {
        check_in_ranges(&self.ranges(), diet)
    }

    pub fn ground_truth_gain(&self, diet: &Diet) -> Result<f64> {
        self.check_diet(diet)?;
        let linear: f64 = diet
            .leaves()
            .iter()
            .zip(&self.gain_weights)
            .map(|(&x, w)| w * f64::from(x))
            .sum();
        let [a, b] = self.interaction.plants;
        Ok(linear + self.interaction.coefficient * f64::from(diet.get(a)) * f64::from(diet.get(b)))
    }

    pub fn ground_truth_label(&self, diet: &Diet) -> Result<Label> {
        let gain = self.ground_truth_gain(diet)?;
        Ok(if gain >= self.improve_threshold {
            Label::Improve
        } else {
            Label::Worsen
        })
    }

    pub fn diet_cost(&self, diet: &Diet) -> Result<u32> {
        self.check_diet(diet)?;
        Ok(self.cost_unchecked(diet))
    }

    pub(crate) fn cost_unchecked(&self, diet: &Diet) -> u32 {
        diet.leaves()
            .iter()
            .zip(&self.plants)
            .map(|(&x, p)| x * p.leaf_cost)
            .sum()
    }

    /// Number of points in the full diet grid.
    pub fn grid_size(&self) -> u64 {
        self.ranges().iter().map(LeafRange::width).product()
    }

    /// Every in-range diet, in lexicographic order.
    pub fn grid(&self) -> GridIter {
        GridIter::new(self.ranges())
    }

    /// Uniform in-range diet.
    pub fn sample_diet(&self, rng: &mut SeedRng) -> Diet {
        Diet(
            self.plants
                .iter()
                .map(|p| rng.between(p.leaf_min, p.leaf_max))
                .collect(),
        )
    }

    /// Uniform diet among those affordable within the round budget.
    pub fn sample_affordable_diet(&self, rng: &mut SeedRng) -> Diet {
        loop {
            let diet = self.sample_diet(rng);
            if self.cost_unchecked(&diet) <= self.round_budget {
                return diet;
            }
        }
    }
}

pub(crate) fn check_in_ranges(ranges: &[LeafRange], diet: &Diet) -> Result<()> {
    if diet.len() != ranges.len() {
        return Err(Error::RangeViolation(format!(
            "diet {diet} has {} plants, expected {}",
            diet.len(),
            ranges.len()
        )));
    }
    for (i, (r, &x)) in ranges.iter().zip(diet.leaves()).enumerate() {
        if !r.contains(x) {
            return Err(Error::RangeViolation(format!(
                "plant {i} has {x} leaves, allowed {}..={}",
                r.min, r.max
            )));
        }
    }
    Ok(())
}

/// Odometer over a box of integer ranges.
#[derive(Debug, Clone)]
pub struct GridIter {
    ranges: Vec<LeafRange>,
    next: Option<Vec<u32>>,
}

impl GridIter {
    pub fn new(ranges: Vec<LeafRange>) -> Self {
        let start = ranges.iter().map(|r| r.min).collect();
        Self {
            ranges,
            next: Some(start),
        }
    }
}

impl Iterator for GridIter {
    type Item = Diet;

    fn next(&mut self) -> Option<Diet> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < self.ranges[i].max {
                succ[i] += 1;
                self.next = Some(succ);
                break;
            }
            succ[i] = self.ranges[i].min;
        }
        Some(Diet(current))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub diet: Diet,
    pub label: Label,
    /// Label before noise, kept for evaluation.
    pub clean_label: Label,
}

impl LabeledSample {
    pub fn is_flipped(&self) -> bool {
        self.label != self.clean_label
    }
}

/// Draws `n` uniform diets and labels them with the ground-truth rule, flipping
/// each label independently with probability `label_noise`.
///
/// Per sample the generator consumes one draw per plant, then one noise draw.
pub fn generate_dataset(world: &WorldConfig, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    world.validate()?;
    if n == 0 {
        return Err(Error::Empty("dataset size"));
    }
    let mut rng = SeedRng::new(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let diet = world.sample_diet(&mut rng);
        let clean_label = world.ground_truth_label(&diet)?;
        let label = if rng.chance(world.label_noise) {
            clean_label.flipped()
        } else {
            clean_label
        };
        samples.push(LabeledSample {
            diet,
            label,
            clean_label,
        });
    }
    Ok(samples)
}

/// Writes samples as CSV with header `p1,...,pN,label,clean_label`.
pub fn write_dataset_csv<W: Write>(samples: &[LabeledSample], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let plants = samples.first().map_or(0, |s| s.diet.len());
    let mut header: Vec<String> = (1..=plants).map(|i| format!("p{i}")).collect();
    header.push("label".into());
    header.push("clean_label".into());
    writer.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.diet.leaves().iter().map(u32::to_string).collect();
        row.push(s.label.to_string());
        row.push(s.clean_label.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Draws a starting diet the model judges WORSEN and that fits the round budget.
pub fn sample_initial_diet(world: &WorldConfig, model: &TrainedModel, seed: u64) -> Result<Diet> {
    let mut rng = SeedRng::new(seed);
    for _ in 0..INITIAL_DIET_MAX_DRAWS {
        let diet = world.sample_diet(&mut rng);
        if world.cost_unchecked(&diet) > world.round_budget {
            continue;
        }
        if model.predict(&diet)?.label == Label::Worsen {
            return Ok(diet);
        }
    }
    Err(Error::WorldDegenerate(INITIAL_DIET_MAX_DRAWS))
}
