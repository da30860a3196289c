//! Synthetic learners that play full sessions headlessly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{jsonl, Engine, Session, SessionConfig};
use crate::metrics::{task_learning, Aggregate, QUESTIONNAIRE_ITEMS};
use crate::rng::{derive_seed, SeedRng};
use crate::world::{Diet, Label, WorldConfig};

const DIET_STREAM: u64 = 11;
const FOLLOW_STREAM: u64 = 12;
const TIMING_STREAM: u64 = 13;
const ANSWER_STREAM: u64 = 14;

const DECISION_MEDIAN_MS: f64 = 5000.0;
const DECISION_SIGMA: f64 = 0.5;
const REVIEW_MS: i64 = 1000;
/// Synthetic clock origin (2023-11-14T22:13:20Z); each session gets its own hour.
const SIM_EPOCH_MS: i64 = 1_700_000_000_000;
const SESSION_SPACING_MS: i64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerPolicy {
    /// Uniform affordable diets.
    Random,
    /// The diet with the most leaves the budget allows, every round.
    GreedyCost,
    /// Resubmits the latest counterfactual suggestion, random until one exists.
    CeFollower,
    /// Like `CeFollower`, but ignores each suggestion with probability `p`.
    NoisyCeFollower(f64),
}

impl LearnerPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerPolicy::NoisyCeFollower(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::Validation(format!("noise probability {p} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Identifier safe for session ids.
    pub fn slug(&self) -> String {
        match *self {
            LearnerPolicy::Random => "random".into(),
            LearnerPolicy::GreedyCost => "greedy".into(),
            LearnerPolicy::CeFollower => "ce-follower".into(),
            LearnerPolicy::NoisyCeFollower(p) => format!("noisy-{}", p.to_string().replace('.', "_")),
        }
    }

    fn follow_probability(&self) -> f64 {
        match *self {
            LearnerPolicy::CeFollower => 1.0,
            LearnerPolicy::NoisyCeFollower(p) => 1.0 - p,
            _ => 0.0,
        }
    }
}

impl fmt::Display for LearnerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerPolicy::Random => f.write_str("random"),
            LearnerPolicy::GreedyCost => f.write_str("greedy"),
            LearnerPolicy::CeFollower => f.write_str("ce-follower"),
            LearnerPolicy::NoisyCeFollower(p) => write!(f, "noisy:{p}"),
        }
    }
}

impl FromStr for LearnerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let policy = match s.trim().to_ascii_lowercase().as_str() {
            "random" => LearnerPolicy::Random,
            "greedy" | "greedy-cost" => LearnerPolicy::GreedyCost,
            "ce-follower" => LearnerPolicy::CeFollower,
            other => match other.strip_prefix("noisy:") {
                Some(p) => LearnerPolicy::NoisyCeFollower(
                    p.parse()
                        .map_err(|_| Error::Validation(format!("bad noise probability {p:?}")))?,
                ),
                None => return Err(Error::Validation(format!("unknown policy {s:?}"))),
            },
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Most leaves within the budget: fill the cheapest plants first, starting
/// from each plant's minimum.
pub fn greedy_diet(world: &WorldConfig) -> Result<Diet> {
    let mut leaves: Vec<u32> = world.plants.iter().map(|p| p.leaf_min).collect();
    let base = world.diet_cost(&Diet::new(leaves.clone()))?;
    let mut left = world
        .round_budget
        .checked_sub(base)
        .ok_or(Error::Constraint("minimum diet exceeds the round budget".into()))?;
    let mut order: Vec<usize> = (0..world.num_plants()).collect();
    order.sort_by_key(|&i| (world.leaf_cost(i), i));
    for i in order {
        let p = &world.plants[i];
        let room = p.leaf_max - p.leaf_min;
        let extra = left.checked_div(p.leaf_cost).map_or(room, |n| n.min(room));
        leaves[i] += extra;
        left -= extra * p.leaf_cost;
    }
    Ok(Diet::new(leaves))
}

/// Predicts a probe by the outcome of the closest diet seen during play
/// (cost-weighted L1, latest round wins ties).
fn recall(world: &WorldConfig, memory: &[(Diet, Label)], probe: &Diet) -> Label {
    let dist = |d: &Diet| -> u32 {
        d.leaves()
            .iter()
            .zip(probe.leaves())
            .enumerate()
            .map(|(i, (&a, &b))| a.abs_diff(b) * world.leaf_cost(i))
            .sum()
    };
    memory
        .iter()
        .rev()
        .min_by_key(|(d, _)| dist(d))
        .map_or(Label::Worsen, |(_, l)| *l)
}

/// Plays one complete session, questionnaire and probes included.
pub fn play_session(engine: &Engine, policy: LearnerPolicy, config: SessionConfig, start_ms: i64) -> Result<Session> {
    policy.validate()?;
    let seed = config.seed;
    let world = engine.world().clone();
    let greedy = greedy_diet(&world)?;
    let mut diet_rng = SeedRng::stream(seed, DIET_STREAM);
    let mut follow_rng = SeedRng::stream(seed, FOLLOW_STREAM);
    let mut timing_rng = SeedRng::stream(seed, TIMING_STREAM);
    let mut answer_rng = SeedRng::stream(seed, ANSWER_STREAM);
    let follow_p = policy.follow_probability();

    let mut clock = start_ms;
    let mut session = engine.create_session(config, clock)?;
    while session.state().phase == crate::game::Phase::AwaitingDiet {
        let random = world.sample_affordable_diet(&mut diet_rng);
        let follow = follow_rng.unit() < follow_p;
        let diet = match (policy, session.state().latest_suggestion()) {
            (LearnerPolicy::GreedyCost, _) => greedy.clone(),
            (_, Some(cf)) if follow => cf.suggested.clone(),
            _ => random,
        };
        let decision_ms = timing_rng.log_normal(DECISION_MEDIAN_MS, DECISION_SIGMA).round() as u64;
        clock += decision_ms as i64;
        session.submit_round(engine, diet, decision_ms, None, clock)?;
        clock += REVIEW_MS;
        session.acknowledge(clock)?;
    }

    let items = (0..QUESTIONNAIRE_ITEMS)
        .map(|_| answer_rng.between(1, 5) as u8)
        .collect();
    clock += REVIEW_MS;
    session.submit_questionnaire(items, None, clock)?;

    let memory: Vec<(Diet, Label)> = session
        .state()
        .history
        .iter()
        .map(|r| (r.submitted_diet.clone(), r.prediction.label))
        .collect();
    let answers: Vec<Label> = session
        .pending_probes()
        .iter()
        .map(|p| recall(&world, &memory, p))
        .collect();
    clock += REVIEW_MS;
    session.answer_probes(&answers, clock)?;
    Ok(session)
}

/// Session id and seed for the `index`-th simulated session. Seeds depend only
/// on `(seed, index)`, so different policies are paired session by session.
pub fn session_identity(policy: LearnerPolicy, seed: u64, index: usize) -> (String, u64) {
    (
        format!("sim-{}-{seed}-{index:04}", policy.slug()),
        derive_seed(seed, index as u64),
    )
}

/// Plays `n` sessions in parallel; the result is ordered by session index and
/// independent of scheduling. `template` supplies everything but id and seed.
pub fn run_policy(
    engine: &Engine,
    policy: LearnerPolicy,
    template: &SessionConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<Session>> {
    if n == 0 {
        return Err(Error::Validation("need at least one session".into()));
    }
    policy.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (id, session_seed) = session_identity(policy, seed, i);
            let mut config = template.clone();
            config.session_id = id;
            config.seed = session_seed;
            play_session(engine, policy, config, SIM_EPOCH_MS + i as i64 * SESSION_SPACING_MS)
        })
        .collect()
}

/// Writes each session as `{session_id}.jsonl` in `dir`.
pub fn write_logs(dir: &Path, sessions: &[Session]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in sessions {
        jsonl::write_all(&jsonl::log_path(dir, s.id()), s.events())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub sessions: usize,
    pub fitness_slope: Aggregate,
    pub final_fitness: Aggregate,
    pub fitness_slopes: Vec<f64>,
    pub final_fitnesses: Vec<f64>,
}

impl PolicySummary {
    pub fn of(policy: LearnerPolicy, sessions: &[Session]) -> Result<Self> {
        let learning = sessions
            .iter()
            .map(|s| task_learning(s.state()))
            .collect::<Result<Vec<_>>>()?;
        let fitness_slopes: Vec<f64> = learning.iter().map(|t| t.fitness_slope).collect();
        let final_fitnesses: Vec<f64> = learning.iter().map(|t| f64::from(t.final_fitness)).collect();
        Ok(Self {
            policy: policy.to_string(),
            sessions: sessions.len(),
            fitness_slope: Aggregate::of(&fitness_slopes).ok_or(Error::Empty("sessions"))?,
            final_fitness: Aggregate::of(&final_fitnesses).ok_or(Error::Empty("sessions"))?,
            fitness_slopes,
            final_fitnesses,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub sessions: usize,
    pub a: PolicySummary,
    pub b: PolicySummary,
    /// Mean slope of `a` minus mean slope of `b`.
    pub slope_gap: f64,
    pub final_fitness_gap: f64,
}

/// Runs both policies on the same `n` session seeds.
pub fn compare_policies(
    engine: &Engine,
    a: LearnerPolicy,
    b: LearnerPolicy,
    template: &SessionConfig,
    n: usize,
    seed: u64,
) -> Result<Comparison> {
    if n < 10 {
        return Err(Error::Validation(format!(
            "comparison needs at least 10 sessions, got {n}"
        )));
    }
    let sa = PolicySummary::of(a, &run_policy(engine, a, template, n, seed)?)?;
    let sb = PolicySummary::of(b, &run_policy(engine, b, template, n, seed)?)?;
    Ok(Comparison {
        seed,
        sessions: n,
        slope_gap: sa.fitness_slope.mean - sb.fitness_slope.mean,
        final_fitness_gap: sa.final_fitness.mean - sb.final_fitness.mean,
        a: sa,
        b: sb,
    })
}
