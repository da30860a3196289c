use super::events::{EventKind, EventLog, GameEvent, ProbeItem};
use super::{replay, Phase, RoundRecord, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::explainer::{Explainer, Explanation, FeedbackConstraints};
use crate::metrics::{satisfaction_score, understanding_score, QuestionnaireResponse};
use crate::predictor::{class_distribution_stats, DistributionStats, TrainedModel};
use crate::rng::{derive_seed, SeedRng};
use crate::world::{generate_dataset, sample_initial_diet, Diet, Label, WorldConfig};

/// Number of post-game understanding probes (half IMPROVE, half WORSEN).
pub const PROBE_COUNT: usize = 6;

const INITIAL_DIET_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;
const PROBE_MAX_DRAWS: usize = 100_000;

/// Dataset used for hint statistics when the model records no training data.
const DEFAULT_STATS_SAMPLES: usize = 10_000;
const DEFAULT_STATS_SEED: u64 = 42;

/// Shared, immutable game context: world, model and hint statistics.
#[derive(Debug, Clone)]
pub struct Engine {
    world: WorldConfig,
    model: TrainedModel,
    model_hash: String,
    stats: DistributionStats,
}

impl Engine {
    pub fn new(world: WorldConfig, model: TrainedModel, stats: DistributionStats) -> Result<Self> {
        world.validate()?;
        if model.bounds() != world.ranges() {
            return Err(Error::Validation("model input domain does not match the world".into()));
        }
        let model_hash = model.content_hash();
        Ok(Self {
            world,
            model,
            model_hash,
            stats,
        })
    }

    /// Builds hint statistics by regenerating the model's training data (or the
    /// default 10,000-sample, seed-42 set for models without training metadata).
    pub fn with_regenerated_stats(world: WorldConfig, model: TrainedModel) -> Result<Self> {
        let samples = match model.train_meta() {
            Some(meta) => {
                let total = meta.dataset_size.unwrap_or(meta.sample_count).max(meta.sample_count);
                let mut all = generate_dataset(&world, total, meta.seed)?;
                all.truncate(meta.sample_count);
                all
            }
            None => generate_dataset(&world, DEFAULT_STATS_SAMPLES, DEFAULT_STATS_SEED)?,
        };
        let stats = class_distribution_stats(&samples)?;
        Self::new(world, model, stats)
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn stats(&self) -> &DistributionStats {
        &self.stats
    }

    pub fn explainer(&self) -> Explainer<'_> {
        Explainer::new(&self.world, &self.model, &self.stats)
    }

    /// Default session settings for this engine's world and model.
    pub fn session_config(&self, session_id: impl Into<String>, seed: u64) -> SessionConfig {
        SessionConfig::new(session_id, self.world.clone(), self.model_hash.clone(), seed)
    }

    /// Starts a session on a random affordable diet the model judges WORSEN.
    pub fn create_session(&self, config: SessionConfig, now_ms: i64) -> Result<Session> {
        config.validate()?;
        if config.world != self.world {
            return Err(Error::Validation("session world differs from the served world".into()));
        }
        if config.model_ref != self.model_hash {
            return Err(Error::Validation(format!(
                "session expects model {}, serving {}",
                config.model_ref, self.model_hash
            )));
        }
        let initial_diet =
            sample_initial_diet(&self.world, &self.model, derive_seed(config.seed, INITIAL_DIET_STREAM))?;
        let probes = self.probe_set(config.seed)?;
        let event = GameEvent {
            seq: 1,
            timestamp: now_ms,
            session_id: config.session_id.clone(),
            event: EventKind::SessionCreated {
                config,
                initial_diet,
                probes,
            },
        };
        let state = SessionState::created(&event)?;
        let mut log = EventLog::new();
        log.append(event)?;
        Ok(Session { state, log })
    }

    /// Seeded, shuffled probe diets: three the model calls IMPROVE and three
    /// it calls WORSEN, all distinct and within the round budget.
    pub fn probe_set(&self, seed: u64) -> Result<Vec<ProbeItem>> {
        let mut rng = SeedRng::stream(seed, PROBE_STREAM);
        let per_class = PROBE_COUNT / 2;
        let (mut improve, mut worsen): (Vec<Diet>, Vec<Diet>) = (Vec::new(), Vec::new());
        for _ in 0..PROBE_MAX_DRAWS {
            if improve.len() == per_class && worsen.len() == per_class {
                break;
            }
            let diet = self.world.sample_affordable_diet(&mut rng);
            if improve.contains(&diet) || worsen.contains(&diet) {
                continue;
            }
            let bucket = match self.model.predict(&diet)?.label {
                Label::Improve => &mut improve,
                Label::Worsen => &mut worsen,
            };
            if bucket.len() < per_class {
                bucket.push(diet);
            }
        }
        if improve.len() < per_class || worsen.len() < per_class {
            return Err(Error::WorldDegenerate(PROBE_MAX_DRAWS));
        }
        let mut probes: Vec<ProbeItem> = improve
            .into_iter()
            .map(|diet| ProbeItem {
                diet,
                model_prediction: Label::Improve,
            })
            .chain(worsen.into_iter().map(|diet| ProbeItem {
                diet,
                model_prediction: Label::Worsen,
            }))
            .collect();
        rng.shuffle(&mut probes);
        Ok(probes)
    }
}

/// A live session: current state plus the events that produced it.
#[derive(Debug, Clone)]
pub struct Session {
    state: SessionState,
    log: EventLog,
}

impl Session {
    /// Rebuilds a session from its full event log.
    pub fn from_events(events: Vec<GameEvent>) -> Result<Self> {
        let state = replay(&events)?;
        let mut log = EventLog::new();
        for e in events {
            log.append(e)?;
        }
        Ok(Self { state, log })
    }

    /// Resumes from a snapshot followed by the events after it.
    pub fn from_snapshot(snapshot: SessionState, all_events: Vec<GameEvent>) -> Result<Self> {
        let mut state = snapshot;
        let mut log = EventLog::new();
        for e in all_events {
            if e.seq > state.last_seq {
                state.apply(&e)?;
            }
            log.append(e)?;
        }
        if log.next_seq() != state.last_seq + 1 {
            return Err(Error::Corruption("snapshot is ahead of the event log".into()));
        }
        Ok(Self { state, log })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn events(&self) -> &[GameEvent] {
        self.log.events()
    }

    pub fn id(&self) -> &str {
        self.state.session_id()
    }

    pub fn into_events(self) -> Vec<GameEvent> {
        self.log.into_events()
    }

    /// Appends events atomically: either all apply or the session is unchanged.
    fn commit(&mut self, kinds: Vec<EventKind>, now_ms: i64) -> Result<usize> {
        let mut state = self.state.clone();
        let mut fresh = Vec::with_capacity(kinds.len());
        for (seq, event) in (self.log.next_seq()..).zip(kinds) {
            let e = GameEvent {
                seq,
                timestamp: now_ms,
                session_id: self.state.config.session_id.clone(),
                event,
            };
            state.apply(&e)?;
            fresh.push(e);
        }
        let n = fresh.len();
        for e in fresh {
            self.log.append(e)?;
        }
        self.state = state;
        Ok(n)
    }

    fn require(&self, command: &'static str, allowed: &[Phase]) -> Result<()> {
        if allowed.contains(&self.state.phase) {
            Ok(())
        } else {
            Err(Error::WrongPhase {
                command,
                phase: self.state.phase.to_string(),
            })
        }
    }

    /// Feeds a diet to Shub. On every `explanation_interval`-th round an
    /// explanation (or guidance) for the submitted diet is attached, built from
    /// `feedback` or the default constraints.
    pub fn submit_round(
        &mut self,
        engine: &Engine,
        diet: Diet,
        decision_ms: u64,
        feedback: Option<FeedbackConstraints>,
        now_ms: i64,
    ) -> Result<RoundRecord> {
        self.require("submit_round", &[Phase::AwaitingDiet])?;
        let world = &self.state.config.world;
        let diet_cost = world.diet_cost(&diet)?;
        if diet_cost > world.round_budget {
            return Err(Error::BudgetExceeded {
                cost: diet_cost,
                budget: world.round_budget,
            });
        }
        if let Some(f) = &feedback {
            f.validate(world)?;
        }
        let round_number = self.state.round_number;
        let prediction = engine.model.predict(&diet)?;
        let fitness_before = self.state.fitness;
        let fitness_after = self.state.config.next_fitness(fitness_before, prediction.label);

        let mut kinds = vec![
            EventKind::RoundSubmitted {
                round_number,
                diet: diet.clone(),
                diet_cost,
                decision_ms,
                feedback: feedback.clone(),
            },
            EventKind::PredictionMade {
                round_number,
                prediction,
                fitness_before,
                fitness_after,
            },
        ];
        if self.state.config.is_explanation_round(round_number) {
            let constraints = feedback.unwrap_or_else(|| FeedbackConstraints::defaults(world));
            kinds.push(match engine.explainer().generate_counterfactual(&diet, &constraints)? {
                Explanation::Counterfactual(counterfactual) => EventKind::ExplanationIssued {
                    round_number,
                    constraints,
                    counterfactual,
                },
                Explanation::Guidance(guidance) => EventKind::GuidanceIssued {
                    round_number,
                    constraints,
                    guidance,
                },
            });
        }
        self.commit(kinds, now_ms)?;
        Ok(self.state.history.last().cloned().expect("round recorded"))
    }

    /// Leaves the outcome or explanation screen.
    pub fn acknowledge(&mut self, now_ms: i64) -> Result<()> {
        self.require("acknowledge", &[Phase::ShowingOutcome, Phase::ShowingExplanation])?;
        let round_number = self.state.round_number;
        self.commit(vec![EventKind::RoundAcknowledged { round_number }], now_ms)?;
        Ok(())
    }

    /// On-demand what-if explanation for `diet` (default: the last submitted
    /// diet, or the current test input before the first round).
    pub fn request_explanation(
        &mut self,
        engine: &Engine,
        diet: Option<Diet>,
        constraints: FeedbackConstraints,
        now_ms: i64,
    ) -> Result<Explanation> {
        self.require(
            "feedback",
            &[Phase::AwaitingDiet, Phase::ShowingOutcome, Phase::ShowingExplanation],
        )?;
        let diet = diet.unwrap_or_else(|| {
            self.state
                .history
                .last()
                .map_or_else(|| self.state.current_diet.clone(), |r| r.submitted_diet.clone())
        });
        let result = engine.explainer().generate_counterfactual(&diet, &constraints)?;
        let round_number = self.state.round_number;
        self.commit(
            vec![EventKind::FeedbackReceived {
                round_number,
                diet,
                constraints,
                result: result.clone(),
            }],
            now_ms,
        )?;
        Ok(result)
    }

    pub fn submit_questionnaire(&mut self, items: Vec<u8>, free_text: Option<String>, now_ms: i64) -> Result<f64> {
        self.require("questionnaire", &[Phase::Questionnaire])?;
        let response = QuestionnaireResponse {
            session_id: self.id().to_owned(),
            items,
            free_text,
        };
        let score = satisfaction_score(&response)?;
        self.commit(vec![EventKind::QuestionnaireSubmitted { response }], now_ms)?;
        Ok(score)
    }

    /// Probe diets still to be answered, in order.
    pub fn pending_probes(&self) -> Vec<Diet> {
        self.state
            .probes
            .iter()
            .skip(self.state.probe_results.len())
            .map(|p| p.diet.clone())
            .collect()
    }

    /// Answers the remaining probes in order and completes the session once
    /// all are answered; returns the understanding score so far.
    pub fn answer_probes(&mut self, answers: &[Label], now_ms: i64) -> Result<f64> {
        self.require("probes", &[Phase::Probes])?;
        let answered = self.state.probe_results.len();
        let remaining = self.state.probes.len() - answered;
        if answers.is_empty() || answers.len() > remaining {
            return Err(Error::Validation(format!(
                "expected between 1 and {remaining} probe answers, got {}",
                answers.len()
            )));
        }
        let mut kinds: Vec<EventKind> = answers
            .iter()
            .enumerate()
            .map(|(i, &learner_prediction)| {
                let probe = &self.state.probes[answered + i];
                EventKind::ProbeAnswered {
                    index: answered + i,
                    diet: probe.diet.clone(),
                    learner_prediction,
                    model_prediction: probe.model_prediction,
                    correct: learner_prediction == probe.model_prediction,
                }
            })
            .collect();
        if answers.len() == remaining {
            kinds.push(EventKind::SessionCompleted {});
        }
        self.commit(kinds, now_ms)?;
        understanding_score(&self.state.probe_results)
    }
}
