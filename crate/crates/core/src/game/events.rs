use serde::{Deserialize, Serialize};

use super::{PendingSubmission, Phase, RoundRecord, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::explainer::{Counterfactual, Explanation, FeedbackConstraints, GuidanceSuggestion};
use crate::metrics::{ProbeResult, QuestionnaireResponse};
use crate::predictor::PredictionResult;
use crate::world::{Diet, Label};

/// A post-game probe diet with the model's verdict on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub diet: Diet,
    pub model_prediction: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    SessionCreated {
        config: SessionConfig,
        initial_diet: Diet,
        probes: Vec<ProbeItem>,
    },
    RoundSubmitted {
        round_number: u32,
        diet: Diet,
        diet_cost: u32,
        decision_ms: u64,
        feedback: Option<FeedbackConstraints>,
    },
    PredictionMade {
        round_number: u32,
        prediction: PredictionResult,
        fitness_before: u32,
        fitness_after: u32,
    },
    ExplanationIssued {
        round_number: u32,
        constraints: FeedbackConstraints,
        counterfactual: Counterfactual,
    },
    GuidanceIssued {
        round_number: u32,
        constraints: FeedbackConstraints,
        guidance: GuidanceSuggestion,
    },
    RoundAcknowledged {
        round_number: u32,
    },
    /// On-demand what-if request; does not count as a scheduled explanation.
    FeedbackReceived {
        round_number: u32,
        diet: Diet,
        constraints: FeedbackConstraints,
        result: Explanation,
    },
    QuestionnaireSubmitted {
        response: QuestionnaireResponse,
    },
    ProbeAnswered {
        index: usize,
        diet: Diet,
        learner_prediction: Label,
        model_prediction: Label,
        correct: bool,
    },
    SessionCompleted {},
}

impl EventKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventKind::SessionCreated { .. } => "SESSION_CREATED",
            EventKind::RoundSubmitted { .. } => "ROUND_SUBMITTED",
            EventKind::PredictionMade { .. } => "PREDICTION_MADE",
            EventKind::ExplanationIssued { .. } => "EXPLANATION_ISSUED",
            EventKind::GuidanceIssued { .. } => "GUIDANCE_ISSUED",
            EventKind::RoundAcknowledged { .. } => "ROUND_ACKNOWLEDGED",
            EventKind::FeedbackReceived { .. } => "FEEDBACK_RECEIVED",
            EventKind::QuestionnaireSubmitted { .. } => "QUESTIONNAIRE_SUBMITTED",
            EventKind::ProbeAnswered { .. } => "PROBE_ANSWERED",
            EventKind::SessionCompleted {} => "SESSION_COMPLETED",
        }
    }
}

/// One immutable log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEvent {
    /// 1-based, contiguous within a session.
    pub seq: u64,
    /// UTC milliseconds; metadata only.
    pub timestamp: i64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: EventKind,
}

/// Append-only, seq-checked event list for one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<GameEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[GameEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.events.last().map_or(1, |e| e.seq + 1)
    }

    pub fn append(&mut self, event: GameEvent) -> Result<()> {
        check_next(self.events.last(), &event)?;
        self.events.push(event);
        Ok(())
    }

    pub fn into_events(self) -> Vec<GameEvent> {
        self.events
    }
}

fn check_next(prev: Option<&GameEvent>, event: &GameEvent) -> Result<()> {
    let expected = prev.map_or(1, |p| p.seq + 1);
    if event.seq != expected {
        return Err(Error::Corruption(format!(
            "expected seq {expected}, found {}",
            event.seq
        )));
    }
    if let Some(p) = prev {
        if p.session_id != event.session_id {
            return Err(Error::Corruption(format!(
                "event {} belongs to session {}, log is {}",
                event.seq, event.session_id, p.session_id
            )));
        }
    }
    Ok(())
}

/// Folds a complete event list into the session state it describes.
pub fn replay(events: &[GameEvent]) -> Result<SessionState> {
    let first = events
        .first()
        .ok_or_else(|| Error::Corruption("empty event list has no SESSION_CREATED".into()))?;
    check_next(None, first)?;
    let mut state = SessionState::created(first)?;
    for pair in events.windows(2) {
        check_next(Some(&pair[0]), &pair[1])?;
        state.apply(&pair[1])?;
    }
    Ok(state)
}

fn corrupt<T>(event: &GameEvent, why: impl std::fmt::Display) -> Result<T> {
    Err(Error::Corruption(format!(
        "{} at seq {}: {why}",
        event.event.type_name(),
        event.seq
    )))
}

impl SessionState {
    pub(crate) fn created(event: &GameEvent) -> Result<Self> {
        let EventKind::SessionCreated {
            config,
            initial_diet,
            probes,
        } = &event.event
        else {
            return corrupt(event, "log must start with SESSION_CREATED");
        };
        if config.session_id != event.session_id {
            return corrupt(event, "session id mismatch");
        }
        Ok(SessionState {
            config: config.clone(),
            phase: Phase::AwaitingDiet,
            round_number: 1,
            fitness: config.fitness_start,
            current_diet: initial_diet.clone(),
            history: Vec::new(),
            pending_explanations: Vec::new(),
            pending_guidance: None,
            probes: probes.clone(),
            probe_results: Vec::new(),
            questionnaire: None,
            whatif_requests: 0,
            submission: None,
            created_at_ms: event.timestamp,
            last_seq: event.seq,
        })
    }

    /// Applies one event that follows the current state.
    pub fn apply(&mut self, event: &GameEvent) -> Result<()> {
        if event.seq != self.last_seq + 1 {
            return corrupt(event, format!("expected seq {}", self.last_seq + 1));
        }
        if event.session_id != self.config.session_id {
            return corrupt(event, "session id mismatch");
        }
        let phase = self.phase;
        match &event.event {
            EventKind::SessionCreated { .. } => return corrupt(event, "session already created"),
            EventKind::RoundSubmitted {
                round_number,
                diet,
                diet_cost,
                decision_ms,
                feedback,
            } => {
                if phase != Phase::AwaitingDiet || self.submission.is_some() {
                    return corrupt(event, format!("not accepted in phase {phase}"));
                }
                if *round_number != self.round_number {
                    return corrupt(
                        event,
                        format!("round {round_number} while in round {}", self.round_number),
                    );
                }
                if *diet_cost > self.config.world.round_budget {
                    return corrupt(event, "diet over budget");
                }
                self.submission = Some(PendingSubmission {
                    round_number: *round_number,
                    diet: diet.clone(),
                    diet_cost: *diet_cost,
                    decision_ms: *decision_ms,
                    feedback: feedback.clone(),
                });
            }
            EventKind::PredictionMade {
                round_number,
                prediction,
                fitness_before,
                fitness_after,
            } => {
                let Some(sub) = self.submission.take() else {
                    return corrupt(event, "no pending submission");
                };
                if sub.round_number != *round_number
                    || *fitness_before != self.fitness
                    || *fitness_after != self.config.next_fitness(self.fitness, prediction.label)
                {
                    return corrupt(event, "inconsistent round outcome");
                }
                self.fitness = *fitness_after;
                self.current_diet = sub.diet.clone();
                self.history.push(RoundRecord {
                    round_number: sub.round_number,
                    submitted_diet: sub.diet,
                    diet_cost: sub.diet_cost,
                    prediction: *prediction,
                    fitness_before: *fitness_before,
                    fitness_after: *fitness_after,
                    decision_ms: sub.decision_ms,
                    explanation_shown: None,
                    guidance_shown: None,
                    feedback_used: if self.config.is_explanation_round(sub.round_number) {
                        sub.feedback
                    } else {
                        None
                    },
                });
                self.phase = Phase::ShowingOutcome;
            }
            EventKind::ExplanationIssued {
                round_number,
                counterfactual,
                ..
            } => {
                let record = self.explained_record(event, *round_number)?;
                record.explanation_shown = Some(counterfactual.clone());
                self.pending_explanations = vec![counterfactual.clone()];
                self.phase = Phase::ShowingExplanation;
            }
            EventKind::GuidanceIssued {
                round_number, guidance, ..
            } => {
                let record = self.explained_record(event, *round_number)?;
                record.guidance_shown = Some(guidance.clone());
                self.pending_guidance = Some(guidance.clone());
                self.phase = Phase::ShowingExplanation;
            }
            EventKind::RoundAcknowledged { round_number } => {
                if !matches!(phase, Phase::ShowingOutcome | Phase::ShowingExplanation) {
                    return corrupt(event, format!("not accepted in phase {phase}"));
                }
                if *round_number != self.round_number {
                    return corrupt(event, "acknowledged round mismatch");
                }
                self.pending_explanations.clear();
                self.pending_guidance = None;
                self.round_number += 1;
                self.phase = if self.round_number > self.config.total_rounds {
                    Phase::Questionnaire
                } else {
                    Phase::AwaitingDiet
                };
            }
            EventKind::FeedbackReceived { .. } => {
                if !matches!(
                    phase,
                    Phase::AwaitingDiet | Phase::ShowingOutcome | Phase::ShowingExplanation
                ) {
                    return corrupt(event, format!("not accepted in phase {phase}"));
                }
                self.whatif_requests += 1;
            }
            EventKind::QuestionnaireSubmitted { response } => {
                if phase != Phase::Questionnaire {
                    return corrupt(event, format!("not accepted in phase {phase}"));
                }
                self.questionnaire = Some(response.clone());
                self.phase = Phase::Probes;
            }
            EventKind::ProbeAnswered {
                index,
                diet,
                learner_prediction,
                model_prediction,
                correct,
            } => {
                if phase != Phase::Probes {
                    return corrupt(event, format!("not accepted in phase {phase}"));
                }
                let expected = self.probes.get(self.probe_results.len());
                let consistent = *index == self.probe_results.len()
                    && expected.is_some_and(|p| &p.diet == diet && p.model_prediction == *model_prediction)
                    && *correct == (learner_prediction == model_prediction);
                if !consistent {
                    return corrupt(event, "probe answer does not match the probe set");
                }
                self.probe_results
                    .push(ProbeResult::new(diet.clone(), *learner_prediction, *model_prediction));
            }
            EventKind::SessionCompleted {} => {
                if phase != Phase::Probes || self.probe_results.len() != self.probes.len() {
                    return corrupt(event, "probes not finished");
                }
                self.phase = Phase::Completed;
            }
        }
        self.last_seq = event.seq;
        Ok(())
    }

    fn explained_record(&mut self, event: &GameEvent, round_number: u32) -> Result<&mut RoundRecord> {
        if self.phase != Phase::ShowingOutcome || !self.config.is_explanation_round(round_number) {
            return corrupt(event, "explanation outside an explanation round");
        }
        let Some(record) = self.history.last_mut().filter(|r| r.round_number == round_number) else {
            return corrupt(event, "no matching round");
        };
        if record.explanation_shown.is_some() || record.guidance_shown.is_some() {
            return corrupt(event, "round already explained");
        }
        Ok(record)
    }
}
