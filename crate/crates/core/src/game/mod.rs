//! Round-based session engine.
//!
//! Every state change is expressed as a [`GameEvent`]; commands validate, emit
//! events and fold them into the [`SessionState`], and [`replay`] folds a
//! stored log back into the identical state.

mod engine;
mod events;
pub mod jsonl;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::{Counterfactual, FeedbackConstraints, GuidanceSuggestion};
use crate::metrics::{ProbeResult, QuestionnaireResponse};
use crate::predictor::PredictionResult;
use crate::world::{Diet, Label, WorldConfig};

pub use engine::{Engine, Session, PROBE_COUNT};
pub use events::{replay, EventKind, EventLog, GameEvent, ProbeItem};

/// Milliseconds since the Unix epoch, UTC.
pub fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub world: WorldConfig,
    /// Content hash of the model serving this session.
    pub model_ref: String,
    pub total_rounds: u32,
    /// Explanations follow every round whose number is a multiple of this.
    pub explanation_interval: u32,
    pub fitness_start: u32,
    pub fitness_gain: u32,
    pub fitness_loss: u32,
    pub optimal_threshold: u32,
    pub unsatisfactory_threshold: u32,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, world: WorldConfig, model_ref: impl Into<String>, seed: u64) -> Self {
        Self {
            session_id: session_id.into(),
            world,
            model_ref: model_ref.into(),
            total_rounds: 12,
            explanation_interval: 2,
            fitness_start: 50,
            fitness_gain: 10,
            fitness_loss: 5,
            optimal_threshold: 80,
            unsatisfactory_threshold: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        validate_session_id(&self.session_id)?;
        self.world.validate()?;
        if self.total_rounds < 1 {
            return bad("total_rounds must be at least 1".into());
        }
        if self.explanation_interval < 1 || self.explanation_interval > self.total_rounds {
            return bad("explanation_interval must be within 1..=total_rounds".into());
        }
        if self.fitness_start > 100 {
            return bad("fitness_start must be within 0..=100".into());
        }
        if self.unsatisfactory_threshold >= self.optimal_threshold || self.optimal_threshold > 100 {
            return bad("thresholds must satisfy 0 <= unsatisfactory < optimal <= 100".into());
        }
        Ok(())
    }

    pub fn is_explanation_round(&self, round: u32) -> bool {
        round.is_multiple_of(self.explanation_interval)
    }

    /// Fitness after a round with the given outcome, clamped to `0..=100`.
    pub fn next_fitness(&self, before: u32, label: Label) -> u32 {
        match label {
            Label::Improve => (before + self.fitness_gain).min(100),
            Label::Worsen => before.saturating_sub(self.fitness_loss),
        }
    }
}

/// Session ids name files on disk: 1-128 characters of `[A-Za-z0-9_-]`.
pub fn validate_session_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("invalid session id {id:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    AwaitingDiet,
    ShowingOutcome,
    ShowingExplanation,
    Questionnaire,
    Probes,
    Completed,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_number: u32,
    pub submitted_diet: Diet,
    pub diet_cost: u32,
    pub prediction: PredictionResult,
    pub fitness_before: u32,
    pub fitness_after: u32,
    /// Deliberation time reported by the client.
    pub decision_ms: u64,
    pub explanation_shown: Option<Counterfactual>,
    pub guidance_shown: Option<GuidanceSuggestion>,
    pub feedback_used: Option<FeedbackConstraints>,
}

/// A submitted diet waiting for its prediction event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSubmission {
    pub round_number: u32,
    pub diet: Diet,
    pub diet_cost: u32,
    pub decision_ms: u64,
    pub feedback: Option<FeedbackConstraints>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub phase: Phase,
    pub round_number: u32,
    pub fitness: u32,
    /// The learner-editable test input.
    pub current_diet: Diet,
    pub history: Vec<RoundRecord>,
    pub pending_explanations: Vec<Counterfactual>,
    pub pending_guidance: Option<GuidanceSuggestion>,
    pub probes: Vec<ProbeItem>,
    pub probe_results: Vec<ProbeResult>,
    pub questionnaire: Option<QuestionnaireResponse>,
    pub whatif_requests: u32,
    pub submission: Option<PendingSubmission>,
    pub created_at_ms: i64,
    /// Sequence number of the last applied event.
    pub last_seq: u64,
}

impl SessionState {
    pub fn session_id(&self) -> &str {
        &self.config.session_id
    }

    pub fn is_completed(&self) -> bool {
        self.phase == Phase::Completed
    }

    /// Most recent counterfactual shown to the learner, if any.
    pub fn latest_suggestion(&self) -> Option<&Counterfactual> {
        self.history.iter().rev().find_map(|r| r.explanation_shown.as_ref())
    }
}

#[cfg(test)]
mod tests;
