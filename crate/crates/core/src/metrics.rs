//! Evaluation measures computed from session logs: explanation goodness,
//! satisfaction, local understanding and task learning.
//!
//! Everything here is a pure function of events and responses, so a report
//! recomputed from a stored JSONL log is identical to the live one.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainer::{is_feasible, FeedbackConstraints};
use crate::game::{replay, EventKind, GameEvent, SessionState};
use crate::world::{Diet, Label};

pub const QUESTIONNAIRE_ITEMS: usize = 8;

/// Eight 5-point Likert ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub session_id: String,
    pub items: Vec<u8>,
    #[serde(default)]
    pub free_text: Option<String>,
}

impl QuestionnaireResponse {
    pub fn validate(&self) -> Result<()> {
        if self.items.len() != QUESTIONNAIRE_ITEMS {
            return Err(Error::Validation(format!(
                "questionnaire needs {QUESTIONNAIRE_ITEMS} items, got {}",
                self.items.len()
            )));
        }
        if let Some(bad) = self.items.iter().find(|&&v| !(1..=5).contains(&v)) {
            return Err(Error::Validation(format!("Likert rating {bad} outside 1..=5")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub diet: Diet,
    pub learner_prediction: Label,
    pub model_prediction: Label,
    pub correct: bool,
}

impl ProbeResult {
    pub fn new(diet: Diet, learner_prediction: Label, model_prediction: Label) -> Self {
        Self {
            diet,
            learner_prediction,
            model_prediction,
            correct: learner_prediction == model_prediction,
        }
    }
}

/// Mean of the eight ratings.
pub fn satisfaction_score(response: &QuestionnaireResponse) -> Result<f64> {
    response.validate()?;
    Ok(response.items.iter().map(|&v| f64::from(v)).sum::<f64>() / QUESTIONNAIRE_ITEMS as f64)
}

/// Fraction of probes where the learner predicted the model's label.
pub fn understanding_score(probes: &[ProbeResult]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Empty("probe results"));
    }
    Ok(probes.iter().filter(|p| p.correct).count() as f64 / probes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessSummary {
    pub explanations: usize,
    pub validity_rate: Option<f64>,
    pub mean_proximity: Option<f64>,
    pub mean_sparsity: Option<f64>,
    pub feasibility_rate: Option<f64>,
}

impl GoodnessSummary {
    pub fn is_empty(&self) -> bool {
        self.explanations == 0
    }
}

/// Aggregates goodness over every EXPLANATION_ISSUED event. Validity uses the
/// prediction recorded with the counterfactual; feasibility is checked against
/// the constraints recorded with it.
pub fn explanation_goodness(events: &[GameEvent]) -> Result<GoodnessSummary> {
    let world = match events.first().map(|e| &e.event) {
        Some(EventKind::SessionCreated { config, .. }) => &config.world,
        _ => return Err(Error::Corruption("log does not start with SESSION_CREATED".into())),
    };
    let issued: Vec<(&FeedbackConstraints, &crate::explainer::Counterfactual)> = events
        .iter()
        .filter_map(|e| match &e.event {
            EventKind::ExplanationIssued {
                constraints,
                counterfactual,
                ..
            } => Some((constraints, counterfactual)),
            _ => None,
        })
        .collect();
    let n = issued.len();
    if n == 0 {
        return Ok(GoodnessSummary {
            explanations: 0,
            validity_rate: None,
            mean_proximity: None,
            mean_sparsity: None,
            feasibility_rate: None,
        });
    }
    let nf = n as f64;
    let valid = issued
        .iter()
        .filter(|(_, cf)| cf.predicted.label == Label::Improve)
        .count();
    let feasible = issued.iter().filter(|(c, cf)| is_feasible(cf, c, world)).count();
    Ok(GoodnessSummary {
        explanations: n,
        validity_rate: Some(valid as f64 / nf),
        mean_proximity: Some(issued.iter().map(|(_, cf)| f64::from(cf.distance)).sum::<f64>() / nf),
        mean_sparsity: Some(issued.iter().map(|(_, cf)| cf.sparsity() as f64).sum::<f64>() / nf),
        feasibility_rate: Some(feasible as f64 / nf),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLearning {
    pub fitness_trajectory: Vec<u32>,
    /// Least-squares slope of fitness after each round against its round number.
    pub fitness_slope: f64,
    pub final_fitness: u32,
    pub improve_rate_h1: f64,
    pub improve_rate_h2: f64,
    pub mean_decision_ms_h1: f64,
    pub mean_decision_ms_h2: f64,
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Fitness slope and first-half/second-half comparisons. The first half holds
/// `floor(n / 2)` rounds.
pub fn task_learning(state: &SessionState) -> Result<TaskLearning> {
    let rounds = &state.history;
    if rounds.len() < 2 {
        return Err(Error::Validation(format!(
            "task learning needs at least 2 completed rounds, got {}",
            rounds.len()
        )));
    }
    let xs: Vec<f64> = rounds.iter().map(|r| f64::from(r.round_number)).collect();
    let ys: Vec<f64> = rounds.iter().map(|r| f64::from(r.fitness_after)).collect();
    let (h1, h2) = rounds.split_at(rounds.len() / 2);
    let improve_rate = |rs: &[crate::game::RoundRecord]| {
        rs.iter().filter(|r| r.prediction.label == Label::Improve).count() as f64 / rs.len() as f64
    };
    let mean_ms =
        |rs: &[crate::game::RoundRecord]| rs.iter().map(|r| r.decision_ms as f64).sum::<f64>() / rs.len() as f64;
    Ok(TaskLearning {
        fitness_trajectory: rounds.iter().map(|r| r.fitness_after).collect(),
        fitness_slope: ols_slope(&xs, &ys),
        final_fitness: state.fitness,
        improve_rate_h1: improve_rate(h1),
        improve_rate_h2: improve_rate(h2),
        mean_decision_ms_h1: mean_ms(h1),
        mean_decision_ms_h2: mean_ms(h2),
    })
}

/// All four measures for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub goodness: GoodnessSummary,
    pub satisfaction: Option<f64>,
    pub understanding: Option<f64>,
    pub task_learning: Option<TaskLearning>,
}

pub fn session_metrics(events: &[GameEvent]) -> Result<SessionMetrics> {
    let state = replay(events)?;
    let satisfaction = state.questionnaire.as_ref().map(satisfaction_score).transpose()?;
    let understanding = if state.probe_results.is_empty() {
        None
    } else {
        Some(understanding_score(&state.probe_results)?)
    };
    Ok(SessionMetrics {
        session_id: state.session_id().to_owned(),
        goodness: explanation_goodness(events)?,
        satisfaction,
        understanding,
        task_learning: task_learning(&state).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 when `n == 1`).
    pub sd: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortAggregates {
    pub sessions: usize,
    pub validity_rate: Option<Aggregate>,
    pub mean_proximity: Option<Aggregate>,
    pub mean_sparsity: Option<Aggregate>,
    pub satisfaction: Option<Aggregate>,
    pub understanding: Option<Aggregate>,
    pub fitness_slope: Option<Aggregate>,
    pub final_fitness: Option<Aggregate>,
}

pub fn cohort_aggregates(reports: &[SessionMetrics]) -> Result<CohortAggregates> {
    if reports.is_empty() {
        return Err(Error::Empty("session reports"));
    }
    let collect =
        |f: &dyn Fn(&SessionMetrics) -> Option<f64>| Aggregate::of(&reports.iter().filter_map(f).collect::<Vec<_>>());
    Ok(CohortAggregates {
        sessions: reports.len(),
        validity_rate: collect(&|r| r.goodness.validity_rate),
        mean_proximity: collect(&|r| r.goodness.mean_proximity),
        mean_sparsity: collect(&|r| r.goodness.mean_sparsity),
        satisfaction: collect(&|r| r.satisfaction),
        understanding: collect(&|r| r.understanding),
        fitness_slope: collect(&|r| r.task_learning.as_ref().map(|t| t.fitness_slope)),
        final_fitness: collect(&|r| r.task_learning.as_ref().map(|t| f64::from(t.final_fitness))),
    })
}

/// Column order of the report CSV.
pub const REPORT_COLUMNS: [&str; 12] = [
    "session_id",
    "validity_rate",
    "mean_proximity",
    "mean_sparsity",
    "feasibility_rate",
    "satisfaction",
    "understanding",
    "fitness_slope",
    "improve_rate_h1",
    "improve_rate_h2",
    "mean_decision_ms_h1",
    "mean_decision_ms_h2",
];

/// One CSV row; empty cells mark measures a session does not have.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub session_id: String,
    pub validity_rate: Option<f64>,
    pub mean_proximity: Option<f64>,
    pub mean_sparsity: Option<f64>,
    pub feasibility_rate: Option<f64>,
    pub satisfaction: Option<f64>,
    pub understanding: Option<f64>,
    pub fitness_slope: Option<f64>,
    pub improve_rate_h1: Option<f64>,
    pub improve_rate_h2: Option<f64>,
    pub mean_decision_ms_h1: Option<f64>,
    pub mean_decision_ms_h2: Option<f64>,
}

impl From<&SessionMetrics> for ReportRow {
    fn from(m: &SessionMetrics) -> Self {
        let t = m.task_learning.as_ref();
        Self {
            session_id: m.session_id.clone(),
            validity_rate: m.goodness.validity_rate,
            mean_proximity: m.goodness.mean_proximity,
            mean_sparsity: m.goodness.mean_sparsity,
            feasibility_rate: m.goodness.feasibility_rate,
            satisfaction: m.satisfaction,
            understanding: m.understanding,
            fitness_slope: t.map(|t| t.fitness_slope),
            improve_rate_h1: t.map(|t| t.improve_rate_h1),
            improve_rate_h2: t.map(|t| t.improve_rate_h2),
            mean_decision_ms_h1: t.map(|t| t.mean_decision_ms_h1),
            mean_decision_ms_h2: t.map(|t| t.mean_decision_ms_h2),
        }
    }
}

pub fn write_report<W: std::io::Write>(reports: &[SessionMetrics], out: W) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Empty("session reports"));
    }
    let mut writer = csv::Writer::from_writer(out);
    for r in reports {
        writer.serialize(ReportRow::from(r))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn export_report(reports: &[SessionMetrics], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_report(reports, std::io::BufWriter::new(file))
}

pub fn parse_report<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Validation(format!("unexpected report header {header:?}")));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}
