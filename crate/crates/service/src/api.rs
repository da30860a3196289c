use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, SecondsFormat, Utc};
use clxai_core::explainer::{Counterfactual, Explanation, FeedbackInput, GuidanceSuggestion};
use clxai_core::game::{jsonl, now_ms, Engine, Phase, RoundRecord, SessionState};
use clxai_core::world::{Diet, Label, PlantConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::StudyText;
use crate::error::{ApiError, ApiResult};
use crate::store::{SlotHandle, Store};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub store: Arc<Store>,
    pub study: Arc<StudyText>,
    pub auth_token: Option<Arc<str>>,
}

/// JSON body where an empty body means `{}` and any decode failure is a
/// VALIDATION error.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::validation(format!("unreadable body: {e}")))?;
        let body: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) {
            b"{}"
        } else {
            &bytes
        };
        serde_json::from_slice(body)
            .map(JsonBody)
            .map_err(|e| ApiError::validation(format!("malformed request body: {e}")))
    }
}

pub fn iso_timestamp(ms: i64) -> String {
    DateTime::<Utc>::from_timestamp_millis(ms)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Default seed for a session that does not name one.
pub fn seed_for_id(session_id: &str) -> u64 {
    let digest = Sha256::digest(session_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// What the client renders: the editable diet plus everything needed to
/// show costs, budget, fitness limits and history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub phase: Phase,
    pub round_number: u32,
    pub total_rounds: u32,
    pub explanation_interval: u32,
    pub fitness: u32,
    pub optimal_threshold: u32,
    pub unsatisfactory_threshold: u32,
    pub current_diet: Diet,
    pub round_budget: u32,
    pub plants: Vec<PlantConfig>,
    pub history: Vec<RoundRecord>,
    pub latest_suggestion: Option<Counterfactual>,
    pub pending_explanations: Vec<Counterfactual>,
    pub pending_guidance: Option<GuidanceSuggestion>,
    pub probes_total: usize,
    pub probes_answered: usize,
    pub questionnaire_submitted: bool,
    pub completed: bool,
    pub created_at: String,
    pub event_count: u64,
}

impl From<&SessionState> for SessionView {
    fn from(s: &SessionState) -> Self {
        let c = &s.config;
        Self {
            session_id: c.session_id.clone(),
            phase: s.phase,
            round_number: s.round_number,
            total_rounds: c.total_rounds,
            explanation_interval: c.explanation_interval,
            fitness: s.fitness,
            optimal_threshold: c.optimal_threshold,
            unsatisfactory_threshold: c.unsatisfactory_threshold,
            current_diet: s.current_diet.clone(),
            round_budget: c.world.round_budget,
            plants: c.world.plants.clone(),
            history: s.history.clone(),
            latest_suggestion: s.latest_suggestion().cloned(),
            pending_explanations: s.pending_explanations.clone(),
            pending_guidance: s.pending_guidance.clone(),
            probes_total: s.probes.len(),
            probes_answered: s.probe_results.len(),
            questionnaire_submitted: s.questionnaire.is_some(),
            completed: s.is_completed(),
            created_at: iso_timestamp(s.created_at_ms),
            event_count: s.last_seq,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub session_id: Option<String>,
    pub seed: Option<u64>,
    pub total_rounds: Option<u32>,
    pub explanation_interval: Option<u32>,
    pub fitness_start: Option<u32>,
    pub fitness_gain: Option<u32>,
    pub fitness_loss: Option<u32>,
    pub optimal_threshold: Option<u32>,
    pub unsatisfactory_threshold: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub state: SessionView,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRound {
    pub diet: Diet,
    pub decision_ms: u64,
    #[serde(default)]
    pub feedback: Option<FeedbackInput>,
    /// Idempotency key: resubmitting an already played round returns its
    /// original outcome.
    #[serde(default)]
    pub round_number: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundResponse {
    pub round_record: RoundRecord,
    pub state: SessionView,
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateResponse {
    pub state: SessionView,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    /// Diet to explain; the last submitted diet when absent.
    #[serde(default)]
    pub diet: Option<Diet>,
    #[serde(default)]
    pub constraints: FeedbackInput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireRequest {
    pub items: Vec<u8>,
    #[serde(default)]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SatisfactionResponse {
    pub satisfaction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbesView {
    pub probes: Vec<Diet>,
    pub answered: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeAnswers {
    pub answers: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnderstandingResponse {
    pub understanding: f64,
    pub answered: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyView {
    #[serde(flatten)]
    pub text: StudyText,
    pub plants: Vec<PlantConfig>,
    pub round_budget: u32,
}

fn lookup(state: &AppState, id: &str) -> ApiResult<SlotHandle> {
    state.store.get(id)?.ok_or_else(|| ApiError::not_found(id))
}

fn round_response(record: &RoundRecord, state: &SessionState) -> RoundResponse {
    let explanation = match (&record.explanation_shown, &record.guidance_shown) {
        (Some(cf), _) => Some(Explanation::Counterfactual(cf.clone())),
        (None, Some(g)) => Some(Explanation::Guidance(g.clone())),
        (None, None) => None,
    };
    RoundResponse {
        round_record: record.clone(),
        state: state.into(),
        explanation,
    }
}

async fn create_session(
    State(app): State<AppState>,
    JsonBody(req): JsonBody<CreateSession>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let id = req
        .session_id
        .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    let seed = req.seed.unwrap_or_else(|| seed_for_id(&id));
    let mut config = app.engine.session_config(id, seed);
    let set = |slot: &mut u32, v: Option<u32>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut config.total_rounds, req.total_rounds);
    set(&mut config.explanation_interval, req.explanation_interval);
    set(&mut config.fitness_start, req.fitness_start);
    set(&mut config.fitness_gain, req.fitness_gain);
    set(&mut config.fitness_loss, req.fitness_loss);
    set(&mut config.optimal_threshold, req.optimal_threshold);
    set(&mut config.unsatisfactory_threshold, req.unsatisfactory_threshold);

    let session = app.engine.create_session(config, now_ms())?;
    let handle = app.store.insert(session)?;
    let slot = handle.lock().await;
    let session = slot.session();
    tracing::info!(session_id = session.id(), "session created");
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: session.id().to_owned(),
            state: session.state().into(),
        }),
    ))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let handle = lookup(&app, &id)?;
    let slot = handle.lock().await;
    Ok(Json(slot.session().state().into()))
}

async fn submit_round(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<SubmitRound>,
) -> ApiResult<Json<RoundResponse>> {
    let handle = lookup(&app, &id)?;
    let mut slot = handle.lock().await;
    let state = slot.session().state();
    if let Some(r) = req.round_number {
        let already_played = r < state.round_number
            || (r == state.round_number && matches!(state.phase, Phase::ShowingOutcome | Phase::ShowingExplanation));
        if already_played {
            let record = state
                .history
                .iter()
                .find(|h| h.round_number == r)
                .ok_or_else(|| ApiError::validation(format!("round {r} was never played")))?;
            return Ok(Json(round_response(record, state)));
        }
        if r != state.round_number {
            return Err(ApiError::validation(format!(
                "round {r} submitted, current round is {}",
                state.round_number
            )));
        }
    }
    let feedback = req.feedback.map(|f| f.resolve(&state.config.world)).transpose()?;
    let engine = app.engine.clone();
    let record = slot.mutate(|s| s.submit_round(&engine, req.diet, req.decision_ms, feedback, now_ms()))?;
    Ok(Json(round_response(&record, slot.session().state())))
}

async fn acknowledge(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StateResponse>> {
    let handle = lookup(&app, &id)?;
    let mut slot = handle.lock().await;
    slot.mutate(|s| s.acknowledge(now_ms()))?;
    Ok(Json(StateResponse {
        state: slot.session().state().into(),
    }))
}

async fn feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FeedbackRequest>,
) -> ApiResult<Json<Explanation>> {
    let handle = lookup(&app, &id)?;
    let mut slot = handle.lock().await;
    let constraints = req.constraints.resolve(&slot.session().state().config.world)?;
    let engine = app.engine.clone();
    let out = slot.mutate(|s| s.request_explanation(&engine, req.diet, constraints, now_ms()))?;
    Ok(Json(out))
}

async fn questionnaire(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<QuestionnaireRequest>,
) -> ApiResult<Json<SatisfactionResponse>> {
    let handle = lookup(&app, &id)?;
    let mut slot = handle.lock().await;
    let satisfaction = slot.mutate(|s| s.submit_questionnaire(req.items, req.free_text, now_ms()))?;
    Ok(Json(SatisfactionResponse { satisfaction }))
}

async fn get_probes(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProbesView>> {
    let handle = lookup(&app, &id)?;
    let slot = handle.lock().await;
    let state = slot.session().state();
    if !matches!(state.phase, Phase::Probes | Phase::Completed) {
        return Err(clxai_core::Error::WrongPhase {
            command: "probes",
            phase: state.phase.to_string(),
        }
        .into());
    }
    Ok(Json(ProbesView {
        probes: state.probes.iter().map(|p| p.diet.clone()).collect(),
        answered: state.probe_results.len(),
    }))
}

async fn answer_probes(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ProbeAnswers>,
) -> ApiResult<Json<UnderstandingResponse>> {
    let handle = lookup(&app, &id)?;
    let mut slot = handle.lock().await;
    let understanding = slot.mutate(|s| s.answer_probes(&req.answers, now_ms()))?;
    let state = slot.session().state();
    Ok(Json(UnderstandingResponse {
        understanding,
        answered: state.probe_results.len(),
        completed: state.is_completed(),
    }))
}

async fn export_log(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let handle = lookup(&app, &id)?;
    let slot = handle.lock().await;
    let body = jsonl::encode(slot.session().events());
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn study(State(app): State<AppState>) -> Json<StudyView> {
    Json(StudyView {
        text: (*app.study).clone(),
        plants: app.engine.world().plants.clone(),
        round_budget: app.engine.world().round_budget,
    })
}

pub async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_hash: app.engine.model_hash().to_owned(),
    })
}

async fn api_not_found() -> ApiError {
    ApiError::new(crate::error::ErrorCode::NotFound, "no such endpoint")
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.auth_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return (
                StatusCode::UNAUTHORIZED,
                Json(serde_json::json!({ "code": "UNAUTHORIZED", "message": "missing or wrong bearer token" })),
            )
                .into_response();
        }
    }
    next.run(req).await
}

/// The `/api/v1` routes, without CORS or static files.
pub fn api_router(state: AppState) -> Router<AppState> {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/rounds", post(submit_round))
        .route("/sessions/{id}/ack", post(acknowledge))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/questionnaire", post(questionnaire))
        .route("/sessions/{id}/probes", get(get_probes).post(answer_probes))
        .route("/sessions/{id}/log", get(export_log))
        .route("/study", get(study))
        .fallback(api_not_found)
        .layer(middleware::from_fn_with_state(state, require_token))
}
