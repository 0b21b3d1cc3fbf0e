//! HTTP API: submission intake, corpus browsing, statistics, release
//! downloads and the maintainer moderation queue.
//!
//! Bodies are JSON except artifact downloads. Errors are
//! `{"error": <code>, "detail": <text>}`. Moderation endpoints need
//! `Authorization: Bearer <admin_token>`.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::TranscriptionBounds;
use crate::keys::Keys;
use crate::model::{
    CollectionMethod, CorpusVersion, Currency, Message, Source, Status, SubmissionBatch, UserProfile, VersionId,
};
use crate::pipeline::{submit, IntakeConfig, Submission, SubmitError, SubmitOutcome};
use crate::release::{artifact_file_name, read_artifact, ArtifactKind, ReleaseError};
use crate::rewards::{compute_reward, RewardOutcome, RewardScheme, SchemeRegistry};
use crate::stats::stats_report;
use crate::store::{MessageFilter, Page, Store, StoreError};
use crate::validate::{moderate, quality_report, Blocklist, Decision, ModerationError, Policy, QualityReport};

/// Default cap on a submitted payload, in bytes.
pub const DEFAULT_MAX_PAYLOAD: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub keys: Keys,
    pub policy: Policy,
    pub blocklist: Blocklist,
    pub schemes: SchemeRegistry,
    pub bounds: TranscriptionBounds,
    /// Largest accepted payload after base64 decoding.
    pub max_payload: usize,
}

impl ServiceConfig {
    pub fn new(keys: Keys) -> Self {
        ServiceConfig {
            keys,
            policy: Policy::default(),
            blocklist: Blocklist::builtin(),
            schemes: SchemeRegistry::builtin(),
            bounds: TranscriptionBounds::default(),
            max_payload: DEFAULT_MAX_PAYLOAD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(store: Store, config: ServiceConfig) -> Self {
        AppState {
            store: Arc::new(store),
            config: Arc::new(config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, detail: impl ToString) -> Self {
        ApiError {
            status,
            code: code.into(),
            detail: detail.to_string(),
        }
    }

    fn unauthorized(detail: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", detail)
    }

    fn not_found(detail: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }

    fn internal(detail: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}

fn store_status(e: &StoreError) -> StatusCode {
    match e {
        StoreError::DuplicateBatch(_)
        | StoreError::DuplicateMessage(_)
        | StoreError::ConflictingProfile(_)
        | StoreError::AlreadyModerated { .. }
        | StoreError::NonMonotoneVersion { .. }
        | StoreError::ShrinkingCorpus { .. } => StatusCode::CONFLICT,
        StoreError::BatchNotFound(_) => StatusCode::NOT_FOUND,
        StoreError::UnknownProfile { .. }
        | StoreError::InvalidBatch(_)
        | StoreError::NotAnonymized { .. }
        | StoreError::MalformedFilter(_) => StatusCode::UNPROCESSABLE_ENTITY,
        StoreError::Corrupt(_) | StoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(store_status(&e), e.code(), &e)
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match &e {
            SubmitError::BadUploadCode => StatusCode::UNAUTHORIZED,
            SubmitError::Store(s) => store_status(s),
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), &e)
    }
}

impl From<ModerationError> for ApiError {
    fn from(e: ModerationError) -> Self {
        let status = match &e {
            ModerationError::Store(s) => store_status(s),
            ModerationError::MissingProfile(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), &e)
    }
}

impl From<ReleaseError> for ApiError {
    fn from(e: ReleaseError) -> Self {
        let status = match &e {
            ReleaseError::NotFound(_) => StatusCode::NOT_FOUND,
            ReleaseError::Store(s) => store_status(s),
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), &e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/submissions", post(post_submission))
        .route("/corpus/messages", get(get_messages))
        .route("/stats", get(get_stats))
        .route("/releases", get(get_releases))
        .route("/releases/{version}/{artifact}", get(get_artifact))
        .route("/schemes", get(get_schemes))
        .route("/schemes/{name}/reward", get(get_scheme_reward))
        .route("/moderation/queue", get(get_queue))
        .route("/moderation/{batch}/decision", post(post_decision))
        .layer(DefaultBodyLimit::disable())
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn authorize(headers: &HeaderMap, config: &ServiceConfig) -> ApiResult<()> {
    let Some(expected) = config.keys.admin_token.as_deref() else {
        return Err(ApiError::unauthorized("no maintainer token configured"));
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
    // Compare digests so the comparison time does not depend on a prefix match.
    if Sha256::digest(given.trim().as_bytes()) != Sha256::digest(expected.as_bytes()) {
        return Err(ApiError::unauthorized("invalid maintainer token"));
    }
    Ok(())
}

/// `POST /submissions` body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmissionRequest {
    pub method: CollectionMethod,
    pub source: Source,
    pub contributor: String,
    /// Channel payload as text.
    #[serde(default)]
    pub payload: Option<String>,
    /// Channel payload as standard base64, for non-text bytes.
    #[serde(default)]
    pub payload_base64: Option<String>,
    /// Survey answers keyed by field name.
    #[serde(default)]
    pub profile: Option<BTreeMap<String, String>>,
    /// Id for the answers in `profile`, or a link to a stored profile.
    #[serde(default)]
    pub profile_id: Option<String>,
}

fn bad_request(code: &str, detail: impl ToString) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, code, detail)
}

fn too_large(limit: usize) -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        "payload_too_large",
        format!("payload exceeds {limit} bytes"),
    )
}

async fn post_submission(State(app): State<AppState>, request: Request) -> ApiResult<Response> {
    let cap = app.config.max_payload;
    // Room for base64 expansion and the surrounding JSON.
    let body_cap = cap.saturating_mul(2).saturating_add(64 * 1024);
    let bytes: Bytes = axum::body::to_bytes(request.into_body(), body_cap)
        .await
        .map_err(|_| too_large(cap))?;
    let req: SubmissionRequest = serde_json::from_slice(&bytes).map_err(|e| bad_request("malformed_request", e))?;
    let payload = match (req.payload, req.payload_base64) {
        (Some(text), None) => text.into_bytes(),
        (None, Some(b64)) => base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| bad_request("malformed_request", format!("payload_base64: {e}")))?,
        _ => {
            return Err(bad_request(
                "malformed_request",
                "exactly one of payload and payload_base64 is required",
            ))
        }
    };
    if payload.len() > cap {
        return Err(too_large(cap));
    }
    let (profile, profile_id) = match req.profile {
        Some(answers) => {
            let mut profile = UserProfile::unknown(req.profile_id.unwrap_or_default());
            for (field, value) in &answers {
                profile
                    .set_field(field, value)
                    .map_err(|e| bad_request("invalid_profile", e))?;
            }
            (Some(profile), None)
        }
        None => (None, req.profile_id),
    };
    let submission = Submission {
        method: req.method,
        source: req.source,
        contributor: req.contributor,
        payload,
        profile,
        profile_id,
    };
    let outcome: SubmitOutcome = blocking(move || {
        let config = &app.config;
        let intake = IntakeConfig {
            keys: &config.keys,
            bounds: config.bounds,
            blocklist: &config.blocklist,
            policy: &config.policy,
        };
        Ok(submit(&app.store, submission, &intake)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(outcome)).into_response())
}

fn parse_usize(key: &str, value: &str) -> ApiResult<usize> {
    value.parse().map_err(|_| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "malformed_filter",
            format!("{key} must be a non-negative integer"),
        )
    })
}

async fn get_messages(State(app): State<AppState>, Query(pairs): Query<Vec<(String, String)>>) -> ApiResult<Response> {
    let mut page = Page::default();
    let mut rest = Vec::new();
    for (k, v) in &pairs {
        match k.as_str() {
            "offset" => page.offset = parse_usize(k, v)?,
            "limit" => page.limit = parse_usize(k, v)?,
            "status" => return Err(StoreError::MalformedFilter("only approved messages are browsable".into()).into()),
            _ if v.is_empty() => {}
            _ => rest.push((k.as_str(), v.as_str())),
        }
    }
    let mut filter = MessageFilter::from_pairs(rest)?;
    filter.status = Some(Status::Approved);
    Ok(Json(app.store.query_messages(&filter, page)?).into_response())
}

async fn get_stats(State(app): State<AppState>) -> Json<crate::stats::StatsReport> {
    Json(stats_report(&app.store.snapshot()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReleaseList {
    pub versions: Vec<CorpusVersion>,
}

async fn get_releases(State(app): State<AppState>) -> Json<ReleaseList> {
    Json(ReleaseList {
        versions: app.store.snapshot().versions.clone(),
    })
}

async fn get_artifact(
    State(app): State<AppState>,
    Path((version, artifact)): Path<(String, String)>,
) -> ApiResult<Response> {
    let version: VersionId = version
        .parse()
        .map_err(|_| ApiError::not_found(format!("release {version} not found")))?;
    if !app.store.snapshot().versions.iter().any(|v| v.version_id == version) {
        return Err(ApiError::not_found(format!("release {version} not found")));
    }
    let name = artifact_file_name(version, &artifact)
        .ok_or_else(|| ApiError::not_found(format!("release {version} has no artifact {artifact:?}")))?;
    let content_type = ArtifactKind::ALL
        .iter()
        .find(|k| k.file_name(version) == name)
        .map_or("text/plain; charset=utf-8", |k| k.content_type());
    let root = app.store.root().to_path_buf();
    let read_name = name.clone();
    let bytes = blocking(move || Ok(read_artifact(&root, version, &read_name)?)).await?;
    let digest = crate::release::sha256_hex(&bytes);
    let disposition = format!("attachment; filename=\"{name}\"");
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, disposition),
            (header::ETAG, format!("\"{digest}\"")),
        ],
        Body::from(bytes),
    )
        .into_response())
}

/// A reward as shown to clients: the exact outcome plus the amount as a
/// decimal string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RewardView {
    pub scheme: String,
    pub currency: Currency,
    pub amount: String,
    pub cents: i64,
    pub below_minimum: bool,
    pub bracket: Option<usize>,
}

impl RewardView {
    pub fn new(scheme: &str, outcome: &RewardOutcome) -> Self {
        RewardView {
            scheme: scheme.to_string(),
            currency: outcome.amount.currency,
            amount: outcome.amount.amount_string(),
            cents: outcome.amount.cents,
            below_minimum: outcome.below_minimum,
            bracket: outcome.bracket,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeList {
    pub schemes: Vec<RewardScheme>,
}

async fn get_schemes(State(app): State<AppState>) -> Json<SchemeList> {
    let registry = &app.config.schemes;
    Json(SchemeList {
        schemes: registry.names().filter_map(|n| registry.get(n).cloned()).collect(),
    })
}

async fn get_scheme_reward(
    State(app): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
) -> ApiResult<Json<RewardView>> {
    let scheme = app
        .config
        .schemes
        .get(&name)
        .ok_or_else(|| ApiError::not_found(format!("unknown scheme {name:?}")))?;
    let n = q.get("n").ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "missing_count",
            "query parameter n is required",
        )
    })?;
    let n: u64 = n.parse().map_err(|_| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "missing_count",
            "n must be a non-negative integer",
        )
    })?;
    Ok(Json(RewardView::new(&name, &compute_reward(scheme, n))))
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueItem {
    pub batch: SubmissionBatch,
    pub profile: Option<UserProfile>,
    pub report: QualityReport,
    pub messages: Vec<Message>,
    /// Reward for this batch under every registered scheme.
    pub reward_previews: Vec<RewardView>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Queue {
    pub batches: Vec<QueueItem>,
}

/// Pending batches, oldest first, with their quality reports.
pub fn moderation_queue(state: &crate::store::CorpusState, config: &ServiceConfig) -> Result<Queue, StoreError> {
    let mut pending: Vec<&SubmissionBatch> = state.pending_batches().collect();
    pending.sort_by(|a, b| a.received_at.cmp(&b.received_at).then_with(|| a.id.cmp(&b.id)));
    let mut batches = Vec::with_capacity(pending.len());
    for batch in pending {
        let report = quality_report(state, &batch.id, &config.blocklist, &config.policy)?;
        let n = batch.message_ids.len() as u64;
        let reward_previews = config
            .schemes
            .names()
            .filter_map(|name| {
                config
                    .schemes
                    .get(name)
                    .map(|s| RewardView::new(name, &compute_reward(s, n)))
            })
            .collect();
        batches.push(QueueItem {
            batch: batch.clone(),
            profile: state.batch_profile(batch).cloned(),
            report,
            messages: state.batch_messages(batch).into_iter().cloned().collect(),
            reward_previews,
        });
    }
    Ok(Queue { batches })
}

async fn get_queue(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<Json<Queue>> {
    authorize(&headers, &app.config)?;
    let state = app.store.snapshot();
    Ok(Json(moderation_queue(&state, &app.config)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
    #[serde(default)]
    pub reason: Option<String>,
    /// Registered scheme name used to price an approval.
    #[serde(default)]
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionResponse {
    pub batch: SubmissionBatch,
    pub reward: Option<RewardView>,
}

async fn post_decision(
    State(app): State<AppState>,
    Path(batch_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<DecisionResponse>> {
    authorize(&headers, &app.config)?;
    let req: DecisionRequest = serde_json::from_slice(&body).map_err(|e| bad_request("malformed_request", e))?;
    let reason = req.reason.map(|r| r.trim().to_string()).filter(|r| !r.is_empty());
    if req.decision == Decision::Reject && reason.is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "missing_reason",
            "a rejection needs a reason",
        ));
    }
    let scheme = match &req.scheme {
        Some(name) if req.decision == Decision::Approve => {
            Some(app.config.schemes.get(name).cloned().ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "unknown_scheme",
                    format!("unknown scheme {name:?}"),
                )
            })?)
        }
        _ => None,
    };
    let outcome = blocking(move || {
        Ok(moderate(
            &app.store,
            &batch_id,
            req.decision,
            reason,
            scheme.as_ref(),
            &app.config.policy,
        )?)
    })
    .await?;
    let reward = outcome
        .reward
        .as_ref()
        .zip(req.scheme.as_deref())
        .map(|(o, name)| RewardView::new(name, o));
    Ok(Json(DecisionResponse {
        batch: outcome.batch,
        reward,
    }))
}
