//! HTTP/JSON service over a mindfuse store. Routes live under `/api/v1`;
//! long pipeline steps run as polled jobs.

pub mod error;
pub mod jobs;

use std::sync::{Arc, RwLock};

use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mindfuse_core::ads::FilterSpec;
use mindfuse_core::mining::PillarField;
use mindfuse_core::narrative::BriefEdit;
use mindfuse_core::telemetry::{Granularity, PromptTexts};
use mindfuse_core::workspace::{AnalyzeParams, Annotation, ClusterParams, Workspace, WorkspaceError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::{ApiError, ApiJson};
use crate::jobs::{JobHandle, JobKind, JobRegistry};

const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Size of the job worker pool.
    pub workers: usize,
    /// When set, `/api/v1` requires `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Allowed CORS origins; empty allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            workers: 2,
            token: None,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    workspace: Arc<Workspace>,
    /// Readers share, mutations are exclusive.
    store_lock: Arc<RwLock<()>>,
    ingest_lock: Arc<tokio::sync::Mutex<()>>,
    jobs: Arc<JobRegistry>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(workspace: Workspace, options: &ServiceOptions) -> Self {
        AppState {
            workspace: Arc::new(workspace),
            store_lock: Arc::new(RwLock::new(())),
            ingest_lock: Arc::new(tokio::sync::Mutex::new(())),
            jobs: Arc::new(JobRegistry::new(options.workers)),
            token: options.token.as_deref().map(Arc::from),
        }
    }

    async fn run<T, F>(&self, exclusive: bool, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Workspace) -> Result<T, WorkspaceError> + Send + 'static,
    {
        let workspace = Arc::clone(&self.workspace);
        let lock = Arc::clone(&self.store_lock);
        let joined = tokio::task::spawn_blocking(move || {
            if exclusive {
                let _guard = lock.write().unwrap_or_else(|p| p.into_inner());
                f(&workspace)
            } else {
                let _guard = lock.read().unwrap_or_else(|p| p.into_inner());
                f(&workspace)
            }
        })
        .await;
        joined
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            .map_err(ApiError::from)
    }

    async fn read<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Workspace) -> Result<T, WorkspaceError> + Send + 'static,
    {
        self.run(false, f).await
    }

    async fn write<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Workspace) -> Result<T, WorkspaceError> + Send + 'static,
    {
        self.run(true, f).await
    }

    fn submit<T, F>(&self, kind: JobKind, f: F) -> Result<Response, ApiError>
    where
        T: Serialize,
        F: FnOnce(&Workspace) -> Result<T, WorkspaceError> + Send + 'static,
    {
        let work = Box::new(move |ws: &Workspace| {
            f(ws).map(|v| serde_json::to_value(v).expect("job results serialize"))
        });
        let handle = self.jobs.submit(kind, Arc::clone(&self.workspace), Arc::clone(&self.store_lock), work)?;
        Ok((StatusCode::ACCEPTED, Json(handle)).into_response())
    }
}

pub fn router(workspace: Workspace, options: ServiceOptions) -> Router {
    let cors = cors_layer(&options.cors_origins);
    let state = AppState::new(workspace, &options);
    router_with_state(state).layer(cors)
}

fn cors_layer(origins: &[String]) -> CorsLayer {
    let allow = if origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new().allow_origin(allow).allow_methods(Any).allow_headers(Any)
}

fn router_with_state(state: AppState) -> Router {
    let api = Router::new()
        .route("/ads", get(list_ads))
        .route("/ads/ingest", post(ingest_ads))
        .route("/pillars", get(list_pillars))
        .route("/pipeline/pillars", post(run_pillars))
        .route("/pipeline/personas", post(run_personas))
        .route("/pipeline/challenges", post(run_challenges))
        .route("/pipeline/jobs", get(list_jobs))
        .route("/pipeline/jobs/{id}", get(get_job))
        .route("/personas", get(get_personas))
        .route("/challenges", get(get_challenges))
        .route("/gaps", get(get_gaps))
        .route("/offerings", get(list_offerings).post(import_offerings))
        .route("/briefs", get(list_briefs).post(create_brief))
        .route("/briefs/propose", post(propose_briefs))
        .route("/briefs/distill", post(distill))
        .route("/briefs/{id}", get(get_brief).patch(revise_brief))
        .route("/briefs/{id}/export", get(export_brief))
        .route("/telemetry/import", post(import_telemetry))
        .route("/telemetry/trends", get(trends))
        .route("/telemetry/analyze", post(analyze))
        .route("/telemetry/annotations", get(list_annotations).post(annotate))
        .route("/creatives/{id}/heatmap", get(get_heatmap).put(put_heatmap))
        .route("/creatives/{id}/regions", get(regions))
        .route("/creatives/{id}/ablation-report", post(ablation_report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES));
    Router::new()
        .route("/healthz", get(|| async { Json(json!({ "ok": true })) }))
        .nest("/api/v1", api)
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(&**token) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

// ---- ads and pillars ----

#[derive(Debug, Deserialize)]
struct AdsQuery {
    /// Comma-separated.
    brand: Option<String>,
    /// Comma-separated; any may match.
    keyword: Option<String>,
    from: Option<String>,
    to: Option<String>,
}

fn split_list(s: &Option<String>) -> Option<Vec<String>> {
    s.as_ref().map(|s| s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect())
}

impl AdsQuery {
    fn filter(&self) -> Result<FilterSpec, ApiError> {
        let date_range = match (&self.from, &self.to) {
            (None, None) => Value::Null,
            (Some(from), Some(to)) => json!({ "from": from, "to": to }),
            _ => return Err(ApiError::bad_request("from and to must be given together")),
        };
        let spec = json!({
            "brands": split_list(&self.brand),
            "keyword_any": split_list(&self.keyword),
            "date_range": date_range,
        });
        serde_json::from_value(spec).map_err(|e| ApiError::bad_request(format!("bad filter: {e}")))
    }
}

async fn list_ads(State(state): State<AppState>, Query(q): Query<AdsQuery>) -> Result<Response, ApiError> {
    let filter = q.filter()?;
    let ads = state.read(move |ws| ws.ads(&filter)).await?;
    Ok(Json(ads).into_response())
}

async fn ingest_ads(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Response, ApiError> {
    let mut multipart = multipart.map_err(|r| ApiError::bad_request(r.body_text()))?;
    let (mut file, mut brand) = (None, None);
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        match field.name() {
            Some("file") => file = Some(field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?),
            Some("brand") => brand = Some(field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?),
            _ => {}
        }
    }
    let bytes = file.ok_or_else(|| ApiError::bad_request("missing multipart field \"file\""))?;
    let _ingesting = state
        .ingest_lock
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::conflict("an ingest is already running for this store"))?;
    let report = state.write(move |ws| ws.ingest_reader(&bytes[..], brand.as_deref())).await?;
    Ok(Json(report).into_response())
}

async fn list_pillars(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.read(|ws| ws.pillars()).await?).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PillarsBody {
    filter: FilterSpec,
}

async fn run_pillars(State(state): State<AppState>, ApiJson(body): ApiJson<PillarsBody>) -> Result<Response, ApiError> {
    body.filter.validate().map_err(WorkspaceError::from)?;
    state.submit(JobKind::Pillars, move |ws| ws.extract_pillars(&body.filter))
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterBody {
    #[serde(default)]
    filter: FilterSpec,
    seed: u64,
    #[serde(default = "one")]
    k_min: usize,
    #[serde(default)]
    k_max: Option<usize>,
}

fn submit_clustering(state: &AppState, field: PillarField, body: ClusterBody) -> Result<Response, ApiError> {
    body.filter.validate().map_err(WorkspaceError::from)?;
    if body.k_min == 0 || body.k_max.is_some_and(|k| k < body.k_min) {
        return Err(ApiError::bad_request("need 1 <= k_min <= k_max"));
    }
    let kind = match field {
        PillarField::Audience => JobKind::Personas,
        PillarField::Insight => JobKind::Challenges,
    };
    let params = ClusterParams {
        seed: body.seed,
        k_min: body.k_min,
        k_max: body.k_max,
        filter: body.filter,
    };
    state.submit(kind, move |ws| ws.cluster(field, params).map(|run| run.summary()))
}

async fn run_personas(State(state): State<AppState>, ApiJson(body): ApiJson<ClusterBody>) -> Result<Response, ApiError> {
    submit_clustering(&state, PillarField::Audience, body)
}

async fn run_challenges(State(state): State<AppState>, ApiJson(body): ApiJson<ClusterBody>) -> Result<Response, ApiError> {
    submit_clustering(&state, PillarField::Insight, body)
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<JobHandle>> {
    Json(state.jobs.list())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<JobHandle>, ApiError> {
    state.jobs.get(&id).map(Json).ok_or_else(|| ApiError::not_found(format!("job not found: {id}")))
}

async fn archetypes(state: AppState, field: PillarField, kind: &'static str) -> Result<Response, ApiError> {
    let run = state.read(move |ws| ws.archetype_run(field)).await?;
    let run = run.ok_or_else(|| ApiError::not_found(format!("no {kind} clustering yet")))?;
    Ok(Json(run.summary()).into_response())
}

async fn get_personas(State(state): State<AppState>) -> Result<Response, ApiError> {
    archetypes(state, PillarField::Audience, "persona").await
}

async fn get_challenges(State(state): State<AppState>) -> Result<Response, ApiError> {
    archetypes(state, PillarField::Insight, "challenge").await
}

#[derive(Debug, Deserialize)]
struct GapsQuery {
    top_n: Option<usize>,
}

async fn get_gaps(State(state): State<AppState>, Query(q): Query<GapsQuery>) -> Result<Response, ApiError> {
    Ok(Json(state.read(move |ws| ws.gaps(q.top_n)).await?).into_response())
}

// ---- offerings and briefs ----

async fn list_offerings(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.read(|ws| ws.offerings()).await?).into_response())
}

/// Body: a JSON array or JSONL of offerings; replaces the catalogue.
async fn import_offerings(State(state): State<AppState>, body: String) -> Result<Response, ApiError> {
    Ok(Json(state.write(move |ws| ws.import_offerings(&body)).await?).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BriefBody {
    persona_id: String,
    challenge_id: String,
    offering_id: String,
}

async fn create_brief(State(state): State<AppState>, ApiJson(b): ApiJson<BriefBody>) -> Result<Response, ApiError> {
    let brief = state
        .write(move |ws| ws.create_brief(&b.persona_id, &b.challenge_id, &b.offering_id))
        .await?;
    Ok(Json(brief).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProposeBody {
    top_n: usize,
    fan_out: usize,
    brand: Option<String>,
}

impl Default for ProposeBody {
    fn default() -> Self {
        ProposeBody {
            top_n: 2,
            fan_out: 1,
            brand: None,
        }
    }
}

async fn propose_briefs(State(state): State<AppState>, ApiJson(b): ApiJson<ProposeBody>) -> Result<Response, ApiError> {
    state.submit(JobKind::Briefs, move |ws| ws.propose(b.top_n, b.fan_out, b.brand.as_deref()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistillBody {
    story: String,
}

async fn distill(State(state): State<AppState>, ApiJson(b): ApiJson<DistillBody>) -> Result<Response, ApiError> {
    let insight = state.read(move |ws| ws.redistill(&b.story)).await?;
    Ok(Json(json!({ "insight": insight })).into_response())
}

async fn list_briefs(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.read(|ws| ws.briefs()).await?).into_response())
}

async fn get_brief(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.read(move |ws| ws.brief(&id)).await?).into_response())
}

async fn revise_brief(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(edit): ApiJson<BriefEdit>,
) -> Result<Response, ApiError> {
    Ok(Json(state.write(move |ws| ws.revise_brief(&id, edit)).await?).into_response())
}

async fn export_brief(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let brief = state.read(move |ws| ws.brief(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], brief.render_text()).into_response())
}

// ---- telemetry ----

/// Body: telemetry CSV with the standard header.
async fn import_telemetry(State(state): State<AppState>, body: String) -> Result<Response, ApiError> {
    let (imported, total) = state
        .write(move |ws| {
            let n = ws.import_telemetry(body.as_bytes())?;
            Ok((n, ws.telemetry_rows()?.len()))
        })
        .await?;
    Ok(Json(json!({ "imported": imported, "total_rows": total })).into_response())
}

#[derive(Debug, Deserialize)]
struct TrendsQuery {
    granularity: Option<String>,
}

fn granularity(s: Option<&str>) -> Result<Granularity, ApiError> {
    s.unwrap_or("weekly").parse().map_err(|e: mindfuse_core::telemetry::TelemetryError| ApiError::bad_request(e.to_string()))
}

async fn trends(State(state): State<AppState>, Query(q): Query<TrendsQuery>) -> Result<Response, ApiError> {
    let g = granularity(q.granularity.as_deref())?;
    Ok(Json(state.read(move |ws| ws.trends(g)).await?).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalyzeBody {
    granularity: Option<Granularity>,
    /// Overrides `granularity` when non-empty.
    granularities: Vec<Granularity>,
    /// Defaults to whether the provider is live.
    recommend: Option<bool>,
    texts: Option<PromptTexts>,
}

async fn analyze(State(state): State<AppState>, ApiJson(b): ApiJson<AnalyzeBody>) -> Result<Response, ApiError> {
    let granularities = if b.granularities.is_empty() {
        vec![b.granularity.unwrap_or(Granularity::Weekly)]
    } else {
        b.granularities
    };
    let analysis = state
        .read(move |ws| {
            let params = AnalyzeParams {
                granularities,
                creatives: Vec::new(),
                texts: b.texts.unwrap_or_default(),
                recommend: b.recommend.unwrap_or_else(|| ws.provider_is_live()),
            };
            ws.analyze(&params)
        })
        .await?;
    Ok(Json(analysis).into_response())
}

async fn list_annotations(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.read(|ws| ws.annotations()).await?).into_response())
}

async fn annotate(State(state): State<AppState>, ApiJson(a): ApiJson<Annotation>) -> Result<Response, ApiError> {
    Ok(Json(state.write(move |ws| ws.annotate(a)).await?).into_response())
}

// ---- creatives ----

async fn get_heatmap(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.read(move |ws| ws.heatmap(&id)).await?).into_response())
}

async fn put_heatmap(State(state): State<AppState>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let heatmap = state
        .write(move |ws| {
            let parsed = mindfuse_core::creative::parse_heatmap(&body)?;
            if parsed.creative_id != id {
                return Err(WorkspaceError::Invalid(format!(
                    "heatmap is for {:?}, not {id:?}",
                    parsed.creative_id
                )));
            }
            ws.put_heatmap(&body)
        })
        .await?;
    Ok(Json(heatmap).into_response())
}

#[derive(Debug, Deserialize)]
struct RegionsQuery {
    threshold: Option<f64>,
}

async fn regions(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RegionsQuery>,
) -> Result<Response, ApiError> {
    let threshold = q.threshold.unwrap_or(0.6);
    Ok(Json(state.read(move |ws| ws.regions(&id, threshold)).await?).into_response())
}

/// Body: variant-stats CSV including the original row.
async fn ablation_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Response, ApiError> {
    let outcome = state.read(move |ws| ws.ablation_from_csv(&body)).await?;
    Ok(Json(json!({ "creative_id": id, "report": outcome.report, "drops": outcome.drops })).into_response())
}
