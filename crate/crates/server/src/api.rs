//! HTTP routes under `/v1`.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nds_core::manifest::DatasetManifest;
use nds_core::protocol::{parse_dataset_ref, ApiError, BuildRequest, RecommendationRequest};
use serde::Deserialize;
use serde_json::json;

use crate::error::StoreError;
use crate::store::{BuildOutcome, Registry};

/// Manifest uploads can be large.
const MAX_BODY: usize = 1 << 30;

pub struct Failure {
    status: StatusCode,
    body: ApiError,
}

impl Failure {
    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Failure {
            status: StatusCode::BAD_REQUEST,
            body: ApiError::new(code, message),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(err: StoreError) -> Self {
        let status = match &err {
            StoreError::UnknownDataset(_) | StoreError::UnknownExpert { .. } | StoreError::NoDatasets => {
                StatusCode::NOT_FOUND
            }
            StoreError::NotReady { .. } | StoreError::ChecksumConflict { .. } | StoreError::Quarantined { .. } => {
                StatusCode::CONFLICT
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } | StoreError::BuildFailed { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            StoreError::InvalidId(_) | StoreError::NotSource => StatusCode::BAD_REQUEST,
            StoreError::Core(nds_core::Error::Io { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            StoreError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let detail = match &err {
            StoreError::Core(nds_core::Error::LengthMismatch { expected, found }) => {
                json!({ "expected": expected, "found": found })
            }
            StoreError::ChecksumConflict { existing, found, .. } => json!({ "existing": existing, "found": found }),
            StoreError::NotReady { id, status } => json!({ "dataset": id, "status": status }),
            StoreError::UnknownDataset(id) => json!({ "dataset": id }),
            _ => serde_json::Value::Null,
        };
        Failure {
            status,
            body: ApiError::new(err.code(), err.to_string()).with_detail(detail),
        }
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, Failure>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| Failure::bad_request("bad-request", format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| Failure {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: ApiError::new("internal", e.to_string()),
    })?
}

async fn list_datasets(State(registry): State<Arc<Registry>>) -> impl IntoResponse {
    Json(json!({ "datasets": registry.list() }))
}

async fn register(State(registry): State<Arc<Registry>>, body: Bytes) -> ApiResult<Response> {
    blocking(move || {
        let text =
            std::str::from_utf8(&body).map_err(|_| Failure::bad_request("bad-request", "manifest is not UTF-8"))?;
        let manifest = DatasetManifest::parse(text).map_err(StoreError::from)?;
        let (summary, created) = registry.register(manifest)?;
        let status = if created { StatusCode::CREATED } else { StatusCode::OK };
        Ok((status, Json(summary)).into_response())
    })
    .await
}

async fn build(State(registry): State<Arc<Registry>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let request: BuildRequest = parse_json(&body)?;
    let outcome = registry.start_build(&id, request)?;
    let status = match outcome {
        BuildOutcome::Started | BuildOutcome::AlreadyBuilding => StatusCode::ACCEPTED,
        BuildOutcome::AlreadyReady => StatusCode::OK,
    };
    Ok((status, Json(registry.status(&id)?)).into_response())
}

async fn status(State(registry): State<Arc<Registry>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(registry.status(&id)?).into_response())
}

#[derive(Deserialize)]
struct BundleQuery {
    datasets: String,
}

async fn experts(State(registry): State<Arc<Registry>>, Query(q): Query<BundleQuery>) -> ApiResult<Response> {
    Ok(Json(registry.bundle(&parse_dataset_ref(&q.datasets))?).into_response())
}

async fn expert_blob(
    State(registry): State<Arc<Registry>>,
    Path((id, index)): Path<(String, usize)>,
) -> ApiResult<Response> {
    let blob = registry.expert_blob(&id, index)?;
    Ok((
        [(header::CONTENT_TYPE, "application/octet-stream")],
        blob.as_ref().clone(),
    )
        .into_response())
}

#[derive(Deserialize)]
struct RecommendQuery {
    format: Option<String>,
}

async fn recommendations(
    State(registry): State<Arc<Registry>>,
    Query(q): Query<RecommendQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let request: RecommendationRequest = parse_json(&body)?;
    registry.log_request(&json!({
        "ts": unix_millis(),
        "event": "recommendation",
        "request": request,
    }));
    let text = match q.format.as_deref() {
        None | Some("json") => false,
        Some("text") => true,
        Some(other) => return Err(Failure::bad_request("bad-request", format!("unknown format `{other}`"))),
    };
    let rec = blocking(move || Ok(registry.recommend(&request)?)).await?;
    if text {
        Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], rec.url_list()).into_response())
    } else {
        Ok(Json(rec).into_response())
    }
}

fn unix_millis() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Records method, path, query, body length and status of every request.
/// Bodies are never logged here.
async fn access_log(State(registry): State<Arc<Registry>>, request: Request, next: Next) -> Response {
    let method = request.method().to_string();
    let path = request.uri().path().to_owned();
    let query = request.uri().query().map(str::to_owned);
    let body_bytes = request
        .headers()
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok());
    let response = next.run(request).await;
    registry.log_request(&json!({
        "ts": unix_millis(),
        "event": "access",
        "method": method,
        "path": path,
        "query": query,
        "body_bytes": body_bytes,
        "status": response.status().as_u16(),
    }));
    response
}

async fn not_found() -> Failure {
    Failure {
        status: StatusCode::NOT_FOUND,
        body: ApiError::new("not-found", "no such route"),
    }
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/v1/datasets", get(list_datasets).post(register))
        .route("/v1/datasets/{id}/build", post(build))
        .route("/v1/datasets/{id}/status", get(status))
        .route("/v1/datasets/{id}/experts/{index}", get(expert_blob))
        .route("/v1/experts", get(experts))
        .route("/v1/recommendations", post(recommendations))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(registry.clone(), access_log))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(registry)
}
