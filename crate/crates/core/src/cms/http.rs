//! JSON API over a [`CmsStore`], plus the static annotation UI at `/`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{AnnotationItem, CmsError, CmsStore};

impl IntoResponse for CmsError {
    fn into_response(self) -> Response {
        let status = match &self {
            CmsError::DuplicateItemId(_)
            | CmsError::EmptyItems
            | CmsError::EmptyItemId
            | CmsError::EmptyAnnotator
            | CmsError::Range(_) => StatusCode::BAD_REQUEST,
            CmsError::UnknownSession(_) | CmsError::UnknownItem(_) => StatusCode::NOT_FOUND,
            CmsError::CorruptLog { .. } | CmsError::Io { .. } => {
                ::log::error!("{self}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Store = State<Arc<CmsStore>>;

#[derive(Deserialize)]
struct CreateSession {
    #[serde(default)]
    name: String,
    items: Vec<AnnotationItem>,
}

#[derive(Deserialize)]
struct SubmitScore {
    annotator: String,
    item_id: String,
    value: f64,
}

#[derive(Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

async fn create_session(State(store): Store, Json(req): Json<CreateSession>) -> Result<impl IntoResponse, CmsError> {
    let id = store.create_session(&req.name, req.items)?;
    ::log::info!("created session {id}");
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn get_session(State(store): Store, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, CmsError> {
    Ok(Json(store.summary(&id)?))
}

async fn next_item(
    State(store): Store,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<impl IntoResponse, CmsError> {
    let next = store.next_item(&id, &q.annotator)?;
    let body = match next.item {
        Some(item) => json!({
            "done": false,
            "item_id": item.item_id,
            "source": item.source,
            "reference": item.reference,
            "hypothesis": item.hypothesis,
            "scored": next.scored,
            "total": next.total,
        }),
        None => json!({ "done": true, "scored": next.scored, "total": next.total }),
    };
    Ok(Json(body))
}

async fn submit_score(
    State(store): Store,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SubmitScore>,
) -> Result<StatusCode, CmsError> {
    store.submit_score(&id, &req.annotator, &req.item_id, req.value)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn aggregate(State(store): Store, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, CmsError> {
    Ok(Json(store.aggregate(&id)?))
}

async fn export(State(store): Store, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, CmsError> {
    let csv = store.export_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

/// API routes under `/api`, with `ui_dir` (if any) served at `/`.
pub fn router(store: Arc<CmsStore>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/next", get(next_item))
        .route("/api/sessions/:id/scores", post(submit_score))
        .route("/api/sessions/:id/aggregate", get(aggregate))
        .route("/api/sessions/:id/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { "CMS service: no UI bundle configured\n" })),
    }
}

/// Serves until `shutdown` resolves. Every acknowledged write is already on
/// disk, so nothing needs flushing afterwards.
pub async fn serve(
    store: Arc<CmsStore>,
    addr: SocketAddr,
    ui_dir: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    ::log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
