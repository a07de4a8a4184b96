//! HTTP service for the reader study.
//!
//! Session state is immutable and shared; rating writes go through one
//! mutex-guarded log, so appends are serialized and acknowledged only after
//! they reach the disk.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use cxreval_core::study::{Presentation, Rating, RatingsLog, StudyError, StudySession};
use cxreval_core::Grade;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

pub struct AppState {
    session: StudySession,
    log: Mutex<RatingsLog>,
    images: PathBuf,
    ui: Option<PathBuf>,
}

impl AppState {
    pub fn new(
        session: StudySession,
        log: RatingsLog,
        images: PathBuf,
        ui: Option<PathBuf>,
    ) -> Arc<Self> {
        Arc::new(AppState {
            session,
            log: Mutex::new(log),
            images,
            ui,
        })
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let mut app = Router::new()
        .route("/", get(index))
        .route("/api/session", get(session_info))
        .route("/api/item", get(item))
        .route("/api/rating", post(rating))
        .route("/api/export", get(export))
        .route("/images/{token}", get(image));
    if let Some(ui) = &state.ui {
        app = app.nest_service("/assets", ServeDir::new(ui.join("assets")));
    }
    app.with_state(state)
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match &e {
            StudyError::UnknownRater(_) => StatusCode::NOT_FOUND,
            StudyError::PositionOutOfRange { .. } | StudyError::BadGrade(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Reader study</title></head>\n<body><p>The rater interface is not installed. Start the server with <code>--ui DIR</code>.</p></body></html>\n";

async fn index(State(s): State<Shared>) -> Response {
    if let Some(ui) = &s.ui {
        if let Ok(page) = tokio::fs::read_to_string(ui.join("index.html")).await {
            return Html(page).into_response();
        }
    }
    Html(PLACEHOLDER).into_response()
}

async fn session_info(State(s): State<Shared>) -> Response {
    let effective = s.log.lock().expect("log lock").effective();
    let progress: BTreeMap<&str, serde_json::Value> = s
        .session
        .raters
        .iter()
        .map(|r| {
            let order = &s.session.orders[r];
            let rated = |pos: &usize| effective.contains_key(&(r.clone(), order[*pos]));
            let count = (0..order.len()).filter(rated).count();
            let next = (0..order.len()).find(|p| !rated(p));
            (r.as_str(), json!({ "rated": count, "next_position": next }))
        })
        .collect();
    Json(json!({
        "session_id": s.session.session_id,
        "total_items": s.session.total_items(),
        "raters": s.session.raters,
        "progress": progress,
    }))
    .into_response()
}

#[derive(Deserialize)]
struct ItemQuery {
    rater: String,
    pos: usize,
}

async fn item(
    State(s): State<Shared>,
    Query(q): Query<ItemQuery>,
) -> Result<Json<Presentation>, ApiError> {
    Ok(Json(s.session.present_item(&q.rater, q.pos)?))
}

#[derive(Deserialize)]
struct RatingBody {
    rater: String,
    pos: usize,
    grade: String,
}

async fn rating(
    State(s): State<Shared>,
    Json(body): Json<RatingBody>,
) -> Result<Response, ApiError> {
    let grade: Grade = body.grade.parse()?;
    let item_index = s.session.item_at(&body.rater, body.pos)?;
    let rating = Rating {
        rater_id: body.rater.clone(),
        item_index,
        grade,
        submitted_at: Utc::now(),
    };
    let ack = s.log.lock().expect("log lock").append(&s.session, rating)?;
    Ok(Json(json!({ "seq": ack.seq, "rater": body.rater, "pos": body.pos })).into_response())
}

async fn export(State(s): State<Shared>) -> Response {
    let body = s.log.lock().expect("log lock").to_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        Some("dcm") => "application/dicom",
        _ => "application/octet-stream",
    }
}

fn is_confined(rel: &Path) -> bool {
    rel.components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

async fn image(
    State(s): State<Shared>,
    UrlPath(token): UrlPath<String>,
) -> Result<Response, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, "no such image".into());
    let rel = Path::new(s.session.image_for_token(&token).ok_or_else(not_found)?);
    if !is_confined(rel) {
        return Err(not_found());
    }
    let path = s.images.join(rel);
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}
