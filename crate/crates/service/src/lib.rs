//! REST service that runs trained design policies as live sequential
//! experiments, with a self-normalised importance sampling posterior view.
//!
//! Endpoints:
//! - `POST /api/sessions`
//! - `POST /api/sessions/{id}/outcomes`
//! - `GET /api/sessions/{id}`
//! - `GET /api/sessions/{id}/posterior?n=`
//! - `GET /api/checkpoints`
//! - `GET /api/health`

pub mod catalog;
pub mod error;
pub mod journal;
pub mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, CheckpointEntry};
pub use error::{ApiError, ApiErrorBody};
pub use journal::{Journal, JournalRecord};
pub use session::{CreateRequest, Mode, Observation, PosteriorView, Session, SessionView};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("journal {path}: {source}")]
    Journal { path: String, source: std::io::Error },
    #[error("binding {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server: {0}")]
    Server(std::io::Error),
}

/// Shared state: the checkpoint catalog, the live sessions (each behind its
/// own lock so requests to one session are serialised) and the journal.
pub struct AppState {
    catalog: Catalog,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    journal: Option<Mutex<Journal>>,
}

impl AppState {
    pub fn new(catalog: Catalog, journal: Option<Journal>) -> Self {
        Self {
            catalog,
            sessions: Mutex::new(HashMap::new()),
            journal: journal.map(Mutex::new),
        }
    }

    /// Opens (or creates) the journal and rebuilds every session it records.
    /// Sessions whose checkpoint has gone missing are skipped.
    pub fn restore(catalog: Catalog, journal_path: &Path) -> Result<(Self, RestoreReport), ServiceError> {
        let journal_err = |source| ServiceError::Journal {
            path: journal_path.display().to_string(),
            source,
        };
        let (records, bad_lines) = Journal::read_all(journal_path).map_err(journal_err)?;
        let state = Self::new(catalog, None);
        let mut report = RestoreReport {
            bad_lines,
            ..Default::default()
        };
        for record in records {
            match record {
                JournalRecord::Create { session_id, request } => match state.build_session(session_id.clone(), &request) {
                    Ok(s) => {
                        state.insert(s);
                        report.restored += 1;
                    }
                    Err(e) => report.skipped.push(format!("{session_id}: {}", e.body.message)),
                },
                JournalRecord::Outcome { session_id, y } => {
                    if let Some(s) = state.get(&session_id) {
                        let mut s = s.lock().expect("session lock");
                        if let Err(e) = s.post_outcome(y) {
                            report.skipped.push(format!("{session_id}: {}", e.body.message));
                        }
                    }
                }
            }
        }
        let journal = Journal::open(journal_path).map_err(journal_err)?;
        Ok((
            Self {
                journal: Some(Mutex::new(journal)),
                ..state
            },
            report,
        ))
    }

    fn build_session(&self, id: String, request: &CreateRequest) -> Result<Session, ApiError> {
        let (actor, meta) = self.catalog.load(&request.checkpoint, request.model)?;
        Session::new(id, request, actor, &meta)
    }

    fn insert(&self, session: Session) {
        let id = session.id().to_string();
        self.sessions
            .lock()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(session)));
    }

    fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("session table lock").get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session table lock").len()
    }

    fn record(&self, record: &JournalRecord) -> Result<(), ApiError> {
        if let Some(j) = &self.journal {
            j.lock()
                .expect("journal lock")
                .append(record)
                .map_err(|e| ApiError::internal(format!("journal write failed: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RestoreReport {
    pub restored: usize,
    pub skipped: Vec<String>,
    pub bad_lines: Vec<usize>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/checkpoints", get(list_checkpoints))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/outcomes", post(post_outcome))
        .route("/api/sessions/{id}/posterior", get(get_posterior))
        .with_state(state)
}

/// Binds `addr` and serves until interrupted.
pub async fn serve(addr: SocketAddr, checkpoints: &Path, journal: &Path) -> Result<(), ServiceError> {
    let (state, report) = AppState::restore(Catalog::new(checkpoints), journal)?;
    eprintln!(
        "restored {} session(s) from {}{}",
        report.restored,
        journal.display(),
        if report.skipped.is_empty() && report.bad_lines.is_empty() {
            String::new()
        } else {
            format!(" ({} skipped, {} unreadable lines)", report.skipped.len(), report.bad_lines.len())
        }
    );
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    eprintln!("serving {} on http://{addr}", checkpoints.display());
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Server)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        sessions: state.session_count(),
    })
}

async fn list_checkpoints(State(state): State<Arc<AppState>>) -> Json<Vec<CheckpointEntry>> {
    Json(state.catalog.list())
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    if body.is_empty() {
        return serde_json::from_slice(b"{}").map_err(|e| ApiError::invalid_request(format!("request body: {e}")));
    }
    serde_json::from_slice(body).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            ApiError::bad_request(format!("malformed JSON: {e}"))
        } else {
            ApiError::invalid_request(format!("request body: {e}"))
        }
    })
}

fn checked_view(session: &Session) -> Result<SessionView, ApiError> {
    if cfg!(debug_assertions) && !session.summary_consistent() {
        return Err(ApiError::internal("incremental history summary diverged from a fresh encoding"));
    }
    Ok(session.view())
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let request: CreateRequest = parse_body(&body)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = state.build_session(id.clone(), &request)?;
    let view = checked_view(&session)?;
    state.record(&JournalRecord::Create {
        session_id: id,
        request,
    })?;
    state.insert(session);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let session = session.lock().expect("session lock");
    Ok(Json(checked_view(&session)?))
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeRequest {
    #[serde(default)]
    pub y: Option<f64>,
}

async fn post_outcome(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let request: OutcomeRequest = parse_body(&body)?;
    let mut session = session.lock().expect("session lock");
    session.post_outcome(request.y)?;
    state.record(&JournalRecord::Outcome {
        session_id: id,
        y: request.y,
    })?;
    Ok(Json(checked_view(&session)?))
}

async fn get_posterior(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<PosteriorView>, ApiError> {
    let n = match query.get("n") {
        Some(v) => Some(
            v.parse::<usize>()
                .map_err(|_| ApiError::invalid_request(format!("n must be a positive integer, got {v:?}")))?,
        ),
        None => None,
    };
    let session = state.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let session = session.lock().expect("session lock");
    Ok(Json(session.posterior(n)?))
}
