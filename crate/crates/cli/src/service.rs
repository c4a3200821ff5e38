//! HTTP game service: a person plays instances from the served pool under
//! action-set support, one session per game.
//!
//! Routes: `POST /sessions`, `GET /sessions/{id}`, `POST /sessions/{id}/actions`,
//! `GET /instances`, `GET /healthz`. On creation a small session record is
//! written to the data directory; when a game ends its full episode log is
//! written there atomically as `{id}.jsonl`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fireline_core::grid::{GameInstance, TileStatus};
use fireline_core::harness::{Episode, EpisodeLog, EpisodeSeeds, PlayMode};
use fireline_core::support::{EpsilonGrid, SupportConfig};
use fireline_core::{Heuristic, Tile};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

/// Label recorded as the decision maker of served games.
pub const WEB_HUMAN: &str = "web";
pub const DATA_DIR_ENV: &str = "FIRELINE_DATA_DIR";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub pool: Vec<GameInstance>,
    pub data_dir: PathBuf,
    pub epsilon_grid: EpsilonGrid,
    pub sigma: f64,
    pub agent: Heuristic,
}

/// The data directory: `FIRELINE_DATA_DIR` when set and non-empty, else the flag.
pub fn resolve_data_dir(flag: &Path, env: Option<&str>) -> PathBuf {
    match env {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => flag.to_path_buf(),
    }
}

struct Session {
    id: String,
    episode: Episode,
    config: SupportConfig,
    log: Option<EpisodeLog>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        Ok(AppState {
            config: Arc::new(config),
            sessions: Arc::default(),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/instances", get(list_instances))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(submit_action))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::unprocessable(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub instance_id: Option<String>,
    pub master_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct SubmitAction {
    pub tile: Tile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub width: usize,
    pub height: usize,
    pub step: u32,
    pub score: usize,
    /// Tree count per tile (1 to 9), row-major.
    pub trees: Vec<u8>,
    pub statuses: Vec<TileStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub score: usize,
    pub discounted_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub instance_id: String,
    pub epsilon: f64,
    pub sigma: f64,
    pub status: SessionStatus,
    pub state: StateView,
    pub candidates: Vec<Tile>,
    pub action_set: Vec<Tile>,
    #[serde(rename = "final")]
    pub final_summary: Option<FinalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub reward: i32,
    pub newly_burning: Vec<Tile>,
    #[serde(flatten)]
    pub view: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: String,
    pub difficulty_band: u8,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    session_id: &'a str,
    instance_id: &'a str,
    epsilon: f64,
    sigma: f64,
    agent: Heuristic,
    master_seed: u64,
    seeds: EpisodeSeeds,
    created_at: u64,
}

fn view(session: &Session) -> SessionView {
    let s = session.episode.state();
    SessionView {
        session_id: session.id.clone(),
        instance_id: session.episode.instance_id().to_string(),
        epsilon: session.config.epsilon,
        sigma: session.config.sigma,
        status: if session.log.is_some() {
            SessionStatus::Finished
        } else {
            SessionStatus::Active
        },
        state: StateView {
            width: s.width(),
            height: s.height(),
            step: s.step_count(),
            score: session.episode.score(),
            trees: s.densities().iter().map(|d| d.level()).collect(),
            statuses: s.statuses().to_vec(),
        },
        candidates: session.episode.candidates().to_vec(),
        action_set: session.episode.action_set().to_vec(),
        final_summary: session.log.as_ref().map(|l| FinalSummary {
            score: l.final_score,
            discounted_return: l.discounted_return,
        }),
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_instances(State(app): State<AppState>) -> Json<Vec<InstanceEntry>> {
    Json(
        app.config
            .pool
            .iter()
            .map(|i| InstanceEntry {
                id: i.id.clone(),
                difficulty_band: i.difficulty_band,
                width: i.initial_state.width(),
                height: i.initial_state.height(),
            })
            .collect(),
    )
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let cfg = &app.config;
    let (epsilon, instance, master_seed) = {
        let mut rng = rand::rng();
        let epsilon = match req.epsilon {
            Some(e) => e,
            None => *cfg
                .epsilon_grid
                .values()
                .choose(&mut rng)
                .expect("grid is never empty"),
        };
        let instance = match &req.instance_id {
            Some(id) => cfg
                .pool
                .iter()
                .find(|i| &i.id == id)
                .ok_or_else(|| ApiError::not_found(format!("unknown instance {id}")))?,
            None => cfg.pool.choose(&mut rng).expect("pool is never empty"),
        };
        (
            epsilon,
            instance,
            req.master_seed.unwrap_or_else(|| rng.random()),
        )
    };
    let config = SupportConfig::new(epsilon, req.sigma.unwrap_or(cfg.sigma))
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let seeds = EpisodeSeeds::from_master(master_seed);
    let episode = Episode::start(
        instance,
        PlayMode::Assisted(config),
        Some(cfg.agent),
        WEB_HUMAN,
        seeds,
    )
    .map_err(|e| ApiError::internal(e.to_string()))?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let record = SessionRecord {
        session_id: &id,
        instance_id: &instance.id,
        epsilon: config.epsilon,
        sigma: config.sigma,
        agent: cfg.agent,
        master_seed,
        seeds,
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let bytes = serde_json::to_vec(&record).map_err(|e| ApiError::internal(e.to_string()))?;
    write_atomic(cfg.data_dir.join(format!("{id}.session.json")), bytes).await?;

    let mut session = Session {
        id: id.clone(),
        episode,
        config,
        log: None,
    };
    finish_if_done(&app, &mut session).await?;
    let v = view(&session);
    app.sessions
        .write()
        .expect("session map lock poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, instance = %instance.id, epsilon, "session created");
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_session(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let session = app.session(&id)?;
    let guard = session.lock().await;
    Ok(Json(view(&guard)))
}

async fn submit_action(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitAction>, JsonRejection>,
) -> Result<Json<ActionResponse>, ApiError> {
    let session = app.session(&id)?;
    let Json(req) = body?;
    let mut guard = session.try_lock().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "another action for this session is in flight",
        )
    })?;
    if guard.log.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is finished"));
    }
    if !guard.episode.action_set().contains(&req.tile) {
        return Err(ApiError::unprocessable(format!(
            "tile {:?} is not in the action set",
            req.tile
        )));
    }
    let outcome = guard
        .episode
        .act(req.tile)
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    finish_if_done(&app, &mut guard).await?;
    Ok(Json(ActionResponse {
        reward: outcome.reward,
        newly_burning: outcome.newly_burning,
        view: view(&guard),
    }))
}

async fn finish_if_done(app: &AppState, session: &mut Session) -> Result<(), ApiError> {
    if !session.episode.is_finished() || session.log.is_some() {
        return Ok(());
    }
    let log = session
        .episode
        .clone()
        .into_log()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    write_atomic(
        app.config.data_dir.join(format!("{}.jsonl", session.id)),
        log.to_jsonl().into_bytes(),
    )
    .await?;
    tracing::info!(session = %session.id, score = log.final_score, "session finished");
    session.log = Some(log);
    Ok(())
}

async fn write_atomic(path: PathBuf, bytes: Vec<u8>) -> Result<(), ApiError> {
    tokio::task::spawn_blocking(move || {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::internal(format!("persisting session: {e}")))
}
