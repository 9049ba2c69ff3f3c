//! HTTP front door for running games: token-scoped JSON endpoints plus a
//! server-sent event stream per game.

mod error;
mod events;
mod games;
mod schema;
mod views;

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use equicity::analytics::{analyze, DecisionPanel, ScorePanel};
use equicity::engine::{Clock, EngineError, GameConfig, Phase, SystemClock};
use equicity::tensor::Matrix;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

pub use error::ApiError;
pub use events::{Event, EventKind};
pub use games::{Role, Tokens};

use games::{GameHandle, Registry, Slot};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Saved games are reopened from here and every change is written back.
    pub state_dir: Option<PathBuf>,
    /// When set, creating a game needs this bearer token.
    pub admin_token: Option<String>,
    /// Per-subscriber event buffer; slower consumers get a resync hint.
    pub event_buffer: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            state_dir: None,
            admin_token: None,
            event_buffer: 256,
        }
    }
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    registry: Registry,
    admin_token: Option<String>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, String> {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    pub fn with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, String> {
        let registry = Registry::new(config.state_dir, clock, config.event_buffer);
        let loaded = registry.load_saved()?;
        if loaded > 0 {
            tracing::info!(loaded, "reopened saved games");
        }
        Ok(AppState(Arc::new(Inner {
            registry,
            admin_token: config.admin_token,
        })))
    }

    fn game(&self, id: &str) -> Result<Arc<GameHandle>, ApiError> {
        self.0.registry.get(id).ok_or_else(|| ApiError::not_found(format!("no game {id}")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/games", post(create_game))
        .route("/games/{id}/state", get(get_state))
        .route("/games/{id}/me", get(get_me))
        .route("/games/{id}/decisions", post(post_decision))
        .route("/games/{id}/advance", post(post_advance))
        .route("/games/{id}/rounds/{t}", get(get_round))
        .route("/games/{id}/analytics", get(get_analytics))
        .route("/games/{id}/events", get(get_events))
        .route("/schema", get(schema::index))
        .route("/schema/{name}", get(schema::get))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AuthQuery {
    token: Option<String>,
    last_event_id: Option<u64>,
}

/// Bearer header first, then `?token=` for clients that cannot set headers
/// (browser event sources).
fn token<'a>(headers: &'a HeaderMap, query: &'a AuthQuery) -> Option<&'a str> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .or(query.token.as_deref())
}

fn authorize(handle: &GameHandle, headers: &HeaderMap, query: &AuthQuery) -> Result<Role, ApiError> {
    token(headers, query).and_then(|t| handle.tokens.role(t)).ok_or_else(ApiError::unauthorized)
}

fn require_master(role: Role, what: &str) -> Result<(), ApiError> {
    match role {
        Role::Master => Ok(()),
        Role::Actor(_) => Err(ApiError::forbidden(what)),
    }
}

/// Runs `f` with the game locked on the blocking pool, since a round can
/// take a while to compute.
async fn with_slot<T: Send + 'static>(
    handle: Arc<GameHandle>,
    f: impl FnOnce(&GameHandle, &mut Slot) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut slot = handle.lock();
        f(&handle, &mut slot)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8], code: &'static str) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string()))
}

/// Credentials for a new game, returned once at creation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CreatedGame {
    pub game_id: String,
    pub master_token: String,
    pub actor_tokens: Vec<ActorToken>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActorToken {
    pub actor_id: String,
    pub token: String,
}

impl AppState {
    /// Creates a game outside of any request, e.g. when a server boots with
    /// a config.
    pub async fn create_game(&self, config: GameConfig) -> Result<CreatedGame, ApiError> {
        let ids: Vec<String> = config.actors.iter().map(|a| a.id.clone()).collect();
        let app = self.clone();
        let handle = tokio::task::spawn_blocking(move || app.0.registry.create(config))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        tracing::info!(game = %handle.id, "game created");
        Ok(CreatedGame {
            game_id: handle.id.clone(),
            master_token: handle.tokens.master.clone(),
            actor_tokens: ids
                .into_iter()
                .zip(&handle.tokens.actors)
                .map(|(actor_id, token)| ActorToken {
                    actor_id,
                    token: token.clone(),
                })
                .collect(),
        })
    }
}

async fn create_game(
    State(app): State<AppState>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    if let Some(admin) = &app.0.admin_token {
        match token(&headers, &query) {
            None => return Err(ApiError::unauthorized()),
            Some(t) if t != admin => return Err(ApiError::forbidden("create games")),
            Some(_) => {}
        }
    }
    let config: GameConfig = parse_body(&body, "ConfigInvalid")?;
    let created = app.create_game(config).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_state(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    authorize(&handle, &headers, &query)?;
    let snap = with_slot(handle, move |h, slot| Ok(views::snapshot(&h.id, &slot.game))).await?;
    Ok(Json(snap).into_response())
}

async fn get_me(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    let Role::Actor(actor) = authorize(&handle, &headers, &query)? else {
        return Err(ApiError::forbidden("read an actor view"));
    };
    let view = with_slot(handle, move |_, slot| views::me(&slot.game, actor)).await?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DecisionRequest {
    /// Sites × colours.
    interests: Vec<Vec<f64>>,
    /// Criteria weights; the actor's defaults when omitted.
    #[serde(default)]
    weights: Option<Vec<f64>>,
    #[serde(default)]
    comment: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct ErrorInfo {
    code: &'static str,
    message: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct DecisionResponse {
    pending: usize,
    replaced: bool,
    phase: Phase,
    round: usize,
    /// Set when this submission completed the round but the round failed;
    /// the submission itself was stored.
    round_error: Option<ErrorInfo>,
}

/// Runs the pending round and announces the outcome.
fn run_round(handle: &GameHandle, slot: &mut Slot) -> Result<(), EngineError> {
    let round = slot.game.round();
    match slot.game.advance() {
        Ok(record) => {
            let kind = EventKind::RoundComplete {
                round: record.round,
                scores: record.outputs.scores.clone(),
                badges: record.outputs.badges.public(),
            };
            handle.emit(slot, kind);
            Ok(())
        }
        Err(e) => {
            handle.emit(
                slot,
                EventKind::RoundFailed {
                    round,
                    code: e.code().to_string(),
                    message: e.to_string(),
                },
            );
            Err(e)
        }
    }
}

async fn post_decision(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    let Role::Actor(actor) = authorize(&handle, &headers, &query)? else {
        return Err(ApiError::forbidden("submit decisions"));
    };
    let req: DecisionRequest = parse_body(&body, "ZeroRowOrNegative")?;
    let resp = with_slot(handle, move |h, slot| {
        let interests = Matrix::from_rows(&req.interests)
            .map_err(|e| EngineError::InvalidDecision(format!("interests: {e}")))?;
        let weights = req.weights.unwrap_or_else(|| slot.game.context().default_weights.column(actor));
        let outcome = slot.game.submit(actor, &interests, &weights, &req.comment)?;
        let round = slot.game.round();
        h.emit(slot, EventKind::DecisionReceived { round, count: outcome.pending });
        let round_error = if outcome.phase == Phase::Processing {
            run_round(h, slot).err().map(|e| ErrorInfo {
                code: e.code(),
                message: e.to_string(),
            })
        } else {
            None
        };
        h.persist(slot)?;
        Ok(DecisionResponse {
            pending: outcome.pending,
            replaced: outcome.replaced,
            phase: slot.game.phase(),
            round: slot.game.round(),
            round_error,
        })
    })
    .await?;
    Ok(Json(resp).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AdvanceRequest {
    /// Close a collecting round, filling absent actors with their previous
    /// decision. Only honoured when the game allows forced advance.
    #[serde(default)]
    force: bool,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct AdvanceResponse {
    phase: Phase,
    round: usize,
    /// Actors filled in by a forced close.
    filled: Vec<usize>,
}

async fn post_advance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    require_master(authorize(&handle, &headers, &query)?, "advance the game")?;
    let req: AdvanceRequest = if body.iter().all(u8::is_ascii_whitespace) {
        AdvanceRequest::default()
    } else {
        parse_body(&body, "InvalidRequest")?
    };
    let resp = with_slot(handle, move |h, slot| {
        let mut filled = Vec::new();
        let result = match slot.game.phase() {
            Phase::Reporting => slot.game.acknowledge().map(|()| {
                let round = slot.game.round();
                h.emit(slot, EventKind::RoundStarted { round });
            }),
            Phase::Processing => run_round(h, slot),
            Phase::Collecting if req.force => match slot.game.force_close() {
                Ok(f) => {
                    filled = f;
                    run_round(h, slot)
                }
                Err(e) => Err(e),
            },
            Phase::Collecting => Err(EngineError::WrongPhase {
                expected: Phase::Processing,
                actual: Phase::Collecting,
            }),
        };
        h.persist(slot)?;
        result?;
        Ok(AdvanceResponse {
            phase: slot.game.phase(),
            round: slot.game.round(),
            filled,
        })
    })
    .await?;
    Ok(Json(resp).into_response())
}

async fn get_round(
    State(app): State<AppState>,
    Path((id, t)): Path<(String, usize)>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    let role = authorize(&handle, &headers, &query)?;
    let body = with_slot(handle, move |_, slot| {
        let record = slot
            .game
            .history()
            .get(t)
            .ok_or_else(|| ApiError::not_found(format!("no completed round {t}")))?;
        let value = match role {
            Role::Master => serde_json::to_value(record),
            Role::Actor(_) => serde_json::to_value(views::public_round(record)),
        };
        value.map_err(|e| ApiError::internal(e.to_string()))
    })
    .await?;
    Ok(Json(body).into_response())
}

async fn get_analytics(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    require_master(authorize(&handle, &headers, &query)?, "read analytics")?;
    let report = with_slot(handle, move |_, slot| {
        let history = slot.game.history();
        Ok(analyze(&DecisionPanel::from_records(history), Some(&ScorePanel::from_records(history))))
    })
    .await?;
    Ok(Json(report).into_response())
}

async fn get_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(query): Query<AuthQuery>,
) -> Result<Response, ApiError> {
    let handle = app.game(&id)?;
    authorize(&handle, &headers, &query)?;
    let last = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .or(query.last_event_id)
        .unwrap_or(0);
    // Subscribing under the lock splits events cleanly into backlog and live.
    let (backlog, rx) = with_slot(handle, move |h, slot| {
        let backlog: Vec<Event> = slot.log.iter().filter(|e| e.id > last).cloned().collect();
        Ok((backlog, h.events.subscribe()))
    })
    .await?;
    let seen = backlog.last().map_or(last, |e| e.id);
    let replay = futures::stream::iter(backlog.iter().map(Event::to_sse).collect::<Vec<_>>());
    let live = futures::stream::unfold(Some((rx, seen)), |st| async move {
        let (mut rx, seen) = st?;
        loop {
            match rx.recv().await {
                Ok(ev) if ev.id <= seen => continue,
                Ok(ev) => {
                    let id = ev.id;
                    return Some((ev.to_sse(), Some((rx, id))));
                }
                Err(RecvError::Lagged(_)) => return Some((events::resync(seen), None)),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let stream = replay.chain(live).map(Ok::<_, Infallible>);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()).into_response())
}
