//! Round orchestration: collect decisions, run the pipeline, keep the record.
//!
//! A round moves `Collecting → Processing → Reporting → Collecting`. The last
//! missing submission flips the game to `Processing`; [`Game::advance`] runs
//! the pipeline and either commits a [`RoundRecord`] or rolls back to
//! `Collecting` with every submission intact.

mod config;
mod context;
mod ingest;
mod persist;
mod pipeline;
mod policy;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    ActorConfig, ColourConfig, CriterionConfig, FieldSource, GameConfig, SiteConfig, CONFIG_VERSION,
};
pub use context::{normalize_columns, GameContext};
pub use ingest::{read_decisions_csv, write_decisions_csv, DecisionDataset};
pub use persist::{load_state, save_state, STATE_FORMAT, STATE_VERSION};
pub use pipeline::{
    evaluate, massing, run_pipeline, Evaluation, FitSummary, Massing, RoundOutputs, VoxelAssignment, CHANGE_SCORE,
    TRANSPORT_SCORE,
};
pub use policy::{replay, simulate, ActorPolicy, ScriptedDecision};

use crate::evaluation::EvaluationError;
use crate::ipf::IpfError;
use crate::pooling::{InterestTensor, PoolingError};
use crate::tensor::{Matrix, Tensor3, TensorError};
use crate::voxel::VoxelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("operation needs phase {expected}, game is in {actual}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("forced advance is disabled for this game")]
    ForceDisabled,
    #[error("corrupt state: {0}")]
    CorruptState(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("ingest: {0}")]
    Ingest(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Pooling(#[from] PoolingError),
    #[error(transparent)]
    Ipf(#[from] IpfError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
}

impl EngineError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::ConfigInvalid(_) => "ConfigInvalid",
            EngineError::UnknownActor(_) => "UnknownActor",
            EngineError::WrongPhase { .. } => "WrongPhase",
            EngineError::InvalidDecision(_) => "ZeroRowOrNegative",
            EngineError::ForceDisabled => "ForceDisabled",
            EngineError::CorruptState(_) => "CorruptState",
            EngineError::Io(_) => "Io",
            EngineError::Ingest(_) => "Ingest",
            EngineError::Tensor(_) => "Shape",
            EngineError::Pooling(PoolingError::NoConvergence { .. }) => "NoConvergence",
            EngineError::Pooling(_) => "Pooling",
            EngineError::Ipf(IpfError::CapacityShortfall { .. }) => "CapacityShortfall",
            EngineError::Ipf(_) => "Ipf",
            EngineError::Voxel(VoxelError::EmptySite(_)) => "EmptySite",
            EngineError::Voxel(_) => "Voxel",
            EngineError::Evaluation(_) => "Evaluation",
        }
    }

    /// True for errors caused by the request rather than the game.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            EngineError::ConfigInvalid(_)
                | EngineError::UnknownActor(_)
                | EngineError::InvalidDecision(_)
                | EngineError::Ingest(_)
                | EngineError::Tensor(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Collecting,
    Processing,
    Reporting,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Collecting => "COLLECTING",
            Phase::Processing => "PROCESSING",
            Phase::Reporting => "REPORTING",
        })
    }
}

/// Milliseconds since an arbitrary epoch.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Clock that only moves when told to; used by simulations and tests.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// One actor's submission for the current round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    /// Sites × colours, each colour column summing to one.
    pub interests: Matrix,
    pub weights: Vec<f64>,
    pub comment: String,
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundRecord {
    pub round: usize,
    /// Submitted interests, actors × sites × colours.
    pub interests: Tensor3,
    /// Submitted weights, criteria × actors.
    pub submitted_weights: Matrix,
    pub comments: Vec<String>,
    pub opened_at: u64,
    /// Time between the round opening and its last submission.
    pub duration_secs: f64,
    #[serde(flatten)]
    pub outputs: RoundOutputs,
}

impl RoundRecord {
    /// Hex SHA-256 of the serialized record.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("record serializes")))
    }
}

/// Everything that survives a restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameState {
    pub format: String,
    pub version: u32,
    pub config: GameConfig,
    pub round: usize,
    pub phase: Phase,
    /// One slot per actor for the open round.
    pub pending: Vec<Option<Decision>>,
    pub history: Vec<RoundRecord>,
    pub round_opened_at: u64,
}

impl GameState {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("state serializes")))
    }

    pub fn pending_count(&self) -> usize {
        self.pending.iter().filter(|d| d.is_some()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmitOutcome {
    pub pending: usize,
    pub replaced: bool,
    pub phase: Phase,
}

/// A running game: persistent state plus the context derived from its config.
#[derive(Debug, Clone)]
pub struct Game {
    state: GameState,
    ctx: Arc<GameContext>,
    clock: Arc<dyn Clock>,
}

impl Game {
    pub fn create(config: GameConfig, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let ctx = Arc::new(GameContext::build(&config)?);
        let m = config.actors.len();
        let state = GameState {
            format: STATE_FORMAT.into(),
            version: STATE_VERSION,
            config,
            round: 0,
            phase: Phase::Collecting,
            pending: vec![None; m],
            history: Vec::new(),
            round_opened_at: clock.now_ms(),
        };
        Ok(Game { state, ctx, clock })
    }

    /// Resumes a saved game, rebuilding the derived context.
    pub fn from_state(state: GameState, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let ctx = Arc::new(GameContext::build(&state.config)?);
        Ok(Game { state, ctx, clock })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn into_state(self) -> GameState {
        self.state
    }

    pub fn context(&self) -> &GameContext {
        &self.ctx
    }

    pub fn config(&self) -> &GameConfig {
        &self.state.config
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn round(&self) -> usize {
        self.state.round
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.state.history
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), EngineError> {
        if self.state.phase != expected {
            return Err(EngineError::WrongPhase {
                expected,
                actual: self.state.phase,
            });
        }
        Ok(())
    }

    /// Validates and normalizes a raw decision without storing it.
    pub fn prepare_decision(&self, interests: &Matrix, weights: &[f64]) -> Result<(Matrix, Vec<f64>), EngineError> {
        let (_, n, o, e) = self.state.config.dims();
        if interests.shape() != (n, o) {
            return Err(EngineError::InvalidDecision(format!(
                "interests must be {n}x{o}, got {}x{}",
                interests.rows(),
                interests.cols()
            )));
        }
        if let Some(v) = interests.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(EngineError::InvalidDecision(format!("interest {v} is negative or not finite")));
        }
        let normalized = normalize_columns(interests).map_err(|err| match err {
            TensorError::ZeroRow(k) => EngineError::InvalidDecision(format!("colour {k} has no positive interest")),
            other => EngineError::InvalidDecision(other.to_string()),
        })?;
        if weights.len() != e {
            return Err(EngineError::InvalidDecision(format!("expected {e} weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EngineError::InvalidDecision("weights must be finite and nonnegative".into()));
        }
        Ok((normalized, weights.to_vec()))
    }

    /// Stores an actor's decision; a resubmission replaces the earlier one.
    pub fn submit(
        &mut self,
        actor: usize,
        interests: &Matrix,
        weights: &[f64],
        comment: &str,
    ) -> Result<SubmitOutcome, EngineError> {
        self.expect_phase(Phase::Collecting)?;
        if actor >= self.state.pending.len() {
            return Err(EngineError::UnknownActor(actor.to_string()));
        }
        let (interests, weights) = self.prepare_decision(interests, weights)?;
        let replaced = self.state.pending[actor]
            .replace(Decision {
                interests,
                weights,
                comment: comment.to_string(),
                submitted_at: self.clock.now_ms(),
            })
            .is_some();
        if replaced {
            tracing::info!(actor, round = self.state.round, "decision resubmitted, keeping the latest");
        }
        if self.state.pending.iter().all(Option::is_some) {
            self.state.phase = Phase::Processing;
        }
        Ok(SubmitOutcome {
            pending: self.state.pending_count(),
            replaced,
            phase: self.state.phase,
        })
    }

    /// Closes a round with missing actors, who keep their previous decision
    /// (their agenda and default weights in the first round).
    pub fn force_close(&mut self) -> Result<Vec<usize>, EngineError> {
        self.expect_phase(Phase::Collecting)?;
        if !self.state.config.allow_forced_advance {
            return Err(EngineError::ForceDisabled);
        }
        let now = self.clock.now_ms();
        let mut filled = Vec::new();
        for i in 0..self.state.pending.len() {
            if self.state.pending[i].is_some() {
                continue;
            }
            let decision = match self.state.history.last() {
                Some(r) => Decision {
                    interests: r.interests.slice0(i),
                    weights: r.submitted_weights.column(i),
                    comment: String::new(),
                    submitted_at: now,
                },
                None => Decision {
                    interests: self.ctx.agenda.actor(i),
                    weights: self.ctx.default_weights.column(i),
                    comment: String::new(),
                    submitted_at: now,
                },
            };
            self.state.pending[i] = Some(decision);
            filled.push(i);
        }
        self.state.phase = Phase::Processing;
        Ok(filled)
    }

    /// Runs the round. On failure the game returns to `Collecting` with the
    /// submissions kept, and the error is returned.
    pub fn advance(&mut self) -> Result<&RoundRecord, EngineError> {
        self.expect_phase(Phase::Processing)?;
        let decisions: Vec<&Decision> = self.state.pending.iter().map(|d| d.as_ref().expect("all submitted")).collect();
        let interests = Tensor3::from_slices(&decisions.iter().map(|d| d.interests.clone()).collect::<Vec<_>>())?;
        let e = self.state.config.criteria.len();
        let weights = Matrix::from_fn(e, decisions.len(), |l, i| decisions[i].weights[l]);
        let last = decisions.iter().map(|d| d.submitted_at).max().unwrap_or(self.state.round_opened_at);
        let duration_secs = last.saturating_sub(self.state.round_opened_at) as f64 / 1000.0;
        let comments = decisions.iter().map(|d| d.comment.clone()).collect();

        let outputs = match compute_round(&self.ctx, &interests, &weights) {
            Ok(o) => o,
            Err(err) => {
                tracing::error!(round = self.state.round, %err, "round failed, back to collecting");
                self.state.phase = Phase::Collecting;
                return Err(err);
            }
        };
        self.state.history.push(RoundRecord {
            round: self.state.round,
            interests,
            submitted_weights: weights,
            comments,
            opened_at: self.state.round_opened_at,
            duration_secs,
            outputs,
        });
        self.state.pending = vec![None; self.state.pending.len()];
        self.state.round += 1;
        self.state.phase = Phase::Reporting;
        Ok(self.state.history.last().expect("just pushed"))
    }

    /// Ends the report and opens the next round.
    pub fn acknowledge(&mut self) -> Result<(), EngineError> {
        self.expect_phase(Phase::Reporting)?;
        self.state.phase = Phase::Collecting;
        self.state.round_opened_at = self.clock.now_ms();
        Ok(())
    }
}

/// Pipeline entry shared by live rounds and replays.
pub fn compute_round(ctx: &GameContext, interests: &Tensor3, weights: &Matrix) -> Result<RoundOutputs, EngineError> {
    let x = InterestTensor::normalized(interests)?;
    run_pipeline(ctx, &x, weights)
}
