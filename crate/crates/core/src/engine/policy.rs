//! Scripted actor behaviour for headless games, and replay of stored rounds.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_round, Clock, EngineError, Game, GameConfig, GameContext, ManualClock, RoundRecord};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScriptedDecision {
    pub interests: Vec<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ActorPolicy {
    /// Plays the listed decisions in order, repeating the last one.
    Scripted { decisions: Vec<ScriptedDecision> },
    /// Always submits the initial agenda.
    Stubborn,
    /// Moves its previous submission toward the last consensus by `rate`.
    Drift { rate: f64 },
    /// Uniform random interests and weights.
    Random {
        #[serde(default)]
        seed: Option<u64>,
    },
}

/// Per-actor view of the game when choosing a move.
struct Turn<'a> {
    actor: usize,
    round: usize,
    ctx: &'a GameContext,
    previous: Option<&'a RoundRecord>,
}

impl ActorPolicy {
    fn decide(&self, turn: &Turn<'_>, rng: &mut ChaCha8Rng) -> Result<(Matrix, Vec<f64>, String), EngineError> {
        let agenda = turn.ctx.agenda.actor(turn.actor);
        let default_weights = turn.ctx.default_weights.column(turn.actor);
        Ok(match self {
            ActorPolicy::Stubborn => (agenda, default_weights, String::new()),
            ActorPolicy::Scripted { decisions } => {
                let d = decisions
                    .get(turn.round)
                    .or(decisions.last())
                    .ok_or_else(|| EngineError::ConfigInvalid(format!("actor {} has an empty script", turn.actor)))?;
                let interests = Matrix::from_rows(&d.interests)?;
                (interests, d.weights.clone().unwrap_or(default_weights), d.comment.clone())
            }
            ActorPolicy::Drift { rate } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(EngineError::ConfigInvalid(format!("drift rate {rate} outside [0, 1]")));
                }
                match turn.previous {
                    None => (agenda, default_weights, String::new()),
                    Some(r) => {
                        let own = r.interests.slice0(turn.actor);
                        let a = &r.outputs.allocation;
                        let step = Matrix::from_fn(own.rows(), own.cols(), |j, k| {
                            (1.0 - rate) * own[(j, k)] + rate * a[(j, k)]
                        });
                        (step, r.submitted_weights.column(turn.actor), String::new())
                    }
                }
            }
            ActorPolicy::Random { .. } => {
                let (n, o) = agenda.shape();
                let interests = Matrix::from_fn(n, o, |_, _| 1.0 - rng.random::<f64>());
                let weights = (0..default_weights.len()).map(|_| 1.0 - rng.random::<f64>()).collect();
                (interests, weights, String::new())
            }
        })
    }
}

/// Plays `rounds` full rounds headlessly. The clock is simulated: each
/// actor's submission lands a seeded random 30 to 600 seconds into the round.
pub fn simulate(
    config: &GameConfig,
    policies: &[ActorPolicy],
    rounds: usize,
    seed: u64,
) -> Result<Vec<RoundRecord>, EngineError> {
    let m = config.actors.len();
    if policies.len() != m {
        return Err(EngineError::ConfigInvalid(format!("{} policies for {m} actors", policies.len())));
    }
    let clock = Arc::new(ManualClock::new(0));
    let mut game = Game::create(config.clone(), clock.clone())?;
    let mut timing = ChaCha8Rng::seed_from_u64(seed);
    let mut rngs: Vec<ChaCha8Rng> = policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(match p {
                ActorPolicy::Random { seed: Some(s) } => *s,
                _ => seed,
            });
            rng.set_stream(i as u64 + 1);
            rng
        })
        .collect();

    for t in 0..rounds {
        let opened = clock.now_ms();
        let mut offsets: Vec<u64> = (0..m).map(|_| timing.random_range(30_000..=600_000)).collect();
        offsets.sort_unstable();
        for (i, policy) in policies.iter().enumerate() {
            let turn = Turn {
                actor: i,
                round: t,
                ctx: game.context(),
                previous: game.history().last(),
            };
            let (interests, weights, comment) = policy.decide(&turn, &mut rngs[i])?;
            clock.set(opened + offsets[i]);
            game.submit(i, &interests, &weights, &comment)?;
        }
        game.advance()?;
        clock.advance(60_000);
        game.acknowledge()?;
    }
    Ok(game.into_state().history)
}

/// Recomputes stored rounds from their recorded inputs.
pub fn replay(config: &GameConfig, records: &[RoundRecord]) -> Result<Vec<RoundRecord>, EngineError> {
    let ctx = GameContext::build(config)?;
    records
        .iter()
        .map(|r| {
            let outputs = compute_round(&ctx, &r.interests, &r.submitted_weights)?;
            Ok(RoundRecord {
                outputs,
                ..r.clone()
            })
        })
        .collect()
}
