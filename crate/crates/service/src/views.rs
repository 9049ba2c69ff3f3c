//! Player-safe response bodies: no loser badge and no other actor's gains.
//! The master reads raw round records instead.

use equicity::badges::{power_surplus, PublicBadges};
use equicity::engine::{Decision, FitSummary, Game, Phase, RoundRecord, VoxelAssignment};
use equicity::evaluation::{ScoreVector, TransportEfficacy};
use equicity::ipf::VolumeMatrix;
use equicity::pooling::InterestTensor;
use equicity::tensor::Matrix;
use serde::Serialize;

use crate::error::ApiError;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ActorInfo {
    pub id: String,
    pub name: String,
    pub role: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundSummary {
    pub round: usize,
    pub duration_secs: f64,
    pub scores: ScoreVector,
    pub badges: PublicBadges,
    pub allocation: Matrix,
    pub volumes: VolumeMatrix,
    /// Where the voxel assignment of this round can be fetched.
    pub voxels: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub game_id: String,
    pub name: String,
    pub phase: Phase,
    pub round: usize,
    pub pending: usize,
    pub submitted: Vec<bool>,
    pub actors: Vec<ActorInfo>,
    pub sites: Vec<String>,
    pub colours: Vec<String>,
    pub criteria: Vec<String>,
    pub history: Vec<RoundSummary>,
}

pub fn snapshot(id: &str, game: &Game) -> Snapshot {
    let state = game.state();
    let config = game.config();
    Snapshot {
        game_id: id.to_string(),
        name: config.name.clone(),
        phase: state.phase,
        round: state.round,
        pending: state.pending_count(),
        submitted: state.pending.iter().map(Option::is_some).collect(),
        actors: config
            .actors
            .iter()
            .map(|a| ActorInfo {
                id: a.id.clone(),
                name: a.name.clone(),
                role: a.role.clone(),
            })
            .collect(),
        sites: config.sites.iter().map(|s| s.name.clone()).collect(),
        colours: config.colours.iter().map(|c| c.name.clone()).collect(),
        criteria: config.criteria.iter().map(|c| c.name.clone()).collect(),
        history: state
            .history
            .iter()
            .map(|r| RoundSummary {
                round: r.round,
                duration_secs: r.duration_secs,
                scores: r.outputs.scores.clone(),
                badges: r.outputs.badges.public(),
                allocation: r.outputs.allocation.clone(),
                volumes: r.outputs.volumes.clone(),
                voxels: format!("/games/{id}/rounds/{}", r.round),
            })
            .collect(),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PublicRound {
    pub round: usize,
    pub duration_secs: f64,
    pub allocation: Matrix,
    pub fit: FitSummary,
    pub volumes: VolumeMatrix,
    pub voxels: VoxelAssignment,
    pub weights: Vec<f64>,
    pub field_totals: Vec<f64>,
    pub colour_distances: Matrix,
    pub absent_colours: Vec<bool>,
    pub transport: TransportEfficacy,
    pub scores: ScoreVector,
    pub badges: PublicBadges,
}

pub fn public_round(r: &RoundRecord) -> PublicRound {
    let o = &r.outputs;
    PublicRound {
        round: r.round,
        duration_secs: r.duration_secs,
        allocation: o.allocation.clone(),
        fit: o.fit.clone(),
        volumes: o.volumes.clone(),
        voxels: o.voxels.clone(),
        weights: o.weights.clone(),
        field_totals: o.field_totals.clone(),
        colour_distances: o.colour_distances.clone(),
        absent_colours: o.absent_colours.clone(),
        transport: o.transport,
        scores: o.scores.clone(),
        badges: o.badges.public(),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SurplusSlice {
    pub surplus: Matrix,
    pub positive: Matrix,
    pub negative: Matrix,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeView {
    pub actor_id: String,
    pub actor_index: usize,
    pub phase: Phase,
    pub round: usize,
    /// Initial agenda, sites × colours.
    pub agenda: Matrix,
    pub control: Matrix,
    /// Against the actor's latest submitted interests (the agenda before the
    /// first round).
    pub power_surplus: SurplusSlice,
    /// Own gain per completed round.
    pub gains: Vec<f64>,
    pub default_weights: Vec<f64>,
    pub pending_decision: Option<Decision>,
}

pub fn me(game: &Game, actor: usize) -> Result<MeView, ApiError> {
    let ctx = game.context();
    let state = game.state();
    let surplus = match state.history.last() {
        Some(r) => {
            let x = InterestTensor::normalized(&r.interests).map_err(|e| ApiError::internal(e.to_string()))?;
            power_surplus(&ctx.control, &x)
        }
        None => power_surplus(&ctx.control, &ctx.agenda),
    }
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(MeView {
        actor_id: game.config().actors[actor].id.clone(),
        actor_index: actor,
        phase: state.phase,
        round: state.round,
        agenda: ctx.agenda.actor(actor),
        control: ctx.control.actor(actor),
        power_surplus: SurplusSlice {
            surplus: surplus.surplus.slice0(actor),
            positive: surplus.positive.slice0(actor),
            negative: surplus.negative.slice0(actor),
        },
        gains: state.history.iter().map(|r| r.outputs.gains[actor]).collect(),
        default_weights: ctx.default_weights.column(actor),
        pending_decision: state.pending[actor].clone(),
    })
}
