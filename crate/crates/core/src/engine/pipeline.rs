//! One round: pooling, fitting, quantization, massing, zoning, evaluation
//! and badges, as a pure function of the context and the decisions.

use serde::{Deserialize, Serialize};

use super::context::GameContext;
use super::EngineError;
use crate::badges::{issue_badges, RoundBadges};
use crate::evaluation::{
    change_cost, expected_colour_distances, integrate_field, transport_efficacy, EvaluationError, ScoreVector,
    TransportEfficacy,
};
use crate::ipf::{enforce_row_caps, ipf_fit, quantize_volumes, VolumeMatrix};
use crate::pooling::{pool_opinions, InterestTensor};
use crate::tensor::Matrix;
use crate::voxel::{aggregate_value, mass_select, mean_weights, zone_assign, MassConfiguration, VoxelGrid};

pub const TRANSPORT_SCORE: &str = "transportEfficacy";
pub const CHANGE_SCORE: &str = "changeScore";

/// Fit diagnostics kept in the record; the full error history is dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitSummary {
    pub iterations: usize,
    pub error: f64,
    pub converged: bool,
    /// Voxels moved between sites to respect buildable capacity.
    pub capacity_moves: usize,
}

/// Massing and zoning over the buildable voxels, stored sparsely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VoxelAssignment {
    /// Buildable ranks of the selected voxels, ascending.
    pub selected: Vec<u32>,
    /// Colour of each selected voxel, parallel to `selected`.
    pub colours: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundOutputs {
    pub allocation: Matrix,
    pub fit: FitSummary,
    pub volumes: VolumeMatrix,
    pub voxels: VoxelAssignment,
    /// Criteria weights after averaging and renormalization.
    pub weights: Vec<f64>,
    /// Raw field sums over the selection.
    pub field_totals: Vec<f64>,
    pub colour_distances: Matrix,
    pub absent_colours: Vec<bool>,
    pub transport: TransportEfficacy,
    pub scores: ScoreVector,
    /// Per-actor gain `1 − ‖X_i − A‖ / √(2o)` in `[0, 1]`.
    pub gains: Vec<f64>,
    pub badges: RoundBadges,
}

/// Selected voxels and their colours for given volumes and criteria weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Massing {
    pub mass: MassConfiguration,
    pub voxels: VoxelAssignment,
}

/// Picks and zones voxels for `volumes` using already averaged `weights`.
pub fn massing(ctx: &GameContext, volumes: &VolumeMatrix, weights: &[f64]) -> Result<Massing, EngineError> {
    let value = aggregate_value(&ctx.fields, weights)?;
    let mass = mass_select(&ctx.grid, &value, volumes)?;
    let zoning = zone_assign(&ctx.grid, &mass, volumes)?;
    let voxels = assignment(&mass, zoning.colours());
    Ok(Massing { mass, voxels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evaluation {
    pub field_totals: Vec<f64>,
    pub colour_distances: Matrix,
    pub absent_colours: Vec<bool>,
    pub transport: TransportEfficacy,
    pub scores: ScoreVector,
}

/// Scores a massing: per-voxel criterion means, transport efficacy and the
/// change score.
pub fn evaluate(ctx: &GameContext, volumes: &VolumeMatrix, mass: &MassConfiguration) -> Result<Evaluation, EngineError> {
    let integral = integrate_field(&ctx.fields, mass)?;
    let distances = expected_colour_distances(volumes, &ctx.distances)?;
    let transport = match transport_efficacy(&ctx.closeness, &distances.expected) {
        Ok(t) => t,
        Err(EvaluationError::DegenerateDistances) => TransportEfficacy::degenerate(),
        Err(e) => return Err(e.into()),
    };
    let change = change_cost(volumes, &ctx.existing, &ctx.change_costs, &ctx.capacities)?;

    let mut names: Vec<String> = ctx.fields.names().to_vec();
    let mut values = integral.per_voxel.clone();
    names.extend([TRANSPORT_SCORE.to_string(), CHANGE_SCORE.to_string()]);
    values.extend([transport.efficacy, change]);
    Ok(Evaluation {
        field_totals: integral.totals,
        colour_distances: distances.expected,
        absent_colours: distances.absent,
        transport,
        scores: ScoreVector { names, values },
    })
}

/// `x` holds normalized interests; `w` is criteria × actors.
pub fn run_pipeline(ctx: &GameContext, x: &InterestTensor, w: &Matrix) -> Result<RoundOutputs, EngineError> {
    let a = pool_opinions(x, &ctx.control)?;
    let fit = ipf_fit(a.matrix(), &ctx.targets, ctx.ipf)?;
    let (fitted, report) = (fit.matrix, fit.report);
    if !report.converged {
        tracing::warn!(iterations = report.iterations, error = report.error, "proportional fit did not converge");
    }
    let (_, _, o) = x.dims();
    let mut volumes = quantize_volumes(&fitted);
    let capacity_moves = enforce_row_caps(&mut volumes, &fitted, &ctx.capacities)?;

    let weights = mean_weights(w)?;
    let Massing { mass, voxels } = massing(ctx, &volumes, &weights)?;
    let eval = evaluate(ctx, &volumes, &mass)?;

    let badges = issue_badges(x, &ctx.control, &a)?;
    let max_distance = (2.0 * o as f64).sqrt();
    let gains = badges.gain_distances.iter().map(|d| (1.0 - d / max_distance).clamp(0.0, 1.0)).collect();

    Ok(RoundOutputs {
        allocation: a.into_matrix(),
        fit: FitSummary {
            iterations: report.iterations,
            error: report.error,
            converged: report.converged,
            capacity_moves,
        },
        volumes,
        voxels,
        weights,
        field_totals: eval.field_totals,
        colour_distances: eval.colour_distances,
        absent_colours: eval.absent_colours,
        transport: eval.transport,
        scores: eval.scores,
        gains,
        badges,
    })
}

fn assignment(mass: &MassConfiguration, colours: &[Option<usize>]) -> VoxelAssignment {
    let selected: Vec<u32> = mass.selected_ranks().map(|l| l as u32).collect();
    let colours = selected.iter().map(|&l| colours[l as usize].expect("selected voxels are zoned") as u16).collect();
    VoxelAssignment { selected, colours }
}

impl VoxelAssignment {
    /// Rebuilds the selection mask over the grid's buildable voxels.
    pub fn to_mass(&self, grid: &VoxelGrid) -> Result<MassConfiguration, EngineError> {
        let mut selected = vec![false; grid.buildable_count()];
        for &l in &self.selected {
            *selected
                .get_mut(l as usize)
                .ok_or_else(|| EngineError::InvalidDecision(format!("voxel rank {l} outside the grid")))? = true;
        }
        Ok(MassConfiguration::new(selected, grid)?)
    }
}
