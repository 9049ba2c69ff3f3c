//! Everything derived once from a config: the grid, fields, control network,
//! marginal targets and evaluation inputs. Rebuilt on load, never persisted.

use super::config::{FieldSource, GameConfig};
use super::EngineError;
use crate::evaluation::{site_distances, ClosenessRatings, DistanceMatrix};
use crate::ipf::{reconcile, IpfError, IpfParams, MarginalTargets, VolumeMatrix};
use crate::pooling::{ControlTensor, InterestTensor};
use crate::tensor::{normalize_rows, Matrix, Tensor3, TensorError};
use crate::voxel::{
    build_grid, entry_proximity_field, low_rise_field, synth_solar_field, FieldFile, SensitivityFields, VoxelGrid,
};

#[derive(Debug, Clone)]
pub struct GameContext {
    pub grid: VoxelGrid,
    pub fields: SensitivityFields,
    pub control: ControlTensor,
    pub agenda: InterestTensor,
    /// Default weights per actor, criteria × actors.
    pub default_weights: Matrix,
    pub targets: MarginalTargets,
    pub ipf: IpfParams,
    /// Buildable voxels per site; the hard row cap after rounding.
    pub capacities: Vec<u64>,
    pub existing: VolumeMatrix,
    pub change_costs: Matrix,
    pub closeness: ClosenessRatings,
    pub distances: DistanceMatrix,
}

/// Makes every column of a sites × colours slice sum to one.
pub fn normalize_columns(slice: &Matrix) -> Result<Matrix, TensorError> {
    Ok(normalize_rows(&slice.transpose())?.into_inner().transpose())
}

fn matrix(rows: &[Vec<f64>]) -> Result<Matrix, EngineError> {
    Matrix::from_rows(rows).map_err(|e| EngineError::ConfigInvalid(e.to_string()))
}

impl GameContext {
    pub fn build(config: &GameConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let (m, n, o, e) = config.dims();
        let footprints: Vec<_> = config.sites.iter().map(|s| s.footprint()).collect();
        let grid = build_grid(&footprints, &config.grid)?;

        let entry_points: Vec<[f64; 2]> = config.sites.iter().map(|s| s.entry_point).collect();
        let mut columns = Vec::with_capacity(e);
        for c in &config.criteria {
            let values = match &c.source {
                FieldSource::Solar => synth_solar_field(&grid),
                FieldSource::LowRise => low_rise_field(&grid),
                FieldSource::EntryProximity => entry_proximity_field(&grid, &entry_points)?,
                FieldSource::File { path } => FieldFile::read(path)
                    .map_err(|err| EngineError::Io(format!("{}: {err}", path.display())))?
                    .normalized_for(&grid)?,
            };
            columns.push((c.name.clone(), values));
        }
        let fields = SensitivityFields::from_columns(columns)?;

        let control_raw = Tensor3::from_fn(n, m, o, |j, i, k| config.actors[i].control[j][k]);
        let control = ControlTensor::normalized(&control_raw)
            .map_err(|err| EngineError::ConfigInvalid(format!("control network: {err}")))?;
        let agenda_raw = Tensor3::from_fn(m, n, o, |i, j, k| config.actors[i].agenda[j][k]);
        let agenda = InterestTensor::normalized(&agenda_raw)
            .map_err(|err| EngineError::ConfigInvalid(format!("agenda: {err}")))?;
        let default_weights = Matrix::from_fn(e, m, |l, i| match &config.actors[i].weights {
            Some(w) => w[l],
            None => 1.0,
        });

        let capacities: Vec<u64> = (0..n).map(|j| grid.site_capacity(j) as u64).collect();
        let targets = marginal_targets(config, &grid, &capacities)?;

        let existing = VolumeMatrix::from_rows(
            &config.sites.iter().map(|s| s.existing.clone().unwrap_or_else(|| vec![0; o])).collect::<Vec<_>>(),
        )?;
        let change_costs = matrix(
            &config.sites.iter().map(|s| s.change_cost.clone().unwrap_or_else(|| vec![1.0; o])).collect::<Vec<_>>(),
        )?;
        let closeness = ClosenessRatings::try_new(matrix(&config.closeness)?)?;
        let distances = match &config.distances {
            Some(d) => DistanceMatrix::try_new(matrix(d)?)?,
            None => site_distances(&entry_points),
        };
        Ok(GameContext {
            grid,
            fields,
            control,
            agenda,
            default_weights,
            targets,
            ipf: config.ipf,
            capacities,
            existing,
            change_costs,
            closeness,
            distances,
        })
    }
}

/// Integer colour totals in voxels and matching site capacities.
///
/// Site capacity is the smaller of the GFA cap and the buildable envelope.
/// After reconciliation the colour totals are rounded and the site totals
/// rescaled to the rounded sum, so the fitted matrix quantizes exactly.
fn marginal_targets(config: &GameConfig, grid: &VoxelGrid, capacities: &[u64]) -> Result<MarginalTargets, EngineError> {
    let spec = grid.spec();
    let (vol, floor) = (spec.voxel_volume(), spec.voxel_floor_area());
    let cols: Vec<f64> = config.programme.iter().zip(&config.colours).map(|(y, c)| y * c.scale / vol).collect();
    if cols.iter().sum::<f64>() <= 0.0 {
        return Err(EngineError::ConfigInvalid("programme is empty".into()));
    }
    let rows: Vec<f64> = config
        .sites
        .iter()
        .zip(capacities)
        .map(|(s, &cap)| s.max_gfa.map_or(cap as f64, |g| (g / floor).min(cap as f64)))
        .collect();
    let reconciled = reconcile(rows, cols, config.reconcile)?;
    let cols: Vec<f64> = reconciled.cols().iter().map(|c| c.round()).collect();
    let (required, hard) = (cols.iter().sum::<f64>(), capacities.iter().sum::<u64>() as f64);
    if required == 0.0 {
        return Err(EngineError::ConfigInvalid("programme rounds to zero voxels".into()));
    }
    if required > hard {
        return Err(IpfError::CapacityShortfall {
            capacity: hard,
            required,
        }
        .into());
    }
    let row_total: f64 = reconciled.rows().iter().sum();
    let rows = reconciled.rows().iter().map(|r| r * required / row_total).collect();
    Ok(MarginalTargets::new(rows, cols)?)
}
