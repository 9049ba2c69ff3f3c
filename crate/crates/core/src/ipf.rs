//! Iterative proportional fitting of the consensus allocation to site
//! capacities (row sums) and the district programme (column sums), followed by
//! integer quantization into voxel counts.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::tensor::Matrix;

/// Relative slack allowed between the row-target and column-target totals.
pub const MARGINAL_TOTAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IpfError {
    #[error("shape mismatch: seed is {seed:?}, targets are {targets:?}")]
    ShapeMismatch { seed: (usize, usize), targets: (usize, usize) },
    #[error("marginal totals differ: rows sum to {rows}, columns to {cols}")]
    InconsistentTargets { rows: f64, cols: f64 },
    #[error("{axis} {index} of the seed is zero but its target is {target}")]
    InfeasibleSeed { axis: Axis, index: usize, target: f64 },
    #[error("seed contains a negative or non-finite entry")]
    InvalidSeed,
    #[error("invalid programme input: {0}")]
    InvalidProgramme(String),
    #[error("district capacity {capacity} voxels cannot hold the programme of {required} voxels")]
    CapacityShortfall { capacity: f64, required: f64 },
    #[error("fit did not converge after {iterations} iterations (squared error {error:e})")]
    NotConverged { iterations: usize, error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Row => "row",
            Axis::Column => "column",
        })
    }
}

/// How to reconcile site capacities with the programme when their totals differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconcilePolicy {
    /// Refuse a programme larger than the capacity; shrink surplus capacity.
    Strict,
    /// Scale site capacities to the programme total.
    #[default]
    ScaleRows,
    /// Scale the programme to the capacity total.
    ScaleCols,
}

/// Target row sums (site capacities) and column sums (colour totals), in voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTargets {
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl MarginalTargets {
    pub fn new(rows: Vec<f64>, cols: Vec<f64>) -> Result<Self, IpfError> {
        if rows.iter().chain(&cols).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IpfError::InvalidProgramme("targets must be finite and nonnegative".into()));
        }
        let (rs, cs): (f64, f64) = (rows.iter().sum(), cols.iter().sum());
        if (rs - cs).abs() > MARGINAL_TOTAL_TOL * rs.abs().max(cs.abs()).max(1.0) {
            return Err(IpfError::InconsistentTargets { rows: rs, cols: cs });
        }
        Ok(MarginalTargets { rows, cols })
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn cols(&self) -> &[f64] {
        &self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct IpfParams {
    /// Tolerance on the total squared marginal error, in voxels².
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for IpfParams {
    fn default() -> Self {
        IpfParams {
            epsilon: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitReport {
    pub iterations: usize,
    /// Final total squared error.
    pub error: f64,
    pub converged: bool,
    /// Squared error before the first sweep and after each sweep.
    pub error_history: Vec<f64>,
}

impl FitReport {
    /// Turns a non-converged fit into an error for callers that need one.
    pub fn require_converged(&self) -> Result<(), IpfError> {
        if self.converged {
            Ok(())
        } else {
            Err(IpfError::NotConverged {
                iterations: self.iterations,
                error: self.error,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfFit {
    pub matrix: Matrix,
    pub report: FitReport,
}

fn squared_error(a: &Matrix, targets: &MarginalTargets) -> f64 {
    let dr: f64 = a.row_sums().iter().zip(&targets.rows).map(|(s, t)| (s - t).powi(2)).sum();
    let dc: f64 = a.col_sums().iter().zip(&targets.cols).map(|(s, t)| (s - t).powi(2)).sum();
    dr + dc
}

/// Alternating row/column rescaling until the squared marginal error drops to
/// `epsilon` or `max_iter` sweeps have run.
///
/// Hitting `max_iter` is not an error: the best iterate is returned with
/// `report.converged == false`.
pub fn ipf_fit(a: &Matrix, targets: &MarginalTargets, params: IpfParams) -> Result<IpfFit, IpfError> {
    let (n, o) = a.shape();
    if targets.rows.len() != n || targets.cols.len() != o {
        return Err(IpfError::ShapeMismatch {
            seed: (n, o),
            targets: (targets.rows.len(), targets.cols.len()),
        });
    }
    if a.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(IpfError::InvalidSeed);
    }
    for (j, (s, &t)) in a.row_sums().iter().zip(&targets.rows).enumerate() {
        if *s == 0.0 && t > 0.0 {
            return Err(IpfError::InfeasibleSeed { axis: Axis::Row, index: j, target: t });
        }
    }
    for (k, (s, &t)) in a.col_sums().iter().zip(&targets.cols).enumerate() {
        if *s == 0.0 && t > 0.0 {
            return Err(IpfError::InfeasibleSeed { axis: Axis::Column, index: k, target: t });
        }
    }

    let mut fit = a.clone();
    let mut error = squared_error(&fit, targets);
    let mut history = vec![error];
    let mut iterations = 0;
    while error > params.epsilon && iterations < params.max_iter {
        let rho = fit.row_sums();
        for j in 0..n {
            let f = if rho[j] > 0.0 { targets.rows[j] / rho[j] } else { 0.0 };
            for v in fit.row_mut(j) {
                *v *= f;
            }
        }
        let kappa = fit.col_sums();
        let col_factors: Vec<f64> = kappa
            .iter()
            .zip(&targets.cols)
            .map(|(&s, &t)| if s > 0.0 { t / s } else { 0.0 })
            .collect();
        for j in 0..n {
            for (v, f) in fit.row_mut(j).iter_mut().zip(&col_factors) {
                *v *= f;
            }
        }
        error = squared_error(&fit, targets);
        history.push(error);
        iterations += 1;
    }
    let converged = error <= params.epsilon;
    if !converged {
        warn!(iterations, error, "proportional fit hit the iteration cap");
    }
    Ok(IpfFit {
        matrix: fit,
        report: FitReport {
            iterations,
            error,
            converged,
            error_history: history,
        },
    })
}

/// Voxel-unit marginal targets from the district programme and site capacities.
///
/// `programme[k]` is net area in m², `scale[k]` converts it to gross volume in
/// m³, and `capacities[j]` is the gross floor area a site may hold in m².
pub fn programme_to_targets(
    programme: &[f64],
    scale: &[f64],
    voxel_volume: f64,
    voxel_floor_area: f64,
    capacities: &[f64],
    policy: ReconcilePolicy,
) -> Result<MarginalTargets, IpfError> {
    if programme.len() != scale.len() {
        return Err(IpfError::InvalidProgramme(format!(
            "{} programme entries but {} scale factors",
            programme.len(),
            scale.len()
        )));
    }
    if programme.iter().any(|v| !v.is_finite() || *v < 0.0) || !programme.iter().any(|v| *v > 0.0) {
        return Err(IpfError::InvalidProgramme(
            "programme must be nonnegative with at least one positive entry".into(),
        ));
    }
    if scale.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(IpfError::InvalidProgramme("scale factors must be positive".into()));
    }
    if !(voxel_volume > 0.0) || !(voxel_floor_area > 0.0) {
        return Err(IpfError::InvalidProgramme("voxel volume and floor area must be positive".into()));
    }
    if capacities.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(IpfError::InvalidProgramme("capacities must be nonnegative".into()));
    }
    let cols: Vec<f64> = programme.iter().zip(scale).map(|(y, s)| y * s / voxel_volume).collect();
    let rows: Vec<f64> = capacities.iter().map(|c| c / voxel_floor_area).collect();
    reconcile(rows, cols, policy)
}

/// Makes row and column totals agree according to `policy`.
pub fn reconcile(rows: Vec<f64>, cols: Vec<f64>, policy: ReconcilePolicy) -> Result<MarginalTargets, IpfError> {
    let (rs, cs): (f64, f64) = (rows.iter().sum(), cols.iter().sum());
    if (rs - cs).abs() <= MARGINAL_TOTAL_TOL * rs.max(cs).max(1.0) {
        return MarginalTargets::new(rows, cols);
    }
    if rs <= 0.0 {
        return Err(IpfError::CapacityShortfall { capacity: rs, required: cs });
    }
    let scaled = |v: Vec<f64>, f: f64| v.into_iter().map(|x| x * f).collect::<Vec<_>>();
    match policy {
        ReconcilePolicy::Strict if rs < cs => Err(IpfError::CapacityShortfall { capacity: rs, required: cs }),
        ReconcilePolicy::Strict | ReconcilePolicy::ScaleRows => MarginalTargets::new(scaled(rows, cs / rs), cols),
        ReconcilePolicy::ScaleCols => MarginalTargets::new(rows, scaled(cols, rs / cs)),
    }
}

/// Nonnegative integer voxel counts per site (rows) and colour (columns).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u64>>", try_from = "Vec<Vec<u64>>")]
pub struct VolumeMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl VolumeMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        VolumeMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[u64]>>(rows: &[R]) -> Result<Self, IpfError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(IpfError::ShapeMismatch {
                    seed: (rows.len(), cols),
                    targets: (rows.len(), r.as_ref().len()),
                });
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(VolumeMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, j: usize, k: usize) -> u64 {
        self.data[j * self.cols + k]
    }

    pub fn set(&mut self, j: usize, k: usize, v: u64) {
        self.data[j * self.cols + k] = v;
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn row_sum(&self, j: usize) -> u64 {
        self.row(j).iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|j| self.row_sum(j)).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.cols];
        for j in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(j)) {
                *o += v;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |j, k| self.get(j, k) as f64)
    }

    /// Elementwise scaling; used to build larger programmes with the same shape.
    pub fn scaled(&self, factor: u64) -> VolumeMatrix {
        VolumeMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

impl From<VolumeMatrix> for Vec<Vec<u64>> {
    fn from(v: VolumeMatrix) -> Self {
        (0..v.rows).map(|j| v.row(j).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<u64>>> for VolumeMatrix {
    type Error = IpfError;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self, Self::Error> {
        VolumeMatrix::from_rows(&rows)
    }
}

/// Largest-remainder rounding of each column to `round(column sum)`.
///
/// Ties on the fractional part go to the lower site index.
pub fn quantize_volumes(fitted: &Matrix) -> VolumeMatrix {
    let (n, o) = fitted.shape();
    let mut out = VolumeMatrix::zeros(n, o);
    for k in 0..o {
        let col: Vec<f64> = fitted.column(k).into_iter().map(|v| v.max(0.0)).collect();
        let target = col.iter().sum::<f64>().round() as u64;
        let floors: Vec<u64> = col.iter().map(|v| v.floor() as u64).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let frac = |j: usize| col[j] - col[j].floor();
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let residual = target.saturating_sub(floors.iter().sum());
        for (j, &f) in floors.iter().enumerate() {
            out.set(j, k, f);
        }
        for &j in order.iter().take(residual as usize) {
            out.set(j, k, out.get(j, k) + 1);
        }
    }
    out
}

/// Moves single voxels between sites, colour by colour, until no site exceeds
/// its capacity. Column sums are untouched.
///
/// Each move takes the most over-rounded unit (largest `V − fitted`) from an
/// overflowing site and gives it to the most under-served site with spare room.
pub fn enforce_row_caps(v: &mut VolumeMatrix, fitted: &Matrix, caps: &[u64]) -> Result<usize, IpfError> {
    let (n, o) = v.shape();
    let total_cap: u64 = caps.iter().sum();
    if caps.len() != n {
        return Err(IpfError::ShapeMismatch {
            seed: (n, o),
            targets: (caps.len(), o),
        });
    }
    if v.total() > total_cap {
        return Err(IpfError::CapacityShortfall {
            capacity: total_cap as f64,
            required: v.total() as f64,
        });
    }
    let mut moves = 0;
    while let Some(src) = (0..n).find(|&j| v.row_sum(j) > caps[j]) {
        let slack = |j: usize, k: usize| fitted[(j, k)] - v.get(j, k) as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        for k in (0..o).filter(|&k| v.get(src, k) > 0) {
            for dst in (0..n).filter(|&d| d != src && v.row_sum(d) < caps[d]) {
                let gain = slack(dst, k) - slack(src, k);
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, k, dst));
                }
            }
        }
        let (_, k, dst) = best.expect("total capacity covers the programme");
        v.set(src, k, v.get(src, k) - 1);
        v.set(dst, k, v.get(dst, k) + 1);
        moves += 1;
    }
    Ok(moves)
}
