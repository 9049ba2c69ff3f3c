//! Aggregate quality criteria of a round: integrated sensitivity fields,
//! closeness-weighted transport efficacy between colours, and a change-of-use
//! score against the existing allocation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ipf::VolumeMatrix;
use crate::tensor::Matrix;
use crate::voxel::{MassConfiguration, SensitivityFields};

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{what} must be square, got {rows}x{cols}")]
    NotSquare { what: &'static str, rows: usize, cols: usize },
    #[error("{what} is not symmetric at ({row}, {col})")]
    NotSymmetric { what: &'static str, row: usize, col: usize },
    #[error("{what} entry ({row}, {col}) = {value} is out of range")]
    OutOfRange {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("distance matrix has a nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("all expected colour distances are zero")]
    DegenerateDistances,
    #[error("cannot parse distance matrix: {0}")]
    Parse(String),
}

fn require_square(what: &'static str, m: &Matrix) -> Result<(), EvaluationError> {
    if m.rows() != m.cols() {
        return Err(EvaluationError::NotSquare {
            what,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(())
}

fn require_symmetric(what: &'static str, m: &Matrix, tol: f64) -> Result<(), EvaluationError> {
    for row in 0..m.rows() {
        for col in row + 1..m.cols() {
            let (a, b) = (m[(row, col)], m[(col, row)]);
            if (a - b).abs() > tol * a.abs().max(b.abs()).max(1.0) {
                return Err(EvaluationError::NotSymmetric { what, row, col });
            }
        }
    }
    Ok(())
}

/// Stated closeness preferences `T` between colour pairs, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct ClosenessRatings(Matrix);

impl ClosenessRatings {
    pub fn try_new(t: Matrix) -> Result<Self, EvaluationError> {
        require_square("closeness ratings", &t)?;
        for row in 0..t.rows() {
            for col in 0..t.cols() {
                let value = t[(row, col)];
                if !(0.0..=1.0).contains(&value) {
                    return Err(EvaluationError::OutOfRange {
                        what: "closeness ratings",
                        row,
                        col,
                        value,
                    });
                }
            }
        }
        require_symmetric("closeness ratings", &t, SYMMETRY_TOL)?;
        Ok(ClosenessRatings(t))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Matrix> for ClosenessRatings {
    type Error = EvaluationError;
    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        ClosenessRatings::try_new(m)
    }
}

impl From<ClosenessRatings> for Matrix {
    fn from(t: ClosenessRatings) -> Self {
        t.0
    }
}

/// Ground distances in metres between site entry points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct DistanceMatrix(Matrix);

impl DistanceMatrix {
    pub fn try_new(d: Matrix) -> Result<Self, EvaluationError> {
        require_square("distance matrix", &d)?;
        for row in 0..d.rows() {
            if d[(row, row)] != 0.0 {
                return Err(EvaluationError::NonzeroDiagonal(row));
            }
            for col in 0..d.cols() {
                let value = d[(row, col)];
                if !value.is_finite() || value < 0.0 {
                    return Err(EvaluationError::OutOfRange {
                        what: "distance matrix",
                        row,
                        col,
                        value,
                    });
                }
            }
        }
        require_symmetric("distance matrix", &d, 1e-9)?;
        Ok(DistanceMatrix(d))
    }

    /// Parses a square grid of numbers, one row per line, separated by commas
    /// or whitespace. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, EvaluationError> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<f64>().map_err(|e| EvaluationError::Parse(format!("{t:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let m = Matrix::from_rows(&rows).map_err(|e| EvaluationError::Parse(e.to_string()))?;
        DistanceMatrix::try_new(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> DistanceMatrix {
        DistanceMatrix(self.0.map(|v| v * factor))
    }
}

impl TryFrom<Matrix> for DistanceMatrix {
    type Error = EvaluationError;
    fn try_from(m: Matrix) -> Result<Self, Self::Error> {
        DistanceMatrix::try_new(m)
    }
}

impl From<DistanceMatrix> for Matrix {
    fn from(d: DistanceMatrix) -> Self {
        d.0
    }
}

/// Euclidean distances between entry points.
pub fn site_distances(entry_points: &[[f64; 2]]) -> DistanceMatrix {
    let n = entry_points.len();
    DistanceMatrix(Matrix::from_fn(n, n, |a, b| {
        let (p, q) = (entry_points[a], entry_points[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }))
}

/// Field sums over the selected voxels, raw and per selected voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIntegral {
    pub totals: Vec<f64>,
    pub per_voxel: Vec<f64>,
}

pub fn integrate_field(fields: &SensitivityFields, mass: &MassConfiguration) -> Result<FieldIntegral, EvaluationError> {
    let values = fields.values();
    if values.rows() != mass.selected().len() {
        return Err(EvaluationError::ShapeMismatch(format!(
            "{} field rows for {} voxels",
            values.rows(),
            mass.selected().len()
        )));
    }
    let mut totals = vec![0.0; values.cols()];
    for l in mass.selected_ranks() {
        for (t, v) in totals.iter_mut().zip(values.row(l)) {
            *t += v;
        }
    }
    let count = mass.total();
    let per_voxel = totals
        .iter()
        .map(|t| if count == 0 { 0.0 } else { t / count as f64 })
        .collect();
    Ok(FieldIntegral { totals, per_voxel })
}

/// Expected distance `R[k, k']` between a voxel of colour `k` and one of `k'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColourDistances {
    pub expected: Matrix,
    /// Colours with no allocated volume; their rows and columns are zero.
    pub absent: Vec<bool>,
}

/// `R = VᵀDV ⊘ ccᵀ` with `c` the colour totals.
pub fn expected_colour_distances(v: &VolumeMatrix, d: &DistanceMatrix) -> Result<ColourDistances, EvaluationError> {
    let (n, o) = v.shape();
    if d.matrix().rows() != n {
        return Err(EvaluationError::ShapeMismatch(format!(
            "{n} sites in the volume matrix, {} in the distance matrix",
            d.matrix().rows()
        )));
    }
    let vm = v.to_matrix();
    let raw = vm
        .transpose()
        .matmul(d.matrix())
        .and_then(|vd| vd.matmul(&vm))
        .map_err(|e| EvaluationError::ShapeMismatch(e.to_string()))?;
    let c: Vec<f64> = v.col_sums().into_iter().map(|s| s as f64).collect();
    let expected = Matrix::from_fn(o, o, |k, kk| {
        let denom = c[k] * c[kk];
        if denom > 0.0 {
            raw[(k, kk)] / denom
        } else {
            0.0
        }
    });
    Ok(ColourDistances {
        expected,
        absent: c.iter().map(|&ck| ck == 0.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportEfficacy {
    /// Closeness-weighted share of the total expected distance, in `[0, 1]`.
    pub relative_cost: f64,
    pub efficacy: f64,
    /// Set when every expected distance is zero and efficacy defaults to 1.
    pub degenerate: bool,
}

impl TransportEfficacy {
    pub fn degenerate() -> Self {
        TransportEfficacy {
            relative_cost: 0.0,
            efficacy: 1.0,
            degenerate: true,
        }
    }
}

/// `ς = Σ(T ⊙ R) / ΣR` and efficacy `1 − ς`.
pub fn transport_efficacy(t: &ClosenessRatings, r: &Matrix) -> Result<TransportEfficacy, EvaluationError> {
    let t = t.matrix();
    if t.shape() != r.shape() {
        return Err(EvaluationError::ShapeMismatch(format!(
            "closeness ratings {:?} vs distances {:?}",
            t.shape(),
            r.shape()
        )));
    }
    let total = r.sum();
    if !(total > 0.0) {
        return Err(EvaluationError::DegenerateDistances);
    }
    let weighted: f64 = t.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum();
    let relative_cost = (weighted / total).clamp(0.0, 1.0);
    Ok(TransportEfficacy {
        relative_cost,
        efficacy: 1.0 - relative_cost,
        degenerate: false,
    })
}

/// Score in `[0, 1]` for how little the allocation departs from the existing
/// one, 1 meaning no change.
///
/// The weighted change `Σ Γ|V − V₀|` is divided by its worst case
/// `Σ Γ·max(cap_j, V₀, V)` where `cap_j` is the site's voxel capacity, the
/// largest amount any single colour could occupy there.
pub fn change_cost(
    v: &VolumeMatrix,
    existing: &VolumeMatrix,
    gamma: &Matrix,
    capacities: &[u64],
) -> Result<f64, EvaluationError> {
    let (n, o) = v.shape();
    if existing.shape() != (n, o) || gamma.shape() != (n, o) || capacities.len() != n {
        return Err(EvaluationError::ShapeMismatch(format!(
            "volumes {:?}, existing {:?}, change costs {:?}, {} capacities",
            v.shape(),
            existing.shape(),
            gamma.shape(),
            capacities.len()
        )));
    }
    let (mut raw, mut worst) = (0.0, 0.0);
    for j in 0..n {
        for k in 0..o {
            let g = gamma[(j, k)];
            if !g.is_finite() || g < 0.0 {
                return Err(EvaluationError::OutOfRange {
                    what: "change costs",
                    row: j,
                    col: k,
                    value: g,
                });
            }
            let (a, b) = (v.get(j, k), existing.get(j, k));
            raw += g * a.abs_diff(b) as f64;
            worst += g * capacities[j].max(a).max(b) as f64;
        }
    }
    Ok(if worst > 0.0 { 1.0 - raw / worst } else { 1.0 })
}

/// Named, higher-is-better outcomes of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}
