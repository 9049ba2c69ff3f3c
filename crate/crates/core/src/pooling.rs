//! Per-colour opinion pooling over the actor/site interaction network.
//!
//! For every colour page the interest page `X_k` (actors × sites) and control
//! page `C_k` (sites × actors) are made row-stochastic, the site chain
//! `Q = C_k X_k` is formed, and its stationary distribution becomes the
//! consensus allocation column `A[:, k]`. The actor chain `P = X_k C_k` is
//! available for diagnostics only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{lstsq, normalize_rows, shape_err, Matrix, StochasticMatrix, Tensor3, TensorError};

/// Residual of the augmented stationary system above which a chain is rejected.
pub const MAX_STEADY_RESIDUAL: f64 = 1e-6;
/// Negative stationary entries smaller than this in magnitude are clamped to zero.
pub const NEGATIVE_DUST: f64 = 1e-10;
/// Row-sum slack accepted for an input transition matrix.
const CHAIN_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolingError {
    #[error(transparent)]
    Shape(TensorError),
    #[error("transition matrix row {0} is not stochastic")]
    NotStochastic(usize),
    #[error("interest page for colour {colour}: {source}")]
    Interest { colour: usize, source: TensorError },
    #[error("control page for colour {colour}: {source}")]
    Control { colour: usize, source: TensorError },
    #[error("no unique stationary distribution (colour {colour:?}, rank {rank}/{size}, residual {residual:e})")]
    NoConvergence {
        colour: Option<usize>,
        rank: usize,
        size: usize,
        residual: f64,
    },
}

impl PoolingError {
    fn in_colour(self, k: usize) -> Self {
        match self {
            PoolingError::NoConvergence { rank, size, residual, .. } => PoolingError::NoConvergence {
                colour: Some(k),
                rank,
                size,
                residual,
            },
            other => other,
        }
    }
}

impl From<TensorError> for PoolingError {
    fn from(e: TensorError) -> Self {
        PoolingError::Shape(e)
    }
}

/// Actor interests `X[i, j, k]` over (actors, sites, colours).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterestTensor(Tensor3);

impl InterestTensor {
    /// Normalizes each (actor, colour) fibre over sites to sum to one.
    pub fn normalized(raw: &Tensor3) -> Result<Self, PoolingError> {
        let (_, _, o) = raw.dims();
        let mut out = raw.clone();
        for k in 0..o {
            let page = normalize_rows(&raw.page(k))
                .map_err(|source| PoolingError::Interest { colour: k, source })?;
            out.set_page(k, &page)?;
        }
        Ok(InterestTensor(out))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    /// `(m, n, o)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }

    /// Actor slice `X[i, :, :]` (sites × colours).
    pub fn actor(&self, i: usize) -> Matrix {
        self.0.slice0(i)
    }

    pub fn page(&self, k: usize) -> Matrix {
        self.0.page(k)
    }
}

/// Decision power `C[j, i, k]` over (sites, actors, colours).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlTensor(Tensor3);

impl ControlTensor {
    /// Normalizes each (site, colour) fibre over actors to sum to one.
    pub fn normalized(raw: &Tensor3) -> Result<Self, PoolingError> {
        let (_, _, o) = raw.dims();
        let mut out = raw.clone();
        for k in 0..o {
            let page = normalize_rows(&raw.page(k))
                .map_err(|source| PoolingError::Control { colour: k, source })?;
            out.set_page(k, &page)?;
        }
        Ok(ControlTensor(out))
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.0
    }

    /// `(n, m, o)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dims()
    }

    pub fn page(&self, k: usize) -> Matrix {
        self.0.page(k)
    }

    /// Control held by actor `i`, as a sites × colours matrix.
    pub fn actor(&self, i: usize) -> Matrix {
        self.0.slice1(i)
    }
}

/// Consensus area fractions `A[j, k]`; every column is a distribution over sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AllocationMatrix(Matrix);

impl AllocationMatrix {
    pub fn new(a: Matrix) -> Self {
        AllocationMatrix(a)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Returns the actor chain `P = X_k C_k` and the site chain `Q = C_k X_k`.
pub fn interaction_matrices(
    xk: &StochasticMatrix,
    ck: &StochasticMatrix,
) -> Result<(Matrix, Matrix), PoolingError> {
    let (m, n) = xk.shape();
    if ck.shape() != (n, m) {
        return Err(shape_err(format!("control page {n}x{m}"), format!("{:?}", ck.shape())).into());
    }
    Ok((xk.matmul(ck)?, ck.matmul(xk)?))
}

/// Stationary row vector of a row-stochastic chain, via least squares on the
/// augmented system `[(I − Q) | 1]ᵀ βᵀ = [0 … 0, 1]ᵀ`.
pub fn steady_state(q: &Matrix) -> Result<Vec<f64>, PoolingError> {
    let n = q.rows();
    if q.cols() != n {
        return Err(shape_err("square matrix", format!("{:?}", q.shape())).into());
    }
    if !q.is_finite() {
        return Err(TensorError::NonFinite.into());
    }
    for (i, s) in q.row_sums().into_iter().enumerate() {
        if (s - 1.0).abs() > CHAIN_ROW_TOL || q.row(i).iter().any(|&v| v < 0.0) {
            return Err(PoolingError::NotStochastic(i));
        }
    }
    // Row j of the system is column j of (I − Q); the last row is all ones.
    let system = Matrix::from_fn(n + 1, n, |r, c| {
        if r == n {
            1.0
        } else {
            let id = if r == c { 1.0 } else { 0.0 };
            id - q[(c, r)]
        }
    });
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = 1.0;
    let sol = lstsq(&system, &rhs)?;
    let fail = |residual| PoolingError::NoConvergence {
        colour: None,
        rank: sol.rank,
        size: n,
        residual,
    };
    if sol.rank < n || sol.residual > MAX_STEADY_RESIDUAL {
        return Err(fail(sol.residual));
    }
    let mut beta = sol.x;
    for v in beta.iter_mut() {
        if *v < 0.0 {
            if -*v >= NEGATIVE_DUST {
                return Err(fail(sol.residual));
            }
            *v = 0.0;
        }
    }
    let total: f64 = beta.iter().sum();
    for v in beta.iter_mut() {
        *v /= total;
    }
    Ok(beta)
}

/// Consensus allocation `A` (sites × colours) from interests and controls.
pub fn pool_opinions(x: &InterestTensor, c: &ControlTensor) -> Result<AllocationMatrix, PoolingError> {
    let (m, n, o) = x.dims();
    if c.dims() != (n, m, o) {
        return Err(shape_err(
            format!("control tensor {n}x{m}x{o}"),
            format!("{:?}", c.dims()),
        )
        .into());
    }
    let mut a = Matrix::zeros(n, o);
    for k in 0..o {
        let beta = pool_page(&x.page(k), &c.page(k), k)?;
        for (j, b) in beta.into_iter().enumerate() {
            a[(j, k)] = b;
        }
    }
    Ok(AllocationMatrix(a))
}

fn pool_page(xk: &Matrix, ck: &Matrix, k: usize) -> Result<Vec<f64>, PoolingError> {
    let xk = normalize_rows(xk).map_err(|source| PoolingError::Interest { colour: k, source })?;
    let ck = normalize_rows(ck).map_err(|source| PoolingError::Control { colour: k, source })?;
    let (_, q) = interaction_matrices(&xk, &ck)?;
    steady_state(&q).map_err(|e| e.in_colour(k))
}

/// Stationary distribution of the actor chain `P = X_k C_k` for one page.
pub fn primal_steady_state(xk: &StochasticMatrix, ck: &StochasticMatrix) -> Result<Vec<f64>, PoolingError> {
    let (p, _) = interaction_matrices(xk, ck)?;
    steady_state(&p)
}

/// Sup-norm residuals `(‖β − αX‖∞, ‖α − βC‖∞)` of the primal/dual link.
pub fn duality_residuals(
    xk: &Matrix,
    ck: &Matrix,
    alpha: &[f64],
    beta: &[f64],
) -> Result<(f64, f64), PoolingError> {
    let ax = xk.left_mul(alpha)?;
    let bc = ck.left_mul(beta)?;
    if ax.len() != beta.len() || bc.len() != alpha.len() {
        return Err(shape_err("conformable stationary vectors", "mismatched lengths").into());
    }
    let sup = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((sup(beta, &ax), sup(alpha, &bc)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stoch(rows: &[&[f64]]) -> StochasticMatrix {
        StochasticMatrix::try_new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn identity_pair_gives_identity_chains() {
        let id = stoch(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (p, q) = interaction_matrices(&id, &id).unwrap();
        assert_eq!(p, Matrix::identity(2));
        assert_eq!(q, Matrix::identity(2));
    }

    #[test]
    fn single_actor_site_chain_repeats_interest() {
        let x = stoch(&[&[0.2, 0.3, 0.5]]);
        let c = stoch(&[&[1.0], &[1.0], &[1.0]]);
        let (_, q) = interaction_matrices(&x, &c).unwrap();
        for j in 0..3 {
            assert_eq!(q.row(j), x.row(0));
        }
    }

    #[test]
    fn interaction_shape_mismatch() {
        let x = stoch(&[&[0.5, 0.5]]);
        let c = stoch(&[&[1.0]]);
        assert!(matches!(interaction_matrices(&x, &c), Err(PoolingError::Shape(_))));
    }

    #[test]
    fn identity_chain_has_no_unique_steady_state() {
        let err = steady_state(&Matrix::identity(2)).unwrap_err();
        assert!(matches!(err, PoolingError::NoConvergence { rank: 1, size: 2, .. }), "{err:?}");
    }

    #[test]
    fn periodic_swap_chain() {
        let q = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let beta = steady_state(&q).unwrap();
        assert!((beta[0] - 0.5).abs() < 1e-14 && (beta[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_stochastic_chain_rejected() {
        let q = Matrix::from_rows(&[[0.5, 0.4], [0.5, 0.5]]).unwrap();
        assert_eq!(steady_state(&q).unwrap_err(), PoolingError::NotStochastic(0));
    }

    #[test]
    fn zero_interest_row_reports_colour() {
        let x = Tensor3::from_fn(2, 2, 2, |i, _, k| if i == 1 && k == 1 { 0.0 } else { 1.0 });
        let err = InterestTensor::normalized(&x).unwrap_err();
        assert_eq!(
            err,
            PoolingError::Interest {
                colour: 1,
                source: TensorError::ZeroRow(1)
            }
        );
    }

    #[test]
    fn reducible_page_reports_colour() {
        // Two actors each controlling and wanting only their own site.
        let x = Tensor3::from_fn(2, 2, 2, |i, j, k| if k == 0 || i == j { 1.0 } else { 0.0 });
        let c = Tensor3::from_fn(2, 2, 2, |j, i, k| if k == 0 || i == j { 1.0 } else { 0.0 });
        let err = pool_opinions(
            &InterestTensor(x.clone()),
            &ControlTensor(c.clone()),
        )
        .unwrap_err();
        assert!(matches!(err, PoolingError::NoConvergence { colour: Some(1), .. }), "{err:?}");
    }

    #[test]
    fn duality_identity_pair_is_exact() {
        let id = Matrix::identity(3);
        let v = [0.2, 0.3, 0.5];
        assert_eq!(duality_residuals(&id, &id, &v, &v).unwrap(), (0.0, 0.0));
    }
}
