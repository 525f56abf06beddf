//! Dense numerical kernels shared by the game solver and the decay analysis.
//!
//! Everything here works on small dense `f64` matrices (state dimensions in
//! the tens). The Lyapunov solver uses squared Smith iteration with one
//! refinement sweep; both Riccati solvers use fixed-point (value) iteration
//! of the Riccati operator, which reaches the stabilizing solution for the
//! ordinary LQ case and for the sign-indefinite game case alike.

mod eigen;
mod lyapunov;
mod riccati;

pub(crate) use eigen::symmetric_eigen_desc;
pub use eigen::{
    eig_decomposition, eig_decomposition_with, eigenvalues, spectral_radius,
    symmetric_eigenvalues_desc, EigenDecomposition,
};
pub use lyapunov::{solve_dlyap, solve_dlyap_with};
pub use riccati::{
    solve_dare_control, solve_dare_control_with, solve_dare_filter, solve_dare_filter_with,
    RiccatiSolution, Role,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Numerical tolerances. The defaults are what every public entry point uses
/// unless a `*_with` variant is called.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Tolerances {
    /// Relative residual accepted for Lyapunov and Riccati solutions.
    pub residual: f64,
    /// Relative asymmetry accepted on symmetric outputs.
    pub symmetry: f64,
    /// Successive-iterate difference that ends a Riccati fixed-point iteration.
    pub riccati_step: f64,
    /// Iteration budget for the Riccati fixed-point iteration.
    pub riccati_max_iter: usize,
    /// Largest `κ∞(X)` accepted before an eigenvector matrix is called defective.
    pub diagonalizability: f64,
    /// Largest 1-norm condition estimate accepted in an inner linear solve.
    pub max_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            symmetry: 1e-12,
            riccati_step: 1e-12,
            riccati_max_iter: 100_000,
            diagonalizability: 1e10,
            max_condition: 1e12,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not stable (spectral radius {spectral_radius:.6})")]
    NotStable { spectral_radius: f64 },
    #[error("{solver} did not converge after {iterations} iterations: {detail}")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        detail: String,
    },
    #[error("value unbounded: {detail}")]
    ValueUnbounded { detail: String },
    #[error("fixed point is not stabilizing (closed-loop spectral radius {spectral_radius:.6})")]
    NotStabilizing { spectral_radius: f64 },
    #[error("eigenvector matrix is numerically singular (condition {condition:.3e})")]
    Defective { condition: f64 },
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("{what} is not {property}")]
    Definiteness {
        what: &'static str,
        property: &'static str,
    },
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;

/// Induced ∞-norm (max row sum of absolute values).
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 1-norm (max column sum of absolute values).
pub fn norm_one(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn complex_norm_inf(m: &ComplexMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Block-diagonal matrix from a list of square or rectangular blocks.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// 2×2 block matrix `[a b; c d]`.
pub fn block2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows()
        || c.nrows() != d.nrows()
        || a.ncols() != c.ncols()
        || b.ncols() != d.ncols()
    {
        return Err(NumericsError::DimensionMismatch {
            op: "block2",
            detail: format!(
                "blocks {:?} {:?} / {:?} {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            ),
        });
    }
    let (r0, c0) = a.shape();
    let mut out = Matrix::zeros(r0 + c.nrows(), c0 + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, c0), b.shape()).copy_from(b);
    out.view_mut((r0, 0), c.shape()).copy_from(c);
    out.view_mut((r0, c0), d.shape()).copy_from(d);
    Ok(out)
}

/// Solves `a · x = b` by LU with partial pivoting, refusing systems whose
/// 1-norm condition estimate exceeds `max_condition`.
pub(crate) fn solve_checked(
    a: &Matrix,
    b: &Matrix,
    max_condition: f64,
    solver: &'static str,
) -> Result<Matrix> {
    let lu = a.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| NumericsError::NoConvergence {
            solver,
            iterations: 0,
            detail: "singular inner system".into(),
        })?;
    let cond = norm_one(a) * norm_one(&inv);
    if !cond.is_finite() || cond > max_condition {
        return Err(NumericsError::NoConvergence {
            solver,
            iterations: 0,
            detail: format!("inner system condition estimate {cond:.3e}"),
        });
    }
    Ok(inv * b)
}

pub(crate) fn require_square(op: &'static str, name: &str, m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(NumericsError::DimensionMismatch {
            op,
            detail: format!("{name} must be square and non-empty, got {:?}", m.shape()),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn require_shape(
    op: &'static str,
    name: &str,
    m: &Matrix,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(NumericsError::DimensionMismatch {
            op,
            detail: format!("{name} must be {rows}×{cols}, got {:?}", m.shape()),
        });
    }
    Ok(())
}
