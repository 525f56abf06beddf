//! Gramians, Hankel singular values and Cholesky decay estimates of a
//! player's belief dynamics, plus the low-rank Gramian approximation bound.
//!
//! The decay estimates come from the Cauchy matrix
//! `C_hj = −(λ_h+1)(λ̄_j+1) / (2(λ_h·λ̄_j − 1))`, which equals `−1/(μ_h + μ̄_j)`
//! for the continuous-time eigenvalues `μ = (λ−1)/(λ+1)`. Its diagonally
//! pivoted `LΔL*` factorization is computed through generator updates of the
//! Schur complements, so every pivot is a product of positive factors and
//! keeps full relative accuracy even far below machine epsilon.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::best_response::StageSolution;
use crate::numerics::{
    eig_decomposition, eigenvalues, norm_inf, norm_one, solve_dlyap, symmetric_eigen_desc,
    ComplexMatrix, Matrix, NumericsError,
};

/// Pivots at or below this value are flushed to zero.
pub const DELTA_FLUSH: f64 = 1e-300;

/// Relative singular-value threshold for numerical rank.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Relative tolerance for the PSD check on Gramians.
const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BeliefError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{what} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd {
        what: &'static str,
        min_eigenvalue: f64,
    },
    #[error("eigenvalue {eigenvalue} is not inside the unit disc")]
    UnstableEigenvalue { eigenvalue: Complex64 },
    #[error("bilinear shift A + I is singular (eigenvalue {eigenvalue} at −1)")]
    SingularShift { eigenvalue: Complex64 },
    #[error("Cauchy matrix is not Hermitian positive definite: {detail}")]
    CauchyNotPd { detail: String },
    #[error("approximation rank {l} outside 1..={n}")]
    InvalidRank { l: usize, n: usize },
}

/// `Wc − Ā·Wc·Āᵀ = B̄·B̄ᵀ`.
pub fn controllability_gramian(a_bar: &Matrix, b_bar: &Matrix) -> Result<Matrix, NumericsError> {
    solve_dlyap(&a_bar.transpose(), &(b_bar * b_bar.transpose()))
}

/// `Wo − Āᵀ·Wo·Ā = C̄ᵀ·C̄`.
pub fn observability_gramian(a_bar: &Matrix, c_bar: &Matrix) -> Result<Matrix, NumericsError> {
    solve_dlyap(a_bar, &(c_bar.transpose() * c_bar))
}

#[derive(Debug, Clone)]
pub struct GramianPair {
    pub wc: Matrix,
    pub wo: Matrix,
    /// Eigenvalues of `Wc`, descending.
    pub eigenvalues_c: Vec<f64>,
    /// Eigenvalues of `Wo`, descending.
    pub eigenvalues_o: Vec<f64>,
    /// `√λ(Wc·Wo)`, descending.
    pub hankel: Vec<f64>,
}

impl GramianPair {
    pub fn new(a_bar: &Matrix, b_bar: &Matrix, c_bar: &Matrix) -> Result<Self, BeliefError> {
        let wc = controllability_gramian(a_bar, b_bar)?;
        let wo = observability_gramian(a_bar, c_bar)?;
        let hankel = hankel_singular_values(&wc, &wo)?;
        let (eigenvalues_c, _) = symmetric_eigen_desc(&wc);
        let (eigenvalues_o, _) = symmetric_eigen_desc(&wo);
        Ok(Self {
            wc,
            wo,
            eigenvalues_c,
            eigenvalues_o,
            hankel,
        })
    }
}

fn check_psd(what: &'static str, eig: &[f64]) -> Result<(), BeliefError> {
    let top = eig.first().copied().unwrap_or(0.0).abs();
    let bottom = eig.last().copied().unwrap_or(0.0);
    if bottom < -PSD_TOLERANCE * top.max(f64::MIN_POSITIVE) {
        return Err(BeliefError::NotPsd {
            what,
            min_eigenvalue: bottom,
        });
    }
    Ok(())
}

/// Hankel singular values `√λ(Wc·Wo)`, descending, from the symmetric
/// product `SᵀWoS` with `Wc = SSᵀ`.
pub fn hankel_singular_values(wc: &Matrix, wo: &Matrix) -> Result<Vec<f64>, BeliefError> {
    let (eig_c, vec_c) = symmetric_eigen_desc(wc);
    check_psd("controllability Gramian", &eig_c)?;
    check_psd("observability Gramian", &symmetric_eigen_desc(wo).0)?;
    let mut s = vec_c;
    for (j, lambda) in eig_c.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        s.column_mut(j).scale_mut(scale);
    }
    let (mut values, _) = symmetric_eigen_desc(&(s.transpose() * wo * &s));
    for v in values.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    Ok(values)
}

/// Continuous-time eigenvalue `(λ−1)/(λ+1)`.
pub fn to_continuous(lambda: Complex64) -> Complex64 {
    (lambda - 1.0) / (lambda + 1.0)
}

/// Continuous-time pair `(A_c, B̃)` with `A_c = (Ā−I)(Ā+I)⁻¹` and
/// `B̃ = √2·(Ā+I)⁻¹·B̄`, whose continuous Gramian
/// (`A_c·G + G·A_cᵀ + B̃·B̃ᵀ = 0`) equals the discrete Gramian of `(Ā, B̄)`.
pub fn bilinear_transform(a_bar: &Matrix, b_bar: &Matrix) -> Result<(Matrix, Matrix), BeliefError> {
    let n = a_bar.nrows();
    let identity = Matrix::identity(n, n);
    let shifted_inv = (a_bar + &identity)
        .try_inverse()
        .ok_or(BeliefError::SingularShift {
            eigenvalue: Complex64::new(-1.0, 0.0),
        })?;
    if !shifted_inv.iter().all(|x| x.is_finite()) {
        return Err(BeliefError::SingularShift {
            eigenvalue: Complex64::new(-1.0, 0.0),
        });
    }
    let a_c = (a_bar - &identity) * &shifted_inv;
    let b_tilde = shifted_inv * b_bar * std::f64::consts::SQRT_2;
    Ok((a_c, b_tilde))
}

/// Cauchy matrix `C_hj = −(λ_h+1)(λ̄_j+1) / (2(λ_h·λ̄_j − 1))` in the given order.
pub fn cauchy_matrix(eigs: &[Complex64]) -> ComplexMatrix {
    let n = eigs.len();
    ComplexMatrix::from_fn(n, n, |h, j| {
        let (lh, lj) = (eigs[h], eigs[j]);
        -(lh + 1.0) * (lj.conj() + 1.0) / (2.0 * (lh * lj.conj() - 1.0))
    })
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    /// Eigenvalues in greedy pivot order.
    pub ordered_eigenvalues: Vec<Complex64>,
    /// `order[l]` is the input index of the `l`-th selected eigenvalue.
    pub order: Vec<usize>,
    /// Pivots `δ_l`, non-increasing.
    pub deltas: Vec<f64>,
    /// `δ_l / δ_1`.
    pub delta_ratios: Vec<f64>,
    /// Unit lower-triangular factor in pivot order with `‖L·e_j‖∞ = 1`.
    pub cholesky_factor_l: ComplexMatrix,
    /// `λ_l(Wc) / λ_1(Wc)`; empty until filled from a Gramian.
    pub gramian_ratios: Vec<f64>,
    /// True when some pivot was flushed to zero.
    pub flushed: bool,
}

impl DecayReport {
    /// `‖L·Δ·L* − C‖∞ / ‖C‖∞` against the Cauchy matrix in pivot order.
    pub fn reconstruction_error(&self) -> f64 {
        let c = cauchy_matrix(&self.ordered_eigenvalues);
        let delta = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.deltas.len(),
            self.deltas.iter().map(|&d| Complex64::new(d, 0.0)),
        ));
        let l = &self.cholesky_factor_l;
        let diff = l * delta * l.adjoint() - &c;
        crate::numerics::complex_norm_inf(&diff)
            / crate::numerics::complex_norm_inf(&c).max(f64::MIN_POSITIVE)
    }
}

/// Greedy Cholesky decay estimates for discrete-time eigenvalues inside the unit disc.
pub fn cholesky_decay_estimates(eigs: &[Complex64]) -> Result<DecayReport, BeliefError> {
    for &lambda in eigs {
        if (lambda + 1.0).norm() == 0.0 {
            return Err(BeliefError::SingularShift { eigenvalue: lambda });
        }
        if lambda.norm().is_nan() || lambda.norm() >= 1.0 {
            return Err(BeliefError::UnstableEigenvalue { eigenvalue: lambda });
        }
    }
    let n = eigs.len();
    let mu: Vec<Complex64> = eigs.iter().map(|&l| to_continuous(l)).collect();
    // C_hh = −1/(2·Re μ_h) must be positive; Hermitian symmetry holds by construction.
    for (h, m) in mu.iter().enumerate() {
        if m.re.is_nan() || m.re >= 0.0 {
            return Err(BeliefError::CauchyNotPd {
                detail: format!("diagonal entry {h} has continuous eigenvalue {m}"),
            });
        }
    }

    // The Schur complement of −1/(μ_h + μ̄_j) after eliminating pivot k is
    // g_h·ḡ_j·(−1/(μ_h + μ̄_j)) with g_h ← g_h·(μ_h − μ_k)/(μ_h + μ̄_k).
    let mut g = vec![Complex64::new(1.0, 0.0); n];
    let mut diag: Vec<f64> = mu.iter().map(|m| -0.5 / m.re).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    let mut columns: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(n);
    let mut flushed = false;

    while !remaining.is_empty() {
        let (pos, &k) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| diag[*a.1].total_cmp(&diag[*b.1]).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        remaining.remove(pos);
        let pivot = diag[k];
        order.push(k);
        if pivot.is_nan() || pivot <= DELTA_FLUSH {
            flushed = true;
            deltas.push(0.0);
            columns.push(Vec::new());
            continue;
        }
        deltas.push(pivot);
        let mut column = Vec::with_capacity(remaining.len());
        for &h in &remaining {
            let entry = (g[h] / g[k]) * (2.0 * mu[k].re) / (mu[h] + mu[k].conj());
            column.push((h, entry));
        }
        columns.push(column);
        for &h in &remaining {
            let factor = (mu[h] - mu[k]) / (mu[h] + mu[k].conj());
            g[h] *= factor;
            diag[h] *= factor.norm_sqr();
        }
    }

    let mut position = vec![0; n];
    for (p, &k) in order.iter().enumerate() {
        position[k] = p;
    }
    let mut l = ComplexMatrix::identity(n, n);
    for (j, column) in columns.iter().enumerate() {
        for &(h, value) in column {
            l[(position[h], j)] = value;
        }
    }
    let delta_ratios = match deltas.first() {
        Some(&d1) if d1 > 0.0 => deltas.iter().map(|d| d / d1).collect(),
        _ => vec![0.0; n],
    };
    Ok(DecayReport {
        ordered_eigenvalues: order.iter().map(|&k| eigs[k]).collect(),
        order,
        deltas,
        delta_ratios,
        cholesky_factor_l: l,
        gramian_ratios: Vec::new(),
        flushed,
    })
}

/// Direct evaluation of the δ product formula for eigenvalues already in pivot order.
pub fn delta_product_formula(ordered: &[Complex64]) -> Vec<f64> {
    ordered
        .iter()
        .enumerate()
        .map(|(l, &lam)| {
            let head = -1.0 / (2.0 * to_continuous(lam).re);
            ordered[..l].iter().fold(head, |acc, &prev| {
                let num = (lam - prev) * (lam.conj() + 1.0);
                let den = (lam.conj() * prev - 1.0) * (lam + 1.0);
                acc * (num / den).norm_sqr()
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ApproximationBound {
    pub l: usize,
    /// `l · m`, the rank Ŵ cannot exceed.
    pub rank_limit: usize,
    pub numerical_rank: usize,
    /// `δ_l / δ_1`.
    pub epsilon: f64,
    pub w_hat: ComplexMatrix,
    /// `‖Wc − Re Ŵ‖∞`.
    pub actual_error: f64,
    /// `‖Im Ŵ‖∞ / ‖Wc‖∞`.
    pub imaginary_part: f64,
    pub bound: f64,
    pub condition_number: f64,
    pub satisfied: bool,
}

/// Everything the low-rank approximation needs that does not depend on `l`.
pub struct LowRankContext {
    wc: Matrix,
    decay: DecayReport,
    /// `X_p` with columns in pivot order, one per input column `p`.
    weighted_vectors: Vec<ComplexMatrix>,
    condition_number: f64,
    b_tilde_norm_one: f64,
}

impl LowRankContext {
    pub fn new(a_bar: &Matrix, b_bar: &Matrix) -> Result<Self, BeliefError> {
        let wc = controllability_gramian(a_bar, b_bar)?;
        let (_, b_tilde) = bilinear_transform(a_bar, b_bar)?;
        let eig = eig_decomposition(a_bar)?;
        let decay = cholesky_decay_estimates(&eig.eigenvalues)?;
        let b_tilde_c = b_tilde.map(|x| Complex64::new(x, 0.0));
        let coefficients = &eig.inverse_eigenvectors * b_tilde_c;
        let n = a_bar.nrows();
        let weighted_vectors = (0..b_bar.ncols())
            .map(|p| {
                ComplexMatrix::from_fn(n, n, |row, j| {
                    let k = decay.order[j];
                    eig.right_eigenvectors[(row, k)] * coefficients[(k, p)]
                })
            })
            .collect();
        Ok(Self {
            wc,
            decay,
            weighted_vectors,
            condition_number: eig.condition_number_inf,
            b_tilde_norm_one: norm_one(&b_tilde),
        })
    }

    pub fn gramian(&self) -> &Matrix {
        &self.wc
    }

    pub fn decay(&self) -> &DecayReport {
        &self.decay
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn approximate(&self, l: usize) -> Result<ApproximationBound, BeliefError> {
        let n = self.wc.nrows();
        if l == 0 || l > n {
            return Err(BeliefError::InvalidRank { l, n });
        }
        let m = self.weighted_vectors.len();
        let lower = &self.decay.cholesky_factor_l;
        let mut w_hat = ComplexMatrix::zeros(n, n);
        for j in 0..l {
            let delta = self.decay.deltas[j];
            if delta == 0.0 {
                continue;
            }
            let column = lower.column(j);
            for xp in &self.weighted_vectors {
                let z = xp * column;
                w_hat += (&z * z.adjoint()) * Complex64::new(delta, 0.0);
            }
        }
        let real = w_hat.map(|x| x.re);
        let imag = w_hat.map(|x| x.im);
        let actual_error = norm_inf(&(&self.wc - &real));
        let wc_norm = norm_inf(&self.wc).max(f64::MIN_POSITIVE);
        let delta1 = self.decay.deltas[0];
        let epsilon = self.decay.delta_ratios[l - 1];
        let bound = epsilon
            * delta1
            * (m * n) as f64
            * (n - l) as f64
            * (self.condition_number * self.b_tilde_norm_one).powi(2);
        Ok(ApproximationBound {
            l,
            rank_limit: l * m,
            numerical_rank: numerical_rank(&w_hat),
            epsilon,
            actual_error,
            imaginary_part: norm_inf(&imag) / wc_norm,
            bound,
            condition_number: self.condition_number,
            satisfied: actual_error <= bound,
            w_hat,
        })
    }
}

fn numerical_rank(m: &ComplexMatrix) -> usize {
    let singular = m.clone().svd(false, false).singular_values;
    let top = singular.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    singular
        .iter()
        .filter(|&&s| s > RANK_THRESHOLD * top)
        .count()
}

/// Rank-`l·m` approximation of the controllability Gramian with its error bound.
pub fn lowrank_gramian_approx(
    a_bar: &Matrix,
    b_bar: &Matrix,
    l: usize,
) -> Result<ApproximationBound, BeliefError> {
    LowRankContext::new(a_bar, b_bar)?.approximate(l)
}

/// Full decay analysis of one best-response stage.
#[derive(Debug, Clone)]
pub struct StageAnalysis {
    pub gramians: GramianPair,
    pub decay: DecayReport,
    pub bounds: Vec<ApproximationBound>,
    /// Why bounds were not computed, when they were not.
    pub bounds_skipped: Option<String>,
}

/// Gramians, Hankel values and Cholesky estimates for a stage's belief
/// dynamics, with approximation bounds at every `l` in `grid` that fits.
/// A defective `Ā` skips the bounds instead of failing.
pub fn analyze_stage(stage: &StageSolution, grid: &[usize]) -> Result<StageAnalysis, BeliefError> {
    let plant = &stage.plant;
    let gramians = GramianPair::new(&plant.a_bar, &plant.b_bar, &plant.c_bar)?;
    let mut decay = cholesky_decay_estimates(&eigenvalues(&plant.a_bar))?;
    decay.gramian_ratios = ratios(&gramians.eigenvalues_c);

    let (bounds, bounds_skipped) = if grid.is_empty() {
        (Vec::new(), None)
    } else {
        match LowRankContext::new(&plant.a_bar, &plant.b_bar) {
            Ok(ctx) => {
                let bounds = grid
                    .iter()
                    .filter(|&&l| l >= 1 && l <= plant.state_dim)
                    .map(|&l| ctx.approximate(l))
                    .collect::<Result<Vec<_>, _>>()?;
                (bounds, None)
            }
            Err(BeliefError::Numerics(e @ NumericsError::Defective { .. })) => {
                (Vec::new(), Some(e.to_string()))
            }
            Err(e) => return Err(e),
        }
    };
    Ok(StageAnalysis {
        gramians,
        decay,
        bounds,
        bounds_skipped,
    })
}

/// Each value divided by the first (largest) one.
pub fn ratios(descending: &[f64]) -> Vec<f64> {
    match descending.first() {
        Some(&top) if top != 0.0 => descending.iter().map(|v| v / top).collect(),
        _ => vec![0.0; descending.len()],
    }
}

/// Comma-separated table with one row per state index.
pub fn analysis_csv(analysis: &StageAnalysis) -> String {
    let g = &analysis.gramians;
    let d = &analysis.decay;
    let mut out =
        String::from("index,eigenvalue_c,eigenvalue_o,hankel,delta,delta_ratio,gramian_ratio\n");
    for i in 0..g.eigenvalues_c.len() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            i + 1,
            g.eigenvalues_c[i],
            g.eigenvalues_o[i],
            g.hankel[i],
            d.deltas[i],
            d.delta_ratios[i],
            d.gramian_ratios[i]
        )
        .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_norm_inf, max_abs};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn series_gramian(a: &Matrix, b: &Matrix, terms: usize) -> Matrix {
        let mut sum = Matrix::zeros(a.nrows(), a.nrows());
        let mut term = b * b.transpose();
        for _ in 0..terms {
            sum += &term;
            term = a * term * a.transpose();
        }
        sum
    }

    /// Dense diagonally pivoted LDL* on an explicit Hermitian matrix.
    fn dense_pivoted_ldl(c: &ComplexMatrix) -> (Vec<usize>, Vec<f64>) {
        let n = c.nrows();
        let mut work = c.clone();
        let mut remaining: Vec<usize> = (0..n).collect();
        let (mut order, mut pivots) = (Vec::new(), Vec::new());
        while !remaining.is_empty() {
            let (pos, &k) = remaining
                .iter()
                .enumerate()
                .max_by(|a, b| work[(*a.1, *a.1)].re.total_cmp(&work[(*b.1, *b.1)].re))
                .unwrap();
            remaining.remove(pos);
            let d = work[(k, k)].re;
            order.push(k);
            pivots.push(d);
            for &h in &remaining {
                for &j in &remaining {
                    let update = work[(h, k)] * work[(k, j)] / d;
                    work[(h, j)] -= update;
                }
            }
        }
        (order, pivots)
    }

    #[test]
    fn scalar_gramians() {
        let wc = controllability_gramian(&s(0.5), &s(1.0)).unwrap();
        let wo = observability_gramian(&s(0.5), &s(1.0)).unwrap();
        assert!((wc[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        assert!((wo[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
        let h = hankel_singular_values(&wc, &wo).unwrap();
        assert!((h[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_input_gramian_is_zero() {
        let a = Matrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, -0.2]);
        assert_eq!(
            max_abs(&controllability_gramian(&a, &Matrix::zeros(2, 1)).unwrap()),
            0.0
        );
    }

    #[test]
    fn gramians_of_example_max_plant_match_series() {
        let spec = crate::experiments::example_spec();
        let min = crate::best_response::minimizer_initial(&spec).unwrap();
        let plant = crate::best_response::augment_for_max(&spec, &min).unwrap();
        let wc = controllability_gramian(&plant.a_bar, &plant.b_bar).unwrap();
        let oracle = series_gramian(&plant.a_bar, &plant.b_bar, 20_000);
        assert!(max_abs(&(wc - oracle)) < 1e-8);
        let wo = observability_gramian(&plant.a_bar, &plant.c_bar).unwrap();
        let oracle = series_gramian(&plant.a_bar.transpose(), &plant.c_bar.transpose(), 20_000);
        assert!(max_abs(&(wo - oracle)) < 1e-8);
    }

    #[test]
    fn observability_is_dual_controllability() {
        let a = Matrix::from_row_slice(2, 2, &[0.2, 0.7, -0.3, 0.4]);
        let cm = Matrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let wo = observability_gramian(&a, &cm).unwrap();
        let dual = controllability_gramian(&a.transpose(), &cm.transpose()).unwrap();
        assert!(max_abs(&(wo - dual)) < 1e-14);
    }

    #[test]
    fn identity_observability_gives_sqrt_eigenvalues() {
        let wc = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = hankel_singular_values(&wc, &Matrix::identity(2, 2)).unwrap();
        let eig = crate::numerics::symmetric_eigenvalues_desc(&wc);
        for (hv, ev) in h.iter().zip(eig) {
            assert!((hv - ev.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_gramian_rejected() {
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            hankel_singular_values(&bad, &Matrix::identity(2, 2)),
            Err(BeliefError::NotPsd { .. })
        ));
    }

    #[test]
    fn scalar_deltas() {
        assert!((cholesky_decay_estimates(&[c(0.5)]).unwrap().deltas[0] - 1.5).abs() < 1e-15);
        assert!((cholesky_decay_estimates(&[c(0.0)]).unwrap().deltas[0] - 0.5).abs() < 1e-15);
        let r = cholesky_decay_estimates(&[c(0.25), c(0.5)]).unwrap();
        assert_eq!(r.order, vec![1, 0]);
        assert!((r.deltas[0] - 1.5).abs() < 1e-15);
        assert!((r.deltas[1] - (5.0 / 6.0) * (4.0 / 49.0)).abs() < 1e-15);
        assert!((r.deltas[1] - 0.068027).abs() < 1e-6);
    }

    #[test]
    fn continuous_map_values() {
        assert_eq!(to_continuous(c(0.0)), c(-1.0));
        assert!((to_continuous(c(0.5)) - c(-1.0 / 3.0)).norm() < 1e-16);
    }

    #[test]
    fn generator_factorization_matches_dense_and_product_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.random_range(1..=6);
            let mut eigs = Vec::new();
            while eigs.len() < n {
                let r: f64 = rng.random_range(0.05..0.95);
                let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
                if eigs.len() + 2 <= n && rng.random_bool(0.5) {
                    let z = Complex64::from_polar(r, t);
                    eigs.push(z);
                    eigs.push(z.conj());
                } else {
                    eigs.push(c(if rng.random_bool(0.5) { r } else { -r }));
                }
            }
            let report = cholesky_decay_estimates(&eigs).unwrap();
            let (order, pivots) = dense_pivoted_ldl(&cauchy_matrix(&eigs));
            for (a, b) in report.deltas.iter().zip(&pivots) {
                assert!((a - b).abs() <= 1e-10 * report.deltas[0], "{a} vs {b}");
            }
            // the two orders may only differ where pivots tie to rounding
            for (p, (&a, &b)) in report.order.iter().zip(&order).enumerate() {
                if a != b {
                    assert!((pivots[p] - report.deltas[p]).abs() <= 1e-10 * report.deltas[0]);
                }
            }
            let product = delta_product_formula(&report.ordered_eigenvalues);
            for (a, b) in report.deltas.iter().zip(&product) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
            }
            assert!(report.deltas.windows(2).all(|w| w[0] >= w[1]));
            assert!(report.reconstruction_error() <= 1e-8);
            let l = &report.cholesky_factor_l;
            for j in 0..n {
                let col_max = l.column(j).iter().map(|x| x.norm()).fold(0.0, f64::max);
                assert!((col_max - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn repeated_eigenvalue_flushes() {
        let r = cholesky_decay_estimates(&[c(0.3), c(0.3)]).unwrap();
        assert!(r.flushed);
        assert_eq!(r.deltas[1], 0.0);
    }

    #[test]
    fn unstable_and_shift_singular_rejected() {
        assert!(matches!(
            cholesky_decay_estimates(&[c(1.2)]),
            Err(BeliefError::UnstableEigenvalue { .. })
        ));
        assert!(matches!(
            cholesky_decay_estimates(&[c(-1.0)]),
            Err(BeliefError::SingularShift { .. })
        ));
        assert!(bilinear_transform(&s(-1.0), &s(1.0)).is_err());
    }

    #[test]
    fn bilinear_scalar_gramian() {
        let (a_c, b_t) = bilinear_transform(&s(0.5), &s(1.0)).unwrap();
        assert!((a_c[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        // continuous scalar Gramian b²/(−2a)
        let g = b_t[(0, 0)].powi(2) / (-2.0 * a_c[(0, 0)]);
        assert!((g - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_low_rank_is_exact() {
        let b = lowrank_gramian_approx(&s(0.5), &s(1.0), 1).unwrap();
        assert!((b.w_hat[(0, 0)].re - 4.0 / 3.0).abs() < 1e-10);
        assert!(b.actual_error < 1e-10);
        assert_eq!(b.numerical_rank, 1);
    }

    #[test]
    fn full_rank_reconstruction_of_complex_pair() {
        let a = Matrix::from_row_slice(3, 3, &[0.2, 0.6, 0.0, -0.5, 0.1, 0.3, 0.0, 0.2, -0.4]);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, -1.0, 0.0, 2.0]);
        let ctx = LowRankContext::new(&a, &b).unwrap();
        let full = ctx.approximate(3).unwrap();
        assert!(full.actual_error <= 1e-10 * norm_inf(ctx.gramian()));
        assert!(full.imaginary_part <= 1e-10);
        let half = ctx.approximate(2).unwrap();
        assert!(half.satisfied, "{} > {}", half.actual_error, half.bound);
        assert!(half.numerical_rank <= half.rank_limit);
        assert!(matches!(
            ctx.approximate(0),
            Err(BeliefError::InvalidRank { .. })
        ));
        assert!(complex_norm_inf(&full.w_hat) > 0.0);
    }

    #[test]
    fn defective_plant_skips_bounds() {
        let spec = crate::experiments::example_spec();
        let mut stage = crate::best_response::minimizer_initial(&spec).unwrap();
        stage.plant.a_bar = Matrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let analysis = analyze_stage(&stage, &[1, 2]).unwrap();
        assert!(analysis.bounds.is_empty());
        assert!(analysis.bounds_skipped.is_some());
    }

    #[test]
    fn scalar_stage_lists_have_length_one() {
        let spec = crate::game_model::GameSpec {
            a: s(0.5),
            b1: s(1.0),
            b2: s(1.0),
            c1: s(1.0),
            c2: s(1.0),
            w: s(1.0),
            v1: s(1.0),
            v2: s(1.0),
            q: s(1.0),
            r1: s(1.0),
            r2: s(-7.5),
            x0_mean: nalgebra::dvector![0.0],
            x0_cov: s(1.0),
        };
        let stage = crate::best_response::minimizer_initial(&spec).unwrap();
        let analysis = analyze_stage(&stage, &[1]).unwrap();
        assert_eq!(analysis.gramians.hankel.len(), 1);
        assert_eq!(analysis.decay.deltas.len(), 1);
        assert_eq!(analysis.decay.gramian_ratios, vec![1.0]);
        assert_eq!(analysis.bounds.len(), 1);
        let csv = analysis_csv(&analysis);
        assert_eq!(csv.lines().count(), 2);
    }
}
