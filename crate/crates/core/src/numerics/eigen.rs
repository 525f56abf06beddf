use nalgebra::{Schur, SymmetricEigen};
use num_complex::Complex64;

use super::{
    complex_norm_inf, require_square, ComplexMatrix, Matrix, NumericsError, Result, Tolerances,
};

/// Eigenvalues and right eigenvectors of a real, diagonalizable matrix.
///
/// Complex eigenvalues come in adjacent exact conjugate pairs (`λ`, then
/// `λ̄`), and the eigenvector of `λ̄` is the conjugate of the one for `λ`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors, one per column.
    pub right_eigenvectors: ComplexMatrix,
    pub inverse_eigenvectors: ComplexMatrix,
    /// `‖X‖∞ · ‖X⁻¹‖∞` with induced max-row-sum norms.
    pub condition_number_inf: f64,
}

impl EigenDecomposition {
    /// `‖A·X − X·diag(λ)‖∞`.
    pub fn residual(&self, a: &Matrix) -> f64 {
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let lam =
            ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        let r = &ac * &self.right_eigenvectors - &self.right_eigenvectors * lam;
        complex_norm_inf(&r)
    }
}

pub fn spectral_radius(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    raw_eigenvalues(a)
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

fn raw_eigenvalues(a: &Matrix) -> Vec<Complex64> {
    Schur::new(a.clone())
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// Eigenvalues with complex pairs adjacent (positive imaginary part first)
/// and exactly conjugate. Works for defective matrices too.
pub fn eigenvalues(a: &Matrix) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    pair_conjugates(&raw_eigenvalues(a), super::norm_inf(a))
}

/// Orders eigenvalues so that every complex pair is adjacent with the
/// positive-imaginary member first, and makes each pair exactly conjugate.
fn pair_conjugates(raw: &[Complex64], scale: f64) -> Vec<Complex64> {
    let real_tol = 1e-13 * scale.max(1.0);
    let mut used = vec![false; raw.len()];
    let mut out = Vec::with_capacity(raw.len());
    for i in 0..raw.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let l = raw[i];
        if l.im.abs() <= real_tol {
            out.push(Complex64::new(l.re, 0.0));
            continue;
        }
        // nearest unused eigenvalue to the conjugate
        let target = l.conj();
        let partner = (0..raw.len())
            .filter(|&j| !used[j] && raw[j].im.signum() != l.im.signum())
            .min_by(|&a, &b| {
                (raw[a] - target)
                    .norm()
                    .partial_cmp(&(raw[b] - target).norm())
                    .unwrap()
            });
        match partner {
            Some(j) => {
                used[j] = true;
                let re = 0.5 * (l.re + raw[j].re);
                let im = 0.5 * (l.im.abs() + raw[j].im.abs());
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            None => out.push(l),
        }
    }
    out
}

fn unit_phase_normalize(v: &mut nalgebra::DVector<Complex64>) {
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .unwrap();
    let phase = pivot.conj() / pivot.norm();
    for x in v.iter_mut() {
        *x = *x * phase / norm;
    }
}

/// Basis of the (approximate) null space of `A − λI` with `g` vectors,
/// from the `g` smallest right singular vectors.
fn null_vectors(a: &Matrix, lambda: Complex64, g: usize) -> Vec<nalgebra::DVector<Complex64>> {
    let n = a.nrows();
    if lambda.im == 0.0 {
        let shifted = a - Matrix::identity(n, n) * lambda.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V");
        (n - g..n)
            .map(|r| vt.row(r).transpose().map(|x| Complex64::new(x, 0.0)))
            .collect()
    } else {
        let shifted = a.map(|x| Complex64::new(x, 0.0)) - ComplexMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested V");
        (n - g..n).map(|r| vt.row(r).adjoint()).collect()
    }
}

pub fn eig_decomposition(a: &Matrix) -> Result<EigenDecomposition> {
    eig_decomposition_with(a, &Tolerances::default())
}

/// Full eigendecomposition `A = X·diag(λ)·X⁻¹`. Returns `Defective` when
/// `κ∞(X)` exceeds `tol.diagonalizability`.
pub fn eig_decomposition_with(a: &Matrix, tol: &Tolerances) -> Result<EigenDecomposition> {
    let n = require_square("eig_decomposition", "A", a)?;
    let scale = super::norm_inf(a);
    let eigenvalues = pair_conjugates(&raw_eigenvalues(a), scale);
    let cluster_tol = 1e-9 * scale.max(1.0);

    let mut x = ComplexMatrix::zeros(n, n);
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let l = eigenvalues[i];
        if l.im < 0.0 {
            // filled together with its partner
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| !done[j] && (eigenvalues[j] - l).norm() <= cluster_tol)
            .collect();
        let vectors = null_vectors(a, l, members.len());
        for (&j, mut v) in members.iter().zip(vectors) {
            unit_phase_normalize(&mut v);
            x.set_column(j, &v);
            done[j] = true;
            if eigenvalues[j].im > 0.0 {
                // the partner directly follows
                x.set_column(j + 1, &v.map(|c| c.conj()));
                done[j + 1] = true;
            }
        }
    }

    let mut decomposition = EigenDecomposition {
        eigenvalues,
        right_eigenvectors: x,
        inverse_eigenvectors: ComplexMatrix::zeros(n, n),
        condition_number_inf: f64::INFINITY,
    };
    // a repeated eigenvalue whose null space is too small leaves spurious columns
    if decomposition.residual(a) > 1e-8 * scale.max(1.0) {
        return Err(NumericsError::Defective {
            condition: f64::INFINITY,
        });
    }
    let x = decomposition.right_eigenvectors.clone();

    let inverse = x.clone().try_inverse().ok_or(NumericsError::Defective {
        condition: f64::INFINITY,
    })?;
    let condition = complex_norm_inf(&x) * complex_norm_inf(&inverse);
    if !condition.is_finite() || condition > tol.diagonalizability {
        return Err(NumericsError::Defective { condition });
    }
    decomposition.inverse_eigenvectors = inverse;
    decomposition.condition_number_inf = condition;
    Ok(decomposition)
}

/// Eigenvalues of the symmetric part of `m`, descending.
pub fn symmetric_eigenvalues_desc(m: &Matrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(super::symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Eigenpairs of the symmetric part of `m`, descending by eigenvalue.
pub(crate) fn symmetric_eigen_desc(m: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(super::symmetrize(m));
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Matrix::from_columns(
        &idx.iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}
