use serde::{Deserialize, Serialize};

use super::{
    max_abs, require_shape, require_square, solve_checked, spectral_radius,
    symmetric_eigenvalues_desc, symmetrize, Matrix, NumericsError, Result, Tolerances,
};

/// Which side of the zero-sum objective a control Riccati equation serves.
///
/// The minimizer needs `R + BᵀPB ≻ 0`; the maximizer needs `R + BᵀPB ≺ 0`,
/// otherwise its value is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Minimizer,
    Maximizer,
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: Matrix,
    /// `K` for the control form (`u = Kx`), `L` for the filter form.
    pub gain: Matrix,
    pub closed_loop_spectral_radius: f64,
    pub iterations_used: usize,
    /// Max-abs difference between `P` and the Riccati operator applied to `P`.
    pub residual: f64,
}

/// Stabilizing solution of
/// `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA` with `K = −(R + BᵀPB)⁻¹BᵀPA`.
pub fn solve_dare_control(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    role: Role,
) -> Result<RiccatiSolution> {
    solve_dare_control_with(a, b, q, r, role, &Tolerances::default())
}

pub fn solve_dare_control_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    role: Role,
    tol: &Tolerances,
) -> Result<RiccatiSolution> {
    const OP: &str = "solve_dare_control";
    let n = require_square(OP, "A", a)?;
    let m = b.ncols();
    require_shape(OP, "B", b, n, m)?;
    require_shape(OP, "Q", q, n, n)?;
    require_shape(OP, "R", r, m, m)?;
    check_sign(&symmetrize(r), role, "R")?;

    let q = symmetrize(q);
    let at = a.transpose();
    let bt = b.transpose();
    let blowup = 1e12 * max_abs(&q).max(1.0);

    // one application of the Riccati operator; returns (next P, gain at P)
    let step = |p: &Matrix| -> Result<(Matrix, Matrix)> {
        let pb = p * b;
        let s = symmetrize(&(r + &bt * &pb));
        check_sign(&s, role, "R + BᵀPB")?;
        let k = -solve_checked(&s, &(pb.transpose() * a), tol.max_condition, OP)?;
        let next = &q + &at * p * a + &at * &pb * &k;
        Ok((symmetrize(&next), k))
    };

    let mut p = q.clone();
    let mut iterations = 0;
    loop {
        if iterations >= tol.riccati_max_iter {
            return Err(NumericsError::NoConvergence {
                solver: OP,
                iterations,
                detail: "iteration budget exhausted".into(),
            });
        }
        iterations += 1;
        let (next, _) = step(&p)?;
        let size = max_abs(&next);
        if !size.is_finite() || size > blowup {
            return Err(diverged(role, OP, iterations));
        }
        let diff = max_abs(&(&next - &p));
        p = next;
        if diff <= tol.riccati_step * size.max(1.0) {
            break;
        }
    }

    let (next, gain) = step(&p)?;
    let residual = max_abs(&(&next - &p));
    let rho = spectral_radius(&(a + b * &gain));
    if rho.is_nan() || rho >= 1.0 {
        return Err(NumericsError::NotStabilizing {
            spectral_radius: rho,
        });
    }
    Ok(RiccatiSolution {
        p,
        gain,
        closed_loop_spectral_radius: rho,
        iterations_used: iterations,
        residual,
    })
}

/// Stabilizing solution of the filter Riccati equation
/// `Σ = W + AΣAᵀ − AΣCᵀ(V + CΣCᵀ)⁻¹CΣAᵀ` with `L = AΣCᵀ(V + CΣCᵀ)⁻¹`.
pub fn solve_dare_filter(
    a: &Matrix,
    c: &Matrix,
    w_eff: &Matrix,
    v: &Matrix,
) -> Result<RiccatiSolution> {
    solve_dare_filter_with(a, c, w_eff, v, &Tolerances::default())
}

pub fn solve_dare_filter_with(
    a: &Matrix,
    c: &Matrix,
    w_eff: &Matrix,
    v: &Matrix,
    tol: &Tolerances,
) -> Result<RiccatiSolution> {
    const OP: &str = "solve_dare_filter";
    let n = require_square(OP, "A", a)?;
    let p = c.nrows();
    require_shape(OP, "C", c, p, n)?;
    require_shape(OP, "W", w_eff, n, n)?;
    require_shape(OP, "V", v, p, p)?;
    let v = symmetrize(v);
    check_sign(&v, Role::Minimizer, "V")?;
    let w = symmetrize(w_eff);
    if let Some(&min) = symmetric_eigenvalues_desc(&w).last() {
        if min < -1e-10 * max_abs(&w).max(1.0) {
            return Err(NumericsError::Definiteness {
                what: "W",
                property: "positive semidefinite",
            });
        }
    }

    let at = a.transpose();
    let ct = c.transpose();
    let blowup = 1e12 * max_abs(&w).max(1.0);

    let step = |sigma: &Matrix| -> Result<(Matrix, Matrix)> {
        let a_sigma_ct = a * sigma * &ct;
        let innovation = symmetrize(&(&v + c * sigma * &ct));
        // L = AΣCᵀ·S⁻¹, computed as (S⁻¹·CΣAᵀ)ᵀ since S is symmetric
        let l =
            solve_checked(&innovation, &a_sigma_ct.transpose(), tol.max_condition, OP)?.transpose();
        let next = &w + a * sigma * &at - &l * a_sigma_ct.transpose();
        Ok((symmetrize(&next), l))
    };

    let mut sigma = w.clone();
    let mut iterations = 0;
    loop {
        if iterations >= tol.riccati_max_iter {
            return Err(NumericsError::NoConvergence {
                solver: OP,
                iterations,
                detail: "iteration budget exhausted".into(),
            });
        }
        iterations += 1;
        let (next, _) = step(&sigma)?;
        let size = max_abs(&next);
        if !size.is_finite() || size > blowup {
            return Err(NumericsError::NoConvergence {
                solver: OP,
                iterations,
                detail: "error covariance diverged".into(),
            });
        }
        let diff = max_abs(&(&next - &sigma));
        sigma = next;
        if diff <= tol.riccati_step * size.max(1.0) {
            break;
        }
    }

    let (next, gain) = step(&sigma)?;
    let residual = max_abs(&(&next - &sigma));
    let rho = spectral_radius(&(a - &gain * c));
    if rho.is_nan() || rho >= 1.0 {
        return Err(NumericsError::NotStabilizing {
            spectral_radius: rho,
        });
    }
    Ok(RiccatiSolution {
        p: sigma,
        gain,
        closed_loop_spectral_radius: rho,
        iterations_used: iterations,
        residual,
    })
}

fn check_sign(s: &Matrix, role: Role, what: &'static str) -> Result<()> {
    let eig = symmetric_eigenvalues_desc(s);
    let ok = match role {
        Role::Minimizer => eig.last().is_some_and(|&l| l > 0.0),
        Role::Maximizer => eig.first().is_some_and(|&l| l < 0.0),
    };
    if ok {
        return Ok(());
    }
    match (role, what) {
        (Role::Maximizer, "R + BᵀPB") => Err(NumericsError::ValueUnbounded {
            detail: format!(
                "R + BᵀPB lost negative definiteness (largest eigenvalue {:.3e}); the maximizer input penalty is too small",
                eig[0]
            ),
        }),
        (Role::Minimizer, "R + BᵀPB") => Err(NumericsError::NoConvergence {
            solver: "solve_dare_control",
            iterations: 0,
            detail: "R + BᵀPB lost positive definiteness".into(),
        }),
        (Role::Minimizer, _) => Err(NumericsError::Definiteness {
            what,
            property: "positive definite",
        }),
        (Role::Maximizer, _) => Err(NumericsError::Definiteness {
            what,
            property: "negative definite",
        }),
    }
}

fn diverged(role: Role, solver: &'static str, iterations: usize) -> NumericsError {
    match role {
        Role::Maximizer => NumericsError::ValueUnbounded {
            detail: format!("Riccati iterate diverged after {iterations} iterations"),
        },
        Role::Minimizer => NumericsError::NoConvergence {
            solver,
            iterations,
            detail: "Riccati iterate diverged".into(),
        },
    }
}
