use super::{
    max_abs, norm_inf, require_shape, require_square, spectral_radius, symmetrize, Matrix,
    NumericsError, Result, Tolerances,
};

const MAX_DOUBLINGS: usize = 64;
const REFINEMENT_SWEEPS: usize = 2;

/// Solves `P − AᵀPA = Q` for stable `A`.
pub fn solve_dlyap(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    solve_dlyap_with(a, q, &Tolerances::default())
}

pub fn solve_dlyap_with(a: &Matrix, q: &Matrix, tol: &Tolerances) -> Result<Matrix> {
    let n = require_square("solve_dlyap", "A", a)?;
    require_shape("solve_dlyap", "Q", q, n, n)?;
    let rho = spectral_radius(a);
    if rho.is_nan() || rho >= 1.0 {
        return Err(NumericsError::NotStable {
            spectral_radius: rho,
        });
    }

    let mut p = smith(a, &symmetrize(q))?;
    let scale = norm_inf(q).max(1.0);
    let mut residual = lyap_residual(a, &p, q);
    for _ in 0..REFINEMENT_SWEEPS {
        if residual <= 1e-3 * tol.residual * scale {
            break;
        }
        // P + ΔP with ΔP − AᵀΔPA = Q − (P − AᵀPA)
        let rhs = q - (&p - a.transpose() * &p * a);
        p += smith(a, &symmetrize(&rhs))?;
        p = symmetrize(&p);
        residual = lyap_residual(a, &p, q);
    }
    if residual > tol.residual * scale {
        return Err(NumericsError::NoConvergence {
            solver: "solve_dlyap",
            iterations: MAX_DOUBLINGS,
            detail: format!("residual {residual:.3e}"),
        });
    }
    Ok(p)
}

fn lyap_residual(a: &Matrix, p: &Matrix, q: &Matrix) -> f64 {
    norm_inf(&(p - a.transpose() * p * a - q))
}

/// Squared Smith iteration: `S ← S + (A^{2^j})ᵀ S A^{2^j}`.
fn smith(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let mut p = q.clone();
    let mut power = a.clone();
    for _ in 0..MAX_DOUBLINGS {
        let increment = power.transpose() * &p * &power;
        let done =
            max_abs(&increment) <= f64::EPSILON * 1e-2 * max_abs(&p) || max_abs(&power) == 0.0;
        p += increment;
        p = symmetrize(&p);
        if done {
            return Ok(p);
        }
        power = &power * &power;
        if !power.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    Err(NumericsError::NoConvergence {
        solver: "solve_dlyap",
        iterations: MAX_DOUBLINGS,
        detail: "Smith doubling did not settle".into(),
    })
}
