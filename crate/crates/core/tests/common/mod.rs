//! Randomized property checks shared by the property and acceptance targets.
//! Each check runs a fixed-seed proptest runner.

#![allow(dead_code)]

use asymlq::belief_analysis::{
    bilinear_transform, controllability_gramian, hankel_singular_values, observability_gramian,
};
use asymlq::numerics::{
    max_abs, solve_dare_control, solve_dare_filter, solve_dlyap, spectral_radius, Matrix, Role,
};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

pub const CASES: u32 = 100;

pub fn runner(seed: u8) -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        max_global_rejects: 10_000,
        ..Config::default()
    };
    TestRunner::new_with_rng(
        config,
        TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]),
    )
}

/// Raw entries for a matrix, drawn uniformly from [-1, 1].
fn entries(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-1.0..1.0f64, len)
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_row_slice(rows, cols, data)
}

fn scaled_to_radius(a: Matrix, radius: f64) -> Matrix {
    let rho = spectral_radius(&a);
    if rho > 0.0 {
        a * (radius / rho)
    } else {
        a
    }
}

fn gram(g: &Matrix, jitter: f64) -> Matrix {
    g * g.transpose() + Matrix::identity(g.nrows(), g.nrows()) * jitter
}

/// `(n, m, p, A entries, B entries, C entries, extra n×n entries, radius)`.
#[allow(clippy::type_complexity)]
fn system(
    max_n: usize,
) -> impl Strategy<
    Value = (
        usize,
        usize,
        usize,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        f64,
    ),
> {
    (1..=max_n, 1..=2usize, 1..=2usize).prop_flat_map(|(n, m, p)| {
        (
            Just(n),
            Just(m),
            Just(p),
            entries(n * n),
            entries(n * m),
            entries(p * n),
            entries(n * n),
            0.1..0.9f64,
        )
    })
}

fn check(result: Result<(), TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    result.map_err(|e| e.to_string())
}

/// The filter Riccati solution equals the control solution of the dual system.
pub fn duality(seed: u8) -> Result<(), String> {
    check(runner(seed).run(
        &(system(6), 0.1..1.2f64),
        |((n, _, p, a, _, c, g, _), radius)| {
            let a = scaled_to_radius(matrix(n, n, &a), radius);
            let c = matrix(p, n, &c);
            let w = gram(&matrix(n, n, &g), 0.1);
            let v = Matrix::identity(p, p);
            let filter = solve_dare_filter(&a, &c, &w, &v)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let control =
                solve_dare_control(&a.transpose(), &c.transpose(), &w, &v, Role::Minimizer)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let scale = max_abs(&control.p).max(1.0);
            prop_assert!(max_abs(&(&filter.p - &control.p)) <= 1e-8 * scale);
            prop_assert!(max_abs(&(&filter.gain + control.gain.transpose())) <= 1e-8 * scale);
            Ok(())
        },
    ))
}

/// Hankel singular values are unchanged by a state-space similarity transform.
pub fn hankel_similarity(seed: u8) -> Result<(), String> {
    check(
        runner(seed).run(&system(6), |(n, m, p, a, b, c, t, radius)| {
            let a = scaled_to_radius(matrix(n, n, &a), radius);
            let (b, c) = (matrix(n, m, &b), matrix(p, n, &c));
            let t = Matrix::identity(n, n) + matrix(n, n, &t) * 0.5;
            let t_inv = t.clone().try_inverse();
            prop_assume!(t_inv.is_some());
            let t_inv = t_inv.unwrap();
            prop_assume!(asymlq::numerics::norm_inf(&t) * asymlq::numerics::norm_inf(&t_inv) < 1e3);

            let sigma = |a: &Matrix, b: &Matrix, c: &Matrix| {
                let wc = controllability_gramian(a, b).unwrap();
                let wo = observability_gramian(a, c).unwrap();
                hankel_singular_values(&wc, &wo).unwrap()
            };
            let original = sigma(&a, &b, &c);
            let transformed = sigma(&(&t * &a * &t_inv), &(&t * &b), &(&c * &t_inv));
            let top = original[0].max(f64::MIN_POSITIVE);
            for (x, y) in original.iter().zip(&transformed) {
                prop_assert!((x - y).abs() <= 1e-8 * top, "{x} vs {y}");
            }
            Ok(())
        }),
    )
}

/// Continuous Gramian `G` from `A·G + G·Aᵀ + B·Bᵀ = 0` via the Kronecker form.
pub fn continuous_gramian_kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let identity = Matrix::identity(n, n);
    let op = identity.kronecker(a) + a.kronecker(&identity);
    let rhs = -(b * b.transpose());
    let rhs = Matrix::from_column_slice(n * n, 1, rhs.as_slice());
    let g = op
        .lu()
        .solve(&rhs)
        .expect("continuous Lyapunov operator is invertible");
    Matrix::from_column_slice(n, n, g.as_slice())
}

/// The bilinear transform maps the discrete Gramian to the identical continuous one.
pub fn bilinear_preserves_gramian(seed: u8) -> Result<(), String> {
    check(
        runner(seed).run(&system(6), |(n, m, _, a, b, _, _, radius)| {
            let a = scaled_to_radius(matrix(n, n, &a), radius);
            let b = matrix(n, m, &b);
            let discrete = controllability_gramian(&a, &b).unwrap();
            let (a_c, b_t) = bilinear_transform(&a, &b).unwrap();
            let continuous = continuous_gramian_kronecker(&a_c, &b_t);
            prop_assert!(
                max_abs(&(&continuous - &discrete))
                    <= 1e-8 * max_abs(&discrete).max(f64::MIN_POSITIVE),
                "{continuous} vs {discrete}"
            );
            Ok(())
        }),
    )
}

/// `Σ (Aᵀ)ᵗ·Q·Aᵗ` summed until the terms stop contributing.
pub fn lyapunov_series(a: &Matrix, q: &Matrix) -> Matrix {
    let mut sum = Matrix::zeros(a.nrows(), a.nrows());
    let mut term = q.clone();
    for _ in 0..200_000 {
        sum += &term;
        if max_abs(&term) <= 1e-20 * max_abs(&sum) {
            break;
        }
        term = a.transpose() * term * a;
    }
    sum
}

/// The Lyapunov solver agrees with the truncated series.
pub fn lyapunov_matches_series(seed: u8) -> Result<(), String> {
    check(
        runner(seed).run(&system(6), |(n, _, _, a, _, _, g, radius)| {
            let a = scaled_to_radius(matrix(n, n, &a), radius);
            let q = gram(&matrix(n, n, &g), 0.0);
            let p = solve_dlyap(&a, &q).unwrap();
            let oracle = lyapunov_series(&a, &q);
            prop_assert!(max_abs(&(&p - &oracle)) <= 1e-8 * max_abs(&oracle).max(1.0));
            Ok(())
        }),
    )
}
