//! Game instances: parameters, validation, the JSON model file, and seeded
//! random generation.

use std::fmt;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::best_response::{augment_for_max, lqg_best_response, minimizer_initial};
use crate::numerics::{max_abs, spectral_radius, symmetric_eigenvalues_desc, Matrix};

/// Dimensions `(n, m₁, m₂, p₁, p₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub p1: usize,
    pub p2: usize,
}

impl Dims {
    pub fn scalar() -> Self {
        Self {
            n: 1,
            m1: 1,
            m2: 1,
            p1: 1,
            p2: 1,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.n, self.m1, self.m2, self.p1, self.p2
        )
    }
}

impl std::str::FromStr for Dims {
    type Err = String;

    /// Parses `n,m1,m2,p1,p2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("bad dimension {p:?}: {e}"))
            })
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            &[n, m1, m2, p1, p2] if parts.iter().all(|&d| d > 0) => Ok(Self { n, m1, m2, p1, p2 }),
            _ => Err(format!(
                "expected five positive integers n,m1,m2,p1,p2, got {s:?}"
            )),
        }
    }
}

/// A two-player zero-sum LQG game.
///
/// Player 1 (minimizer) applies `u¹` through `b1` and measures `y¹ = c1·x + v¹`;
/// player 2 (maximizer) applies `u²` through `b2` and measures `y² = c2·x + v²`.
/// The stage cost is `xᵀQx + u¹ᵀR¹u¹ + u²ᵀR²u²` with `R² ≺ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub a: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    /// Process noise covariance.
    pub w: Matrix,
    pub v1: Matrix,
    pub v2: Matrix,
    pub q: Matrix,
    pub r1: Matrix,
    pub r2: Matrix,
    pub x0_mean: DVector<f64>,
    pub x0_cov: Matrix,
}

impl GameSpec {
    /// Dimensions read off `a`, `b1`, `b2`, `c1`, `c2`.
    pub fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            m1: self.b1.ncols(),
            m2: self.b2.ncols(),
            p1: self.c1.nrows(),
            p2: self.c2.nrows(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, check: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            check: check.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.check, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model:\n{0}")]
    Validation(ValidationReport),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no bounded maximizer penalty found after {doublings} doublings (last R² = −{last_scale}·I): {reason}")]
    R2SearchFailed {
        doublings: usize,
        last_scale: f64,
        reason: String,
    },
}

const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Clone, Copy)]
enum Sign {
    PositiveSemidefinite,
    PositiveDefinite,
    NegativeDefinite,
}

fn check_symmetric_sign(report: &mut ValidationReport, name: &str, m: &Matrix, sign: Sign) {
    let scale = max_abs(m);
    if max_abs(&(m - m.transpose())) > DEFINITENESS_TOL * scale.max(f64::MIN_POSITIVE) {
        report.push(
            format!("{name} not symmetric"),
            format!("{name} differs from its transpose"),
        );
        return;
    }
    let eig = symmetric_eigenvalues_desc(m);
    let (hi, lo) = (eig[0], eig[eig.len() - 1]);
    let mag = hi.abs().max(lo.abs());
    let (ok, label) = match sign {
        Sign::PositiveSemidefinite => (lo >= -DEFINITENESS_TOL * mag, "PSD"),
        Sign::PositiveDefinite => (mag > 0.0 && lo > DEFINITENESS_TOL * mag, "PD"),
        Sign::NegativeDefinite => (
            mag > 0.0 && hi < -DEFINITENESS_TOL * mag,
            "negative definite",
        ),
    };
    if !ok {
        report.push(
            format!("{name} not {label}"),
            format!("eigenvalues span [{lo:.6e}, {hi:.6e}]"),
        );
    }
}

/// Reports every shape and definiteness violation. Shape problems
/// suppress the definiteness checks of the affected matrix.
pub fn validate(spec: &GameSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let d = spec.dims();
    let shapes: [(&str, &Matrix, usize, usize); 11] = [
        ("A", &spec.a, d.n, d.n),
        ("B1", &spec.b1, d.n, d.m1),
        ("B2", &spec.b2, d.n, d.m2),
        ("C1", &spec.c1, d.p1, d.n),
        ("C2", &spec.c2, d.p2, d.n),
        ("W", &spec.w, d.n, d.n),
        ("V1", &spec.v1, d.p1, d.p1),
        ("V2", &spec.v2, d.p2, d.p2),
        ("Q", &spec.q, d.n, d.n),
        ("R1", &spec.r1, d.m1, d.m1),
        ("R2", &spec.r2, d.m2, d.m2),
    ];
    let mut shape_ok = std::collections::HashMap::new();
    for (name, m, r, c) in shapes {
        let ok = m.shape() == (r, c) && r > 0 && c > 0;
        if !ok {
            report.push(
                "shape mismatch",
                format!("{name} is {}×{}, expected {r}×{c}", m.nrows(), m.ncols()),
            );
        } else if !m.iter().all(|x| x.is_finite()) {
            report.push("non-finite entry", format!("{name} has a non-finite entry"));
        }
        shape_ok.insert(name, ok);
    }
    if spec.x0_mean.len() != d.n {
        report.push(
            "shape mismatch",
            format!(
                "x0_mean has length {}, expected {}",
                spec.x0_mean.len(),
                d.n
            ),
        );
    }
    let x0_ok = spec.x0_cov.shape() == (d.n, d.n);
    if !x0_ok {
        report.push(
            "shape mismatch",
            format!(
                "X0 is {}×{}, expected {}×{}",
                spec.x0_cov.nrows(),
                spec.x0_cov.ncols(),
                d.n,
                d.n
            ),
        );
    }

    let signs = [
        ("W", &spec.w, Sign::PositiveSemidefinite),
        ("Q", &spec.q, Sign::PositiveSemidefinite),
        ("V1", &spec.v1, Sign::PositiveDefinite),
        ("V2", &spec.v2, Sign::PositiveDefinite),
        ("R1", &spec.r1, Sign::PositiveDefinite),
        ("R2", &spec.r2, Sign::NegativeDefinite),
    ];
    for (name, m, sign) in signs {
        if shape_ok[name] {
            check_symmetric_sign(&mut report, name, m, sign);
        }
    }
    if x0_ok && d.n > 0 {
        check_symmetric_sign(&mut report, "X0", &spec.x0_cov, Sign::PositiveSemidefinite);
    }
    report
}

/// On-disk model document. Matrices are row-major nested arrays.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct ModelFile {
    dims: Dims,
    A: Vec<Vec<f64>>,
    B1: Vec<Vec<f64>>,
    B2: Vec<Vec<f64>>,
    C1: Vec<Vec<f64>>,
    C2: Vec<Vec<f64>>,
    W: Vec<Vec<f64>>,
    V1: Vec<Vec<f64>>,
    V2: Vec<Vec<f64>>,
    Q: Vec<Vec<f64>>,
    R1: Vec<Vec<f64>>,
    R2: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    X0: Option<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, ModelError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Parse {
            line: 0,
            column: 0,
            message: format!("field \"{field}\" must be a non-empty rectangular array of rows"),
        });
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Serializes a spec as a JSON model document.
pub fn spec_to_json(spec: &GameSpec) -> String {
    let file = ModelFile {
        dims: spec.dims(),
        A: matrix_to_rows(&spec.a),
        B1: matrix_to_rows(&spec.b1),
        B2: matrix_to_rows(&spec.b2),
        C1: matrix_to_rows(&spec.c1),
        C2: matrix_to_rows(&spec.c2),
        W: matrix_to_rows(&spec.w),
        V1: matrix_to_rows(&spec.v1),
        V2: matrix_to_rows(&spec.v2),
        Q: matrix_to_rows(&spec.q),
        R1: matrix_to_rows(&spec.r1),
        R2: matrix_to_rows(&spec.r2),
        x0_mean: Some(spec.x0_mean.iter().copied().collect()),
        X0: Some(matrix_to_rows(&spec.x0_cov)),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

/// Parses and validates a JSON model document.
pub fn spec_from_json(text: &str) -> Result<GameSpec, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let n = file.dims.n;
    let spec = GameSpec {
        a: rows_to_matrix("A", &file.A)?,
        b1: rows_to_matrix("B1", &file.B1)?,
        b2: rows_to_matrix("B2", &file.B2)?,
        c1: rows_to_matrix("C1", &file.C1)?,
        c2: rows_to_matrix("C2", &file.C2)?,
        w: rows_to_matrix("W", &file.W)?,
        v1: rows_to_matrix("V1", &file.V1)?,
        v2: rows_to_matrix("V2", &file.V2)?,
        q: rows_to_matrix("Q", &file.Q)?,
        r1: rows_to_matrix("R1", &file.R1)?,
        r2: rows_to_matrix("R2", &file.R2)?,
        x0_mean: DVector::from_vec(file.x0_mean.unwrap_or_else(|| vec![0.0; n])),
        x0_cov: match &file.X0 {
            Some(rows) => rows_to_matrix("X0", rows)?,
            None => Matrix::identity(n, n),
        },
    };
    let mut report = validate(&spec);
    if spec.dims() != file.dims {
        report.push(
            "shape mismatch",
            format!(
                "declared dims ({}) disagree with matrices ({})",
                file.dims,
                spec.dims()
            ),
        );
    }
    if !report.ok() {
        return Err(ModelError::Validation(report));
    }
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<GameSpec, ModelError> {
    spec_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_spec(spec: &GameSpec, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, spec_to_json(spec))?;
    Ok(())
}

/// Parameters of the seeded random instance generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomInstanceConfig {
    pub dims: Dims,
    /// Open-loop spectral radius `A` is rescaled to.
    pub spectral_target: f64,
    /// First maximizer penalty scale `c` tried for `R² = −c·I`.
    pub r2_scale_start: f64,
    pub max_doublings: usize,
}

impl Default for RandomInstanceConfig {
    fn default() -> Self {
        Self {
            dims: Dims::scalar(),
            spectral_target: 0.8,
            r2_scale_start: 1.0,
            max_doublings: 30,
        }
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // row-major draw order
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Matrix::from_row_slice(rows, cols, &data)
}

fn gram_plus_jitter(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let g = normal_matrix(rng, dim, dim);
    &g * g.transpose() + Matrix::identity(dim, dim) * 1e-6
}

/// Draws a random game.
///
/// The generator is ChaCha8 seeded with `seed` (via `SeedableRng::seed_from_u64`);
/// standard normals are drawn row-major in the order A, B1, B2, C1, C2, G_W,
/// G_V1, G_V2, G_Q, G_R1, and each covariance or weight is `G·Gᵀ + 1e-6·I`.
/// `A` is rescaled to spectral radius `spectral_target`. `R² = −c·I` where
/// `c` doubles from `r2_scale_start` until the maximizer's first best response
/// has a bounded value.
pub fn random_instance(seed: u64, config: &RandomInstanceConfig) -> Result<GameSpec, ModelError> {
    let d = config.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = normal_matrix(&mut rng, d.n, d.n);
    let rho = spectral_radius(&a);
    if rho > 0.0 {
        a *= config.spectral_target / rho;
    }
    let b1 = normal_matrix(&mut rng, d.n, d.m1);
    let b2 = normal_matrix(&mut rng, d.n, d.m2);
    let c1 = normal_matrix(&mut rng, d.p1, d.n);
    let c2 = normal_matrix(&mut rng, d.p2, d.n);
    let w = gram_plus_jitter(&mut rng, d.n);
    let v1 = gram_plus_jitter(&mut rng, d.p1);
    let v2 = gram_plus_jitter(&mut rng, d.p2);
    let q = gram_plus_jitter(&mut rng, d.n);
    let r1 = gram_plus_jitter(&mut rng, d.m1);

    let mut spec = GameSpec {
        a,
        b1,
        b2,
        c1,
        c2,
        w,
        v1,
        v2,
        q,
        r1,
        r2: -Matrix::identity(d.m2, d.m2) * config.r2_scale_start,
        x0_mean: DVector::zeros(d.n),
        x0_cov: Matrix::identity(d.n, d.n),
    };

    let min_stage = minimizer_initial(&spec).map_err(|e| ModelError::R2SearchFailed {
        doublings: 0,
        last_scale: config.r2_scale_start,
        reason: format!("minimizer's first response failed: {e}"),
    })?;
    let mut scale = config.r2_scale_start;
    let mut last_reason = String::new();
    for doubling in 0..=config.max_doublings {
        spec.r2 = -Matrix::identity(d.m2, d.m2) * scale;
        let plant = augment_for_max(&spec, &min_stage).map_err(|e| ModelError::R2SearchFailed {
            doublings: doubling,
            last_scale: scale,
            reason: e.to_string(),
        })?;
        match lqg_best_response(&plant, &spec.v2) {
            Ok(_) => return Ok(spec),
            Err(e) => last_reason = e.to_string(),
        }
        if doubling < config.max_doublings {
            scale *= 2.0;
        }
    }
    Err(ModelError::R2SearchFailed {
        doublings: config.max_doublings,
        last_scale: scale,
        reason: last_reason,
    })
}
