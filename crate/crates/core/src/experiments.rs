//! Experiment harness: the two-state example game, Monte Carlo validation of
//! analytic costs, the example's data files, and the random-instance suite.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::belief_analysis::{ratios, BeliefError, GramianPair};
use crate::best_response::{
    run_best_response, BestResponseConfig, GameTrace, Player, StageSolution, TraceError,
};
use crate::game_model::{random_instance, GameSpec, ModelError, RandomInstanceConfig};
use crate::numerics::{symmetric_eigen_desc, Matrix, Tolerances};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trace(#[from] Box<TraceError>),
    #[error(transparent)]
    Analysis(#[from] BeliefError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Two-state example with scalar inputs and outputs for both players.
pub fn example_spec() -> GameSpec {
    let one = Matrix::from_element(1, 1, 1.0);
    GameSpec {
        a: Matrix::from_row_slice(2, 2, &[-0.3063, -0.3580, 0.5575, -0.5273]),
        b1: Matrix::from_element(2, 1, 1.0),
        b2: Matrix::from_element(2, 1, 1.0),
        c1: Matrix::from_element(1, 2, 1.0),
        c2: Matrix::from_element(1, 2, 1.0),
        w: Matrix::identity(2, 2),
        v1: one.clone(),
        v2: one.clone(),
        q: Matrix::identity(2, 2),
        r1: one,
        r2: Matrix::from_element(1, 1, -7.5),
        x0_mean: DVector::zeros(2),
        x0_cov: Matrix::identity(2, 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean_cost: f64,
    /// Batch-means standard error of `mean_cost`.
    pub std_error: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub batches: usize,
    pub seed: u64,
}

pub const MC_BATCHES: usize = 100;

/// `S` with `S·Sᵀ = M` for symmetric PSD `M`.
fn psd_sqrt(m: &Matrix) -> Matrix {
    let (values, mut vectors) = symmetric_eigen_desc(m);
    for (j, v) in values.iter().enumerate() {
        vectors.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    vectors
}

fn normal_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)))
}

/// One player's dynamic output-feedback strategy, run as a filter on its own measurements.
struct StrategyFilter<'a> {
    stage: &'a StageSolution,
    z: DVector<f64>,
}

impl<'a> StrategyFilter<'a> {
    fn new(stage: &'a StageSolution) -> Self {
        Self {
            stage,
            z: DVector::zeros(stage.plant.state_dim),
        }
    }

    fn control(&self) -> DVector<f64> {
        self.stage.feedback_gain() * &self.z
    }

    fn update(&mut self, u: &DVector<f64>, y: &DVector<f64>) {
        let p = &self.stage.plant;
        let innovation = y - &p.c_bar * &self.z;
        self.z = &p.a_bar * &self.z + &p.b_bar * u + self.stage.estimator_gain() * innovation;
    }
}

/// Time-averaged stage cost of the game under both players' final strategies.
///
/// The true state starts from `N(x̄₀, X₀)`, each player's filter starts at
/// zero and sees only its own noisy measurements. The first `burn_in` steps
/// are discarded and the remaining ones are split into equal batches.
pub fn monte_carlo_cost(
    spec: &GameSpec,
    trace: &GameTrace,
    steps: usize,
    seed: u64,
    burn_in: usize,
) -> Result<McEstimate, ExperimentError> {
    let (Some(min_stage), Some(max_stage)) = (
        trace.last_stage(Player::Minimizer),
        trace.last_stage(Player::Maximizer),
    ) else {
        return Err(ExperimentError::InvalidArgument(
            "trace needs a stage for each player".into(),
        ));
    };
    if steps <= burn_in {
        return Err(ExperimentError::InvalidArgument(format!(
            "steps ({steps}) must exceed burn-in ({burn_in})"
        )));
    }
    let averaged = steps - burn_in;
    let batches = MC_BATCHES.min(averaged);
    let batch_len = averaged / batches;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sw, sv1, sv2) = (psd_sqrt(&spec.w), psd_sqrt(&spec.v1), psd_sqrt(&spec.v2));
    let n = spec.a.nrows();
    let mut x = &spec.x0_mean + psd_sqrt(&spec.x0_cov) * normal_vector(&mut rng, n);
    let mut player1 = StrategyFilter::new(min_stage);
    let mut player2 = StrategyFilter::new(max_stage);

    let mut batch_means = Vec::with_capacity(batches);
    let mut batch_sum = 0.0;
    let mut in_batch = 0;
    for t in 0..burn_in + batches * batch_len {
        let u1 = player1.control();
        let u2 = player2.control();
        let stage_cost =
            x.dot(&(&spec.q * &x)) + u1.dot(&(&spec.r1 * &u1)) + u2.dot(&(&spec.r2 * &u2));
        let w = &sw * normal_vector(&mut rng, sw.ncols());
        let v1 = &sv1 * normal_vector(&mut rng, sv1.ncols());
        let v2 = &sv2 * normal_vector(&mut rng, sv2.ncols());
        let y1 = &spec.c1 * &x + v1;
        let y2 = &spec.c2 * &x + v2;
        player1.update(&u1, &y1);
        player2.update(&u2, &y2);
        x = &spec.a * &x + &spec.b1 * &u1 + &spec.b2 * &u2 + w;

        if t >= burn_in {
            batch_sum += stage_cost;
            in_batch += 1;
            if in_batch == batch_len {
                batch_means.push(batch_sum / batch_len as f64);
                batch_sum = 0.0;
                in_batch = 0;
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ExperimentError::InvalidArgument(format!(
                "simulated state diverged at step {t}"
            )));
        }
    }

    let b = batch_means.len() as f64;
    let mean = batch_means.iter().sum::<f64>() / b;
    let variance = if batch_means.len() > 1 {
        batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean_cost: mean,
        std_error: (variance / b).sqrt(),
        steps,
        burn_in,
        batches: batch_means.len(),
        seed,
    })
}

/// Files written by [`run_example`] and the data behind them.
pub struct ExampleRun {
    pub trace: GameTrace,
    /// Minimizer Gramians at each order `k`, in order.
    pub minimizer_gramians: Vec<GramianPair>,
    pub files: Vec<PathBuf>,
}

/// Order at which the example's decay figures are reported.
pub const EXAMPLE_DECAY_ORDER: usize = 5;

pub fn example_config() -> BestResponseConfig {
    BestResponseConfig {
        max_k: 10,
        tol: 1e-6,
        min_k: EXAMPLE_DECAY_ORDER,
        ..Default::default()
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Runs the example game and writes `costs.csv`, `gramian_decay.csv`,
/// `cholesky_compare.csv`, `manifest.json` and the game itself as
/// `model.json` into `output_dir`.
pub fn run_example(
    output_dir: &Path,
    config: &BestResponseConfig,
) -> Result<ExampleRun, ExperimentError> {
    let spec = example_spec();
    let trace = run_best_response(&spec, config)?;
    std::fs::create_dir_all(output_dir)?;

    let mut costs = String::from("iteration,player,cost\n");
    for stage in &trace.stages {
        writeln!(
            costs,
            "{},{},{}",
            stage.order_k(),
            stage.player().index(),
            sci(stage.cost)
        )
        .unwrap();
    }

    let mut decay = String::from("player,k,index,eigenvalue_ratio\n");
    let mut minimizer_gramians = Vec::new();
    let mut compare = String::from("index,delta_ratio,gramian_ratio\n");
    for stage in &trace.stages {
        let p = &stage.plant;
        let gramians = GramianPair::new(&p.a_bar, &p.b_bar, &p.c_bar)?;
        let magnitudes: Vec<f64> = gramians.eigenvalues_c.iter().map(|v| v.abs()).collect();
        for (i, r) in ratios(&magnitudes).iter().enumerate() {
            writeln!(
                decay,
                "{},{},{},{}",
                stage.player().index(),
                stage.order_k(),
                i + 1,
                sci(*r)
            )
            .unwrap();
        }
        if stage.player() == Player::Minimizer {
            if stage.order_k() == EXAMPLE_DECAY_ORDER.min(config.max_k) {
                let mut report = crate::belief_analysis::cholesky_decay_estimates(
                    &crate::numerics::eigenvalues(&p.a_bar),
                )?;
                report.gramian_ratios = ratios(&gramians.eigenvalues_c);
                for i in 0..report.deltas.len() {
                    writeln!(
                        compare,
                        "{},{},{}",
                        i + 1,
                        sci(report.delta_ratios[i]),
                        sci(report.gramian_ratios[i])
                    )
                    .unwrap();
                }
            }
            minimizer_gramians.push(gramians);
        }
    }

    let manifest = serde_json::json!({
        "command": "example",
        "crate_version": env!("CARGO_PKG_VERSION"),
        "best_response": config,
        "tolerances": config.tolerances,
        "decay_order": EXAMPLE_DECAY_ORDER,
        "converged": trace.converged,
        "final_relative_change": trace.final_relative_change,
        "stages": trace.stages.len(),
        "files": ["costs.csv", "gramian_decay.csv", "cholesky_compare.csv", "model.json"],
        "csv_number_format": "17 significant digits, scientific",
    });
    let files = [
        ("costs.csv", costs),
        ("gramian_decay.csv", decay),
        ("cholesky_compare.csv", compare),
        (
            "manifest.json",
            serde_json::to_string_pretty(&manifest)? + "\n",
        ),
        ("model.json", crate::game_model::spec_to_json(&spec)),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        let path = output_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(ExampleRun {
        trace,
        minimizer_gramians,
        files: written,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub count: usize,
    pub seed: u64,
    /// Best-response orders per player for each instance.
    pub iterations: usize,
    /// Thresholds, descending.
    pub thresholds: Vec<f64>,
    pub parallelism: usize,
    pub instance: RandomInstanceConfig,
    #[serde(skip)]
    pub tolerances: Tolerances,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 1,
            iterations: 5,
            thresholds: vec![1e-5, 1e-10],
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            instance: RandomInstanceConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

pub const SUITE_QUANTITIES: [&str; 6] = ["Wc1", "Wo1", "Wc2", "Wo2", "HSV1", "HSV2"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionRow {
    pub quantity: String,
    /// Number of pooled normalized values.
    pub values: usize,
    /// Fraction of values strictly below each threshold.
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteFailure {
    pub index: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteStats {
    pub instance_count: usize,
    pub succeeded: usize,
    pub iterations_per_instance: usize,
    pub thresholds: Vec<f64>,
    pub proportions: Vec<ProportionRow>,
    pub failures: Vec<SuiteFailure>,
    pub notes: Vec<String>,
}

impl SuiteStats {
    pub fn row(&self, quantity: &str) -> Option<&ProportionRow> {
        self.proportions.iter().find(|r| r.quantity == quantity)
    }

    /// Comma-separated `quantity,threshold,fraction,values` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,threshold,fraction,values\n");
        for row in &self.proportions {
            for (t, f) in self.thresholds.iter().zip(&row.fractions) {
                writeln!(
                    out,
                    "{},{},{},{}",
                    row.quantity,
                    sci(*t),
                    sci(*f),
                    row.values
                )
                .unwrap();
            }
        }
        out
    }
}

/// Absolute values divided by the largest absolute value.
pub fn normalized_magnitudes(values: &[f64]) -> Option<Vec<f64>> {
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (top > 0.0 && top.is_finite()).then(|| values.iter().map(|v| v.abs() / top).collect())
}

fn suite_instance(seed: u64, config: &SuiteConfig) -> Result<Vec<Vec<f64>>, String> {
    let spec = random_instance(seed, &config.instance).map_err(|e| e.to_string())?;
    let br = BestResponseConfig {
        max_k: config.iterations,
        stop_on_convergence: false,
        tolerances: config.tolerances,
        ..Default::default()
    };
    let trace = run_best_response(&spec, &br).map_err(|e| e.to_string())?;
    let mut per_player = Vec::new();
    for player in [Player::Minimizer, Player::Maximizer] {
        let stage = trace.last_stage(player).ok_or("missing stage")?;
        let p = &stage.plant;
        per_player.push(GramianPair::new(&p.a_bar, &p.b_bar, &p.c_bar).map_err(|e| e.to_string())?);
    }
    let lists = [
        &per_player[0].eigenvalues_c,
        &per_player[0].eigenvalues_o,
        &per_player[1].eigenvalues_c,
        &per_player[1].eigenvalues_o,
        &per_player[0].hankel,
        &per_player[1].hankel,
    ];
    lists
        .iter()
        .zip(SUITE_QUANTITIES)
        .map(|(values, name)| {
            normalized_magnitudes(values).ok_or_else(|| format!("{name} spectrum is zero"))
        })
        .collect()
}

/// Per-instance seeds: successive draws of a ChaCha8 stream seeded with `seed`.
pub fn suite_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random::<u64>()).collect()
}

/// Runs `config.count` random games and pools normalized Gramian eigenvalues
/// and Hankel values at each player's final stage.
pub fn run_random_suite(config: &SuiteConfig) -> Result<SuiteStats, ExperimentError> {
    if config.count == 0 || config.iterations == 0 || config.parallelism == 0 {
        return Err(ExperimentError::InvalidArgument(
            "count, iterations and parallelism must be positive".into(),
        ));
    }
    if config.thresholds.windows(2).any(|w| w[0] < w[1]) {
        return Err(ExperimentError::InvalidArgument(
            "thresholds must be descending".into(),
        ));
    }
    let seeds = suite_seeds(config.seed, config.count);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| ExperimentError::InvalidArgument(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| suite_instance(s, config))
            .collect()
    });

    let mut counts = vec![vec![0usize; config.thresholds.len()]; SUITE_QUANTITIES.len()];
    let mut totals = vec![0usize; SUITE_QUANTITIES.len()];
    let mut failures = Vec::new();
    for (index, (result, &seed)) in results.into_iter().zip(&seeds).enumerate() {
        match result {
            Ok(lists) => {
                for (q, list) in lists.iter().enumerate() {
                    totals[q] += list.len();
                    for (t, threshold) in config.thresholds.iter().enumerate() {
                        counts[q][t] += list.iter().filter(|&&v| v < *threshold).count();
                    }
                }
            }
            Err(reason) => failures.push(SuiteFailure {
                index,
                seed,
                reason,
            }),
        }
    }
    let proportions = SUITE_QUANTITIES
        .iter()
        .enumerate()
        .map(|(q, name)| ProportionRow {
            quantity: name.to_string(),
            values: totals[q],
            fractions: counts[q]
                .iter()
                .map(|&c| {
                    if totals[q] == 0 {
                        0.0
                    } else {
                        c as f64 / totals[q] as f64
                    }
                })
                .collect(),
        })
        .collect();
    Ok(SuiteStats {
        instance_count: config.count,
        succeeded: config.count - failures.len(),
        iterations_per_instance: config.iterations,
        thresholds: config.thresholds.clone(),
        proportions,
        failures,
        notes: vec![
            "W, V1, V2, Q, R1 are G·Gᵀ + 1e-6·I with standard normal G; R2 = −c·I with c doubled until the maximizer's first response is bounded".into(),
            "each spectrum is divided by its largest magnitude; values are pooled over instances; comparisons are strict".into(),
        ],
    })
}
