//! Alternating best responses between the minimizer and the maximizer.
//!
//! Each best response is an LQG problem on an augmented plant whose state
//! stacks the true state with the opponent's current belief state. Against
//! an opponent stage with plant `(Ā, B̄, C̄)`, gains `K`, `L`, and input
//! matrix `Bⱼ`, the responding player sees
//!
//! ```text
//! Ā' = [ A      Bⱼ·K          ]    B̄' = [Bᵢ; 0]    C̄' = [Cᵢ 0]
//!      [ L·Cⱼ   Ā + B̄·K − L·C̄ ]
//! F' = diag(I, L)    W̄' = diag(W, Vⱼ)    Q̄' = diag(Q, KᵀRⱼK)
//! ```
//!
//! so with the minimizer moving first, player 1 at order `k` has a
//! `(2k−1)·n` state and player 2 has `2k·n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game_model::GameSpec;
use crate::numerics::{
    block2, block_diag, solve_dare_control_with, solve_dare_filter_with, solve_dlyap_with,
    spectral_radius, Matrix, NumericsError, RiccatiSolution, Role, Tolerances,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    /// Player 1.
    Minimizer,
    /// Player 2.
    Maximizer,
}

impl Player {
    pub fn index(self) -> usize {
        match self {
            Player::Minimizer => 1,
            Player::Maximizer => 2,
        }
    }

    pub fn role(self) -> Role {
        match self {
            Player::Minimizer => Role::Minimizer,
            Player::Maximizer => Role::Maximizer,
        }
    }

    pub fn opponent(self) -> Player {
        match self {
            Player::Minimizer => Player::Maximizer,
            Player::Maximizer => Player::Minimizer,
        }
    }

    fn input(self, spec: &GameSpec) -> &Matrix {
        match self {
            Player::Minimizer => &spec.b1,
            Player::Maximizer => &spec.b2,
        }
    }

    fn output(self, spec: &GameSpec) -> &Matrix {
        match self {
            Player::Minimizer => &spec.c1,
            Player::Maximizer => &spec.c2,
        }
    }

    pub fn measurement_noise(self, spec: &GameSpec) -> &Matrix {
        match self {
            Player::Minimizer => &spec.v1,
            Player::Maximizer => &spec.v2,
        }
    }

    fn input_weight(self, spec: &GameSpec) -> &Matrix {
        match self {
            Player::Minimizer => &spec.r1,
            Player::Maximizer => &spec.r2,
        }
    }
}

impl std::fmt::Display for Player {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Player::Minimizer => write!(f, "minimizer"),
            Player::Maximizer => write!(f, "maximizer"),
        }
    }
}

/// One player's augmented belief dynamics
/// `X⁺ = Ā·X + B̄·u + F·w̃`, `y = C̄·X + v` with `E[w̃w̃ᵀ] = W̄`
/// and stage cost `XᵀQ̄X + uᵀRu`.
#[derive(Debug, Clone)]
pub struct AugmentedPlant {
    pub player: Player,
    pub order_k: usize,
    pub a_bar: Matrix,
    pub b_bar: Matrix,
    pub c_bar: Matrix,
    pub f: Matrix,
    pub w_bar: Matrix,
    pub q_bar: Matrix,
    pub r: Matrix,
    pub state_dim: usize,
}

/// One best response: LQG gains, Riccati solutions, the doubled closed loop
/// over `[X; z]`, and its average cost.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub plant: AugmentedPlant,
    /// Control Riccati solution `P`; its gain is the feedback `K`.
    pub control: RiccatiSolution,
    /// Filter Riccati solution `Σ`; its gain is the estimator `L`.
    pub filter: RiccatiSolution,
    pub closed_loop_a: Matrix,
    pub closed_loop_f: Matrix,
    pub w_tilde: Matrix,
    pub q_tilde: Matrix,
    pub closed_loop_spectral_radius: f64,
    /// `Tr(P̃·W̃)`.
    pub cost: f64,
    /// `Tr(Σ̃·Q̃)`, the dual route to the same cost.
    pub cost_dual: f64,
}

impl StageSolution {
    pub fn player(&self) -> Player {
        self.plant.player
    }

    pub fn order_k(&self) -> usize {
        self.plant.order_k
    }

    pub fn feedback_gain(&self) -> &Matrix {
        &self.control.gain
    }

    pub fn estimator_gain(&self) -> &Matrix {
        &self.filter.gain
    }

    /// `|Tr(P̃W̃) − Tr(Σ̃Q̃)| / max(1, |Tr(P̃W̃)|)`.
    pub fn cost_route_gap(&self) -> f64 {
        (self.cost - self.cost_dual).abs() / self.cost.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Error)]
pub enum BestResponseError {
    #[error("{player} at k={k}: {stage} failed: {source}")]
    Solver {
        player: Player,
        k: usize,
        stage: &'static str,
        #[source]
        source: NumericsError,
    },
    #[error("expected a {expected} stage, got a {got} stage")]
    WrongPlayer { expected: Player, got: Player },
}

impl BestResponseError {
    /// True when the maximizer's value was found to be unbounded.
    pub fn is_value_unbounded(&self) -> bool {
        matches!(
            self,
            BestResponseError::Solver {
                source: NumericsError::ValueUnbounded { .. },
                ..
            }
        )
    }

    pub fn numerics(&self) -> Option<&NumericsError> {
        match self {
            BestResponseError::Solver { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Plant faced by `player` when the opponent plays the zero strategy.
pub fn initial_plant(spec: &GameSpec, player: Player) -> AugmentedPlant {
    let n = spec.a.nrows();
    AugmentedPlant {
        player,
        order_k: 1,
        a_bar: spec.a.clone(),
        b_bar: player.input(spec).clone(),
        c_bar: player.output(spec).clone(),
        f: Matrix::identity(n, n),
        w_bar: spec.w.clone(),
        q_bar: spec.q.clone(),
        r: player.input_weight(spec).clone(),
        state_dim: n,
    }
}

/// Plant faced by the opponent of `stage`'s player when that stage's strategy is fixed.
fn augment_against(
    spec: &GameSpec,
    stage: &StageSolution,
    order_k: usize,
) -> Result<AugmentedPlant, BestResponseError> {
    let opponent = stage.player();
    let player = opponent.opponent();
    let plant = &stage.plant;
    let (k, l) = (stage.feedback_gain(), stage.estimator_gain());
    let n = spec.a.nrows();
    let wrap = |source| BestResponseError::Solver {
        player,
        k: order_k,
        stage: "augmentation",
        source,
    };

    let a_bar = block2(
        &spec.a,
        &(opponent.input(spec) * k),
        &(l * opponent.output(spec)),
        &(&plant.a_bar + &plant.b_bar * k - l * &plant.c_bar),
    )
    .map_err(wrap)?;
    let dim = a_bar.nrows();
    let mut b_bar = Matrix::zeros(dim, player.input(spec).ncols());
    b_bar
        .view_mut((0, 0), (n, b_bar.ncols()))
        .copy_from(player.input(spec));
    let mut c_bar = Matrix::zeros(player.output(spec).nrows(), dim);
    c_bar
        .view_mut((0, 0), (c_bar.nrows(), n))
        .copy_from(player.output(spec));
    let f = block_diag(&[&Matrix::identity(n, n), l]);
    let w_bar = block_diag(&[&spec.w, opponent.measurement_noise(spec)]);
    let opponent_cost = k.transpose() * opponent.input_weight(spec) * k;
    let q_bar = block_diag(&[&spec.q, &opponent_cost]);

    Ok(AugmentedPlant {
        player,
        order_k,
        a_bar,
        b_bar,
        c_bar,
        f,
        w_bar,
        q_bar,
        r: player.input_weight(spec).clone(),
        state_dim: dim,
    })
}

/// The maximizer's plant at the same order as the minimizer stage `prev_min`.
pub fn augment_for_max(
    spec: &GameSpec,
    prev_min: &StageSolution,
) -> Result<AugmentedPlant, BestResponseError> {
    if prev_min.player() != Player::Minimizer {
        return Err(BestResponseError::WrongPlayer {
            expected: Player::Minimizer,
            got: prev_min.player(),
        });
    }
    augment_against(spec, prev_min, prev_min.order_k())
}

/// The minimizer's plant at order `k + 1` against the maximizer stage `prev_max` at order `k`.
pub fn augment_for_min(
    spec: &GameSpec,
    prev_max: &StageSolution,
) -> Result<AugmentedPlant, BestResponseError> {
    if prev_max.player() != Player::Maximizer {
        return Err(BestResponseError::WrongPlayer {
            expected: Player::Maximizer,
            got: prev_max.player(),
        });
    }
    augment_against(spec, prev_max, prev_max.order_k() + 1)
}

/// The minimizer's LQG response to a zero maximizer strategy.
pub fn minimizer_initial(spec: &GameSpec) -> Result<StageSolution, BestResponseError> {
    lqg_best_response(&initial_plant(spec, Player::Minimizer), &spec.v1)
}

pub fn lqg_best_response(
    plant: &AugmentedPlant,
    v_own: &Matrix,
) -> Result<StageSolution, BestResponseError> {
    lqg_best_response_with(plant, v_own, &Tolerances::default())
}

/// Solves the plant's LQG problem and assembles the doubled closed loop.
pub fn lqg_best_response_with(
    plant: &AugmentedPlant,
    v_own: &Matrix,
    tol: &Tolerances,
) -> Result<StageSolution, BestResponseError> {
    let wrap = |stage: &'static str| {
        move |source| BestResponseError::Solver {
            player: plant.player,
            k: plant.order_k,
            stage,
            source,
        }
    };
    let control = solve_dare_control_with(
        &plant.a_bar,
        &plant.b_bar,
        &plant.q_bar,
        &plant.r,
        plant.player.role(),
        tol,
    )
    .map_err(wrap("control Riccati"))?;
    let w_eff = &plant.f * &plant.w_bar * plant.f.transpose();
    let filter = solve_dare_filter_with(&plant.a_bar, &plant.c_bar, &w_eff, v_own, tol)
        .map_err(wrap("filter Riccati"))?;

    let (k, l) = (&control.gain, &filter.gain);
    let closed_loop_a = block2(
        &plant.a_bar,
        &(&plant.b_bar * k),
        &(l * &plant.c_bar),
        &(&plant.a_bar + &plant.b_bar * k - l * &plant.c_bar),
    )
    .map_err(wrap("closed loop"))?;
    let closed_loop_f = block_diag(&[&plant.f, l]);
    let noise = block_diag(&[&plant.w_bar, v_own]);
    let w_tilde = &closed_loop_f * noise * closed_loop_f.transpose();
    let q_tilde = block_diag(&[&plant.q_bar, &(k.transpose() * &plant.r * k)]);
    let closed_loop_spectral_radius = spectral_radius(&closed_loop_a);

    let mut stage = StageSolution {
        plant: plant.clone(),
        control,
        filter,
        closed_loop_a,
        closed_loop_f,
        w_tilde,
        q_tilde,
        closed_loop_spectral_radius,
        cost: f64::NAN,
        cost_dual: f64::NAN,
    };
    let (cost, cost_dual) = evaluate_cost_with(&stage, tol).map_err(wrap("cost evaluation"))?;
    stage.cost = cost;
    stage.cost_dual = cost_dual;
    Ok(stage)
}

/// `(Tr(P̃W̃), Tr(Σ̃Q̃))` from two independent Lyapunov solves on the closed loop.
pub fn evaluate_cost(stage: &StageSolution) -> Result<(f64, f64), NumericsError> {
    evaluate_cost_with(stage, &Tolerances::default())
}

fn evaluate_cost_with(
    stage: &StageSolution,
    tol: &Tolerances,
) -> Result<(f64, f64), NumericsError> {
    let a = &stage.closed_loop_a;
    let p = solve_dlyap_with(a, &stage.q_tilde, tol)?;
    let sigma = solve_dlyap_with(&a.transpose(), &stage.w_tilde, tol)?;
    Ok((
        (p * &stage.w_tilde).trace(),
        (sigma * &stage.q_tilde).trace(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationOrder {
    MinimizerFirst,
    MaximizerFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponseConfig {
    /// Largest order `k` (number of responses per player).
    pub max_k: usize,
    /// Relative cost change that counts as converged.
    pub tol: f64,
    pub order: IterationOrder,
    /// Stop as soon as both players' costs have converged.
    pub stop_on_convergence: bool,
    /// Always run at least this many orders, even after convergence.
    pub min_k: usize,
    #[serde(skip)]
    pub tolerances: Tolerances,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        Self {
            max_k: 10,
            tol: 1e-6,
            order: IterationOrder::MinimizerFirst,
            stop_on_convergence: true,
            min_k: 1,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DimensionEntry {
    pub player: Player,
    pub k: usize,
    pub state_dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GameTrace {
    /// Stages in the order they were computed.
    pub stages: Vec<StageSolution>,
    pub converged: bool,
    /// Largest relative same-player cost change over the latest pair of orders.
    pub final_relative_change: f64,
    pub dimension_ledger: Vec<DimensionEntry>,
}

impl GameTrace {
    fn push(&mut self, stage: StageSolution) {
        self.dimension_ledger.push(DimensionEntry {
            player: stage.player(),
            k: stage.order_k(),
            state_dim: stage.plant.state_dim,
        });
        self.stages.push(stage);
    }

    pub fn costs(&self, player: Player) -> Vec<f64> {
        self.stages
            .iter()
            .filter(|s| s.player() == player)
            .map(|s| s.cost)
            .collect()
    }

    pub fn last_stage(&self, player: Player) -> Option<&StageSolution> {
        self.stages.iter().rev().find(|s| s.player() == player)
    }

    pub fn stage(&self, player: Player, k: usize) -> Option<&StageSolution> {
        self.stages
            .iter()
            .find(|s| s.player() == player && s.order_k() == k)
    }

    /// Relative change of `player`'s cost between its last two stages.
    pub fn relative_change(&self, player: Player) -> Option<f64> {
        let costs = self.costs(player);
        match costs.as_slice() {
            [.., prev, last] => Some((last - prev).abs() / last.abs().max(1.0)),
            _ => None,
        }
    }

    /// Exact average cost of the final strategy pair: the last stage is a
    /// best response to the other player's last strategy.
    pub fn final_pair_cost(&self) -> Option<f64> {
        self.stages.last().map(|s| s.cost)
    }
}

/// A run that stopped on a solver failure, with every stage computed before it.
#[derive(Debug, Error)]
#[error("{error} (after {} completed stages)", partial.stages.len())]
pub struct TraceError {
    #[source]
    pub error: BestResponseError,
    pub partial: GameTrace,
}

/// Runs alternating best responses up to `config.max_k` orders per player.
pub fn run_best_response(
    spec: &GameSpec,
    config: &BestResponseConfig,
) -> Result<GameTrace, Box<TraceError>> {
    let (first, second) = match config.order {
        IterationOrder::MinimizerFirst => (Player::Minimizer, Player::Maximizer),
        IterationOrder::MaximizerFirst => (Player::Maximizer, Player::Minimizer),
    };
    let mut trace = GameTrace::default();
    let fail = |error, trace: GameTrace| {
        Box::new(TraceError {
            error,
            partial: trace,
        })
    };
    let tol = &config.tolerances;

    for k in 1..=config.max_k.max(1) {
        let first_plant = match trace.last_stage(second) {
            None => initial_plant(spec, first),
            Some(prev) => match augment_against(spec, prev, k) {
                Ok(p) => p,
                Err(e) => return Err(fail(e, trace)),
            },
        };
        match lqg_best_response_with(&first_plant, first.measurement_noise(spec), tol) {
            Ok(stage) => trace.push(stage),
            Err(e) => return Err(fail(e, trace)),
        }
        let prev = trace.stages.last().expect("stage just pushed");
        let second_plant = match augment_against(spec, prev, k) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, trace)),
        };
        match lqg_best_response_with(&second_plant, second.measurement_noise(spec), tol) {
            Ok(stage) => trace.push(stage),
            Err(e) => return Err(fail(e, trace)),
        }

        if k >= 2 {
            let change = trace
                .relative_change(first)
                .unwrap_or(f64::INFINITY)
                .max(trace.relative_change(second).unwrap_or(f64::INFINITY));
            trace.final_relative_change = change;
            trace.converged = change <= config.tol;
            if trace.converged && config.stop_on_convergence && k >= config.min_k {
                break;
            }
        } else {
            trace.final_relative_change = f64::INFINITY;
        }
    }
    Ok(trace)
}

/// Relative cost change of each player when it plays one more best response
/// after the end of `trace`: `(minimizer, maximizer)`.
pub fn nash_deviation(
    spec: &GameSpec,
    trace: &GameTrace,
    tol: &Tolerances,
) -> Result<(f64, f64), BestResponseError> {
    let last = trace.stages.last().ok_or(BestResponseError::WrongPlayer {
        expected: Player::Minimizer,
        got: Player::Maximizer,
    })?;
    let next_order = |s: &StageSolution, responder: Player| match trace.last_stage(responder) {
        Some(own) => own.order_k() + 1,
        None => s.order_k(),
    };
    let responder = last.player().opponent();
    let plant = augment_against(spec, last, next_order(last, responder))?;
    let first = lqg_best_response_with(&plant, responder.measurement_noise(spec), tol)?;
    let plant = augment_against(spec, &first, next_order(&first, last.player()))?;
    let second = lqg_best_response_with(&plant, last.player().measurement_noise(spec), tol)?;

    let change = |stage: &StageSolution| {
        let prev = trace
            .last_stage(stage.player())
            .map_or(f64::NAN, |s| s.cost);
        (stage.cost - prev).abs() / stage.cost.abs().max(1.0)
    };
    let (a, b) = (change(&first), change(&second));
    Ok(match first.player() {
        Player::Minimizer => (a, b),
        Player::Maximizer => (b, a),
    })
}

/// Structured summary of a trace. With `verbose`, each stage also carries
/// its gains and Riccati solutions as row-major arrays.
pub fn trace_to_json(trace: &GameTrace, verbose: bool) -> serde_json::Value {
    use crate::game_model::matrix_to_rows;
    let stages: Vec<_> = trace
        .stages
        .iter()
        .map(|s| {
            let mut entry = serde_json::json!({
                "player": s.player(),
                "k": s.order_k(),
                "state_dim": s.plant.state_dim,
                "cost": s.cost,
                "cost_dual": s.cost_dual,
                "spectral_radius": {
                    "control_loop": s.control.closed_loop_spectral_radius,
                    "estimator_loop": s.filter.closed_loop_spectral_radius,
                    "closed_loop": s.closed_loop_spectral_radius,
                },
                "residual": {
                    "control_riccati": s.control.residual,
                    "filter_riccati": s.filter.residual,
                },
                "iterations": {
                    "control_riccati": s.control.iterations_used,
                    "filter_riccati": s.filter.iterations_used,
                },
            });
            if verbose {
                entry["K"] = serde_json::json!(matrix_to_rows(s.feedback_gain()));
                entry["L"] = serde_json::json!(matrix_to_rows(s.estimator_gain()));
                entry["P"] = serde_json::json!(matrix_to_rows(&s.control.p));
                entry["Sigma"] = serde_json::json!(matrix_to_rows(&s.filter.p));
            }
            entry
        })
        .collect();
    serde_json::json!({
        "converged": trace.converged,
        "final_relative_change": trace.final_relative_change,
        "dimension_ledger": trace.dimension_ledger,
        "stages": stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::example_spec;
    use crate::numerics::max_abs;

    fn scalar_spec(a: f64, r2: f64) -> GameSpec {
        let s = |x| Matrix::from_element(1, 1, x);
        GameSpec {
            a: s(a),
            b1: s(1.0),
            b2: s(1.0),
            c1: s(1.0),
            c2: s(1.0),
            w: s(1.0),
            v1: s(1.0),
            v2: s(1.0),
            q: s(1.0),
            r1: s(1.0),
            r2: s(r2),
            x0_mean: nalgebra::dvector![0.0],
            x0_cov: s(1.0),
        }
    }

    #[test]
    fn golden_ratio_minimizer() {
        let stage = minimizer_initial(&scalar_spec(1.0, -7.5)).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((stage.control.p[(0, 0)] - phi).abs() < 1e-10);
        assert!((stage.filter.p[(0, 0)] - phi).abs() < 1e-10);
        assert!((stage.feedback_gain()[(0, 0)] + 0.618034).abs() < 1e-6);
        assert!((stage.estimator_gain()[(0, 0)] - 0.618034).abs() < 1e-6);
        assert!(stage.cost_route_gap() < 1e-10);
    }

    #[test]
    fn noiseless_minimizer_cost_vanishes() {
        let mut spec = example_spec();
        spec.w = Matrix::identity(2, 2) * 1e-12;
        spec.v1 = Matrix::identity(1, 1) * 1e-12;
        let stage = minimizer_initial(&spec).unwrap();
        assert!(stage.cost.abs() <= 1e-9, "{}", stage.cost);
    }

    #[test]
    fn max_plant_blocks_at_k1() {
        let spec = example_spec();
        let min = minimizer_initial(&spec).unwrap();
        let plant = augment_for_max(&spec, &min).unwrap();
        assert_eq!(plant.state_dim, 4);
        assert_eq!(plant.a_bar.view((0, 0), (2, 2)), spec.a);
        let bk = &spec.b1 * min.feedback_gain();
        assert_eq!(plant.a_bar.view((0, 2), (2, 2)), bk);
        assert_eq!(plant.c_bar.view((0, 2), (1, 2)), Matrix::zeros(1, 2));
        assert_eq!(plant.f.shape(), (4, 3));
        let q_lr = min.feedback_gain().transpose() * &spec.r1 * min.feedback_gain();
        assert_eq!(plant.q_bar.view((2, 2), (2, 2)), q_lr);
    }

    #[test]
    fn decoupled_case_is_block_diagonal() {
        let mut spec = example_spec();
        spec.b1 = Matrix::zeros(2, 1);
        let min = minimizer_initial(&spec).unwrap();
        assert_eq!(max_abs(min.feedback_gain()), 0.0);
        let plant = augment_for_max(&spec, &min).unwrap();
        assert_eq!(max_abs(&plant.a_bar.view((0, 2), (2, 2)).into_owned()), 0.0);
        let expected = &spec.a - min.estimator_gain() * &spec.c1;
        assert!(max_abs(&(plant.a_bar.view((2, 2), (2, 2)) - expected)) < 1e-15);
    }

    #[test]
    fn min_plant_at_k2() {
        let spec = example_spec();
        let min = minimizer_initial(&spec).unwrap();
        let max = lqg_best_response(&augment_for_max(&spec, &min).unwrap(), &spec.v2).unwrap();
        let plant = augment_for_min(&spec, &max).unwrap();
        assert_eq!(plant.order_k, 2);
        assert_eq!(plant.state_dim, 6);
        assert_eq!(plant.f.shape(), (6, 3));
        // indefinite weight once the maximizer acts
        let eig = crate::numerics::symmetric_eigenvalues_desc(&plant.q_bar);
        assert!(eig[eig.len() - 1] < 0.0);
        assert!(augment_for_min(&spec, &min).is_err());
        assert!(augment_for_max(&spec, &max).is_err());
    }

    #[test]
    fn inert_maximizer_gives_block_q() {
        let mut spec = example_spec();
        spec.b2 = Matrix::zeros(2, 1);
        let min = minimizer_initial(&spec).unwrap();
        let max = lqg_best_response(&augment_for_max(&spec, &min).unwrap(), &spec.v2).unwrap();
        assert_eq!(max_abs(max.feedback_gain()), 0.0);
        let plant = augment_for_min(&spec, &max).unwrap();
        let mut expected = Matrix::zeros(6, 6);
        expected.view_mut((0, 0), (2, 2)).copy_from(&spec.q);
        assert_eq!(plant.q_bar, expected);
    }

    #[test]
    fn maximizer_boundedness_holds_on_example() {
        let spec = example_spec();
        let min = minimizer_initial(&spec).unwrap();
        let plant = augment_for_max(&spec, &min).unwrap();
        let max = lqg_best_response(&plant, &spec.v2).unwrap();
        let s = &spec.r2 + plant.b_bar.transpose() * &max.control.p * &plant.b_bar;
        assert!(s[(0, 0)] < 0.0);
        assert!(max.cost_route_gap() < 1e-8);
    }

    #[test]
    fn zero_input_stage_is_filtered_open_loop() {
        let mut plant = initial_plant(&example_spec(), Player::Minimizer);
        plant.b_bar = Matrix::zeros(2, 1);
        let stage = lqg_best_response(&plant, &Matrix::identity(1, 1)).unwrap();
        assert_eq!(max_abs(stage.feedback_gain()), 0.0);
        // with no control the cost is Tr(Q·X) for the open-loop state covariance
        let x = crate::numerics::solve_dlyap(&plant.a_bar.transpose(), &plant.w_bar).unwrap();
        let open = (&plant.q_bar * x).trace();
        assert!((stage.cost - open).abs() < 1e-10 * open);
    }

    #[test]
    fn zero_noise_gives_zero_cost_routes() {
        let spec = example_spec();
        let mut stage = minimizer_initial(&spec).unwrap();
        stage.w_tilde = Matrix::zeros(4, 4);
        assert_eq!(evaluate_cost(&stage).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn noiseless_game_converges_at_k2() {
        let mut spec = example_spec();
        spec.w = Matrix::identity(2, 2) * 1e-12;
        spec.v1 = Matrix::identity(1, 1) * 1e-12;
        spec.v2 = Matrix::identity(1, 1) * 1e-12;
        let trace = run_best_response(&spec, &BestResponseConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.stages.len(), 4);
        assert!(trace.stages.iter().all(|s| s.cost.abs() < 1e-9));
    }

    #[test]
    fn unbounded_maximizer_returns_partial_trace() {
        let spec = scalar_spec(0.5, -0.01);
        let err = run_best_response(&spec, &BestResponseConfig::default()).unwrap_err();
        assert!(err.error.is_value_unbounded(), "{err}");
        assert_eq!(err.partial.stages.len(), 1);
    }

    #[test]
    fn scalar_chain_maximizer_matches_value_iteration() {
        let spec = scalar_spec(0.5, -7.5);
        let min = minimizer_initial(&spec).unwrap();
        let plant = augment_for_max(&spec, &min).unwrap();
        let max = lqg_best_response(&plant, &spec.v2).unwrap();
        let (a, b, q, r) = (&plant.a_bar, &plant.b_bar, &plant.q_bar, &plant.r);
        let mut p = q.clone();
        for _ in 0..5_000 {
            let s = r + b.transpose() * &p * b;
            let gain = s.try_inverse().unwrap() * b.transpose() * &p * a;
            p = q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        }
        assert!(max_abs(&(&max.control.p - p)) < 1e-8);
    }

    #[test]
    fn trace_json_shape() {
        let trace = run_best_response(
            &example_spec(),
            &BestResponseConfig {
                max_k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let brief = trace_to_json(&trace, false);
        assert_eq!(brief["stages"].as_array().unwrap().len(), 2);
        assert_eq!(brief["stages"][1]["state_dim"], 4);
        assert!(brief["stages"][0].get("K").is_none());
        let full = trace_to_json(&trace, true);
        assert_eq!(full["stages"][1]["K"][0].as_array().unwrap().len(), 4);
        assert_eq!(full["dimension_ledger"][1]["player"], "maximizer");
    }

    #[test]
    fn maximizer_first_order_dimensions() {
        let spec = example_spec();
        let cfg = BestResponseConfig {
            max_k: 2,
            order: IterationOrder::MaximizerFirst,
            stop_on_convergence: false,
            ..Default::default()
        };
        let trace = run_best_response(&spec, &cfg).unwrap();
        let dims: Vec<_> = trace
            .dimension_ledger
            .iter()
            .map(|d| (d.player, d.k, d.state_dim))
            .collect();
        assert_eq!(
            dims,
            vec![
                (Player::Maximizer, 1, 2),
                (Player::Minimizer, 1, 4),
                (Player::Maximizer, 2, 6),
                (Player::Minimizer, 2, 8),
            ]
        );
    }
}
