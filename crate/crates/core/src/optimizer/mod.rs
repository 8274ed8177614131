//! Inner L-BFGS / steepest-descent loop on the shape manifold and the outer
//! augmented Lagrangian multiplier loop.
//!
//! The loops are generic over [`Problem`], so the same code drives the shape
//! problem ([`ShapeProblem`]) and small Euclidean test problems
//! ([`EuclideanProblem`]).

mod distance;
mod euclidean;
mod shape;

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distance::{shape_distance, shape_distance_within, ShapeDistance};
pub use euclidean::{EuclideanProblem, ScalarFunction};
pub use shape::{ShapeDerivative, ShapeEvaluation, ShapeProblem, ShapeProblemError};

use crate::metrics::MetricConfig;

/// A smooth objective with equality constraints on a manifold whose tangent
/// spaces carry a (possibly point-dependent) inner product.
pub trait Problem {
    type Point: Clone;
    type Tangent: Clone;
    /// Objective and constraint values at a point, plus whatever the
    /// gradient needs (e.g. the state solution).
    type Evaluation;
    /// Inner product and Riesz map of one iterate.
    type Metric;
    type Error: std::error::Error + Send + Sync + 'static;

    fn evaluate(&self, x: &Self::Point) -> Result<Self::Evaluation, Self::Error>;
    fn objective(&self, e: &Self::Evaluation) -> f64;
    fn constraints(&self, e: &Self::Evaluation) -> Vec<f64>;
    fn metric(&self, x: &Self::Point) -> Result<Self::Metric, Self::Error>;
    /// Riesz representative of the derivative of `L_A(·, λ)`.
    fn gradient(
        &self,
        metric: &Self::Metric,
        e: &Self::Evaluation,
        lambda: &[f64],
        mu: f64,
    ) -> Result<Self::Tangent, Self::Error>;
    fn inner(&self, metric: &Self::Metric, u: &Self::Tangent, w: &Self::Tangent) -> f64;
    /// `a u + b w`.
    fn combine(&self, a: f64, u: &Self::Tangent, b: f64, w: &Self::Tangent) -> Self::Tangent;
    /// Makes a linear combination of stored tangents usable as a step on the
    /// current iterate.
    fn realize(
        &self,
        _metric: &Self::Metric,
        q: Self::Tangent,
    ) -> Result<Self::Tangent, Self::Error> {
        Ok(q)
    }
    /// `x + t q`, or `None` when the result is not a valid point.
    fn retract(
        &self,
        x: &Self::Point,
        q: &Self::Tangent,
        t: f64,
    ) -> Result<Option<Self::Point>, Self::Error>;
    /// Norm of the step `t q` used by the stopping test.
    fn step_norm(&self, x: &Self::Point, q: &Self::Tangent, t: f64) -> f64;
    /// Worst element quality (1 for problems without a mesh).
    fn quality(&self, _x: &Self::Point) -> f64 {
        1.0
    }
    /// Size of the tangential part of the step on the boundary.
    fn tangential_norm(&self, _x: &Self::Point, _q: &Self::Tangent, _t: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Problem(Box<dyn std::error::Error + Send + Sync>),
}

fn problem_error<E: std::error::Error + Send + Sync + 'static>(e: E) -> OptimizerError {
    OptimizerError::Problem(Box::new(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    /// Initial scale for quasi-Newton directions.
    pub initial_scale: f64,
    /// Step length (in the step norm) of the first trial of a steepest
    /// descent direction, capped at scale 1.
    pub steepest_descent_length: f64,
    pub backtracking_factor: f64,
    pub max_backtracks: usize,
    /// Largest admissible worst element quality.
    pub quality_cap: f64,
    pub armijo: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            initial_scale: 1.0,
            steepest_descent_length: 0.05,
            backtracking_factor: 0.5,
            max_backtracks: 20,
            quality_cap: 100.0,
            armijo: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub metric: MetricConfig,
    /// L-BFGS memory; 0 gives steepest descent.
    pub memory: usize,
    pub delta_j: f64,
    pub delta_c: f64,
    pub mu_initial: f64,
    pub mu_increase: f64,
    /// Stopping tolerance on `‖λ^{k+1} − λ^k‖₂`.
    pub lambda_tolerance: f64,
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    pub step: StepControl,
    /// Fill the `seconds` column with wall time. Off by default so that
    /// repeated runs write identical records.
    pub record_wall_time: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            metric: MetricConfig::default(),
            memory: 3,
            delta_j: 1e-4,
            delta_c: 0.5,
            mu_initial: 1e2,
            mu_increase: 10.0,
            lambda_tolerance: 5e-2,
            max_inner_iterations: 200,
            max_outer_iterations: 20,
            step: StepControl::default(),
            record_wall_time: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        let s = &self.step;
        if !(self.delta_j > 0.0 && self.delta_c > 0.0) {
            return bad("delta_j and delta_c must be positive");
        }
        if !(self.mu_increase > 1.0) {
            return bad("mu_increase must exceed 1");
        }
        if !(self.mu_initial > 0.0 && self.lambda_tolerance > 0.0) {
            return bad("mu_initial and lambda_tolerance must be positive");
        }
        if self.max_inner_iterations == 0 || self.max_outer_iterations == 0 {
            return bad("iteration caps must be at least 1");
        }
        if !(s.backtracking_factor > 0.0 && s.backtracking_factor < 1.0) {
            return bad("backtracking_factor must lie in (0, 1)");
        }
        if !(s.initial_scale > 0.0 && s.steepest_descent_length > 0.0 && s.quality_cap >= 1.0) {
            return bad("step parameters must be positive and quality_cap at least 1");
        }
        if !(s.armijo > 0.0 && s.armijo < 1.0) {
            return bad("armijo parameter must lie in (0, 1)");
        }
        self.metric
            .validate()
            .map_err(|e| OptimizerError::InvalidConfig(e.to_string()))
    }
}

/// One accepted inner step. Values refer to the iterate after the step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "L_A")]
    pub l_a: f64,
    pub c_norm: f64,
    pub worst_quality: f64,
    /// L²(Γ) norm of the accepted step.
    pub step_norm: f64,
    pub scale: f64,
    pub seconds: f64,
    pub outer: usize,
    /// Metric norm of the search direction `q`.
    pub q_norm: f64,
    /// Metric norm of the gradient at the iterate before the step.
    pub grad_norm: f64,
    pub tangential_norm: f64,
    pub backtracks: usize,
    /// The quasi-Newton direction was replaced by the gradient.
    pub fallback: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStatus {
    Converged,
    IterationCap,
    /// No scale down to the smallest trial gives a valid mesh within the
    /// quality cap.
    MeshInvalid,
    /// Valid trial meshes exist but none decreases `L_A`.
    Stagnated,
}

pub struct LbfgsMemory<T> {
    capacity: usize,
    pairs: VecDeque<(T, T, f64)>,
}

impl<T: Clone> LbfgsMemory<T> {
    pub fn new(capacity: usize) -> Self {
        LbfgsMemory {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` if `g(y, s) > 0`; returns whether it was stored.
    pub fn push(&mut self, s: T, y: T, curvature: f64) -> bool {
        if self.capacity == 0 || !(curvature > 0.0) || !curvature.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / curvature));
        true
    }

    /// Stored `(s, y, ρ)`, oldest first.
    pub fn pairs(&self) -> impl DoubleEndedIterator<Item = &(T, T, f64)> {
        self.pairs.iter()
    }
}

/// Two-loop recursion. Returns the gradient unchanged for empty memory.
pub fn lbfgs_direction<P: Problem>(
    problem: &P,
    metric: &P::Metric,
    gradient: &P::Tangent,
    memory: &LbfgsMemory<P::Tangent>,
) -> P::Tangent {
    let mut q = gradient.clone();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.pairs().rev() {
        let a = rho * problem.inner(metric, s, &q);
        q = problem.combine(1.0, &q, -a, y);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.pairs().next_back() {
        let yy = problem.inner(metric, y, y);
        if yy > 0.0 {
            let scale = problem.inner(metric, y, s) / yy;
            q = problem.combine(scale, &q, 0.0, y);
        }
    }
    for ((s, y, rho), a) in memory.pairs().zip(alphas.into_iter().rev()) {
        let b = rho * problem.inner(metric, y, &q);
        q = problem.combine(1.0, &q, a - b, s);
    }
    q
}

pub fn augmented_lagrangian(objective: f64, c: &[f64], lambda: &[f64], mu: f64) -> f64 {
    objective
        + c.iter().zip(lambda).map(|(c, l)| l * c).sum::<f64>()
        + 0.5 * mu * c.iter().map(|c| c * c).sum::<f64>()
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub enum StepOutcome<P: Problem> {
    Accepted {
        point: P::Point,
        evaluation: P::Evaluation,
        scale: f64,
        backtracks: usize,
    },
    Failed(InnerStatus),
}

/// Backtracking along `x − t q` from `t = initial` until the trial point is
/// valid, within the quality cap and satisfies the Armijo condition
/// `L_A(x − t q) ≤ L_A(x) − c₁ t g(grad, q)`. With `accept_valid` the
/// first valid trial within the cap is taken without the Armijo test.
#[allow(clippy::too_many_arguments)]
pub fn step_control<P: Problem>(
    problem: &P,
    x: &P::Point,
    l_a: f64,
    slope: f64,
    q: &P::Tangent,
    initial: f64,
    lambda: &[f64],
    mu: f64,
    control: &StepControl,
    accept_valid: bool,
) -> Result<StepOutcome<P>, P::Error> {
    let mut t = initial;
    let mut last = InnerStatus::MeshInvalid;
    for backtracks in 0..=control.max_backtracks {
        if backtracks > 0 {
            t *= control.backtracking_factor;
        }
        let Some(trial) = problem.retract(x, q, -t)? else {
            last = InnerStatus::MeshInvalid;
            continue;
        };
        if problem.quality(&trial) > control.quality_cap {
            last = InnerStatus::MeshInvalid;
            continue;
        }
        // a state solve failing on a valid but distorted mesh counts as invalid
        let Ok(evaluation) = problem.evaluate(&trial) else {
            last = InnerStatus::MeshInvalid;
            continue;
        };
        let value = augmented_lagrangian(
            problem.objective(&evaluation),
            &problem.constraints(&evaluation),
            lambda,
            mu,
        );
        if accept_valid || (value < l_a && value <= l_a - control.armijo * t * slope) {
            return Ok(StepOutcome::Accepted {
                point: trial,
                evaluation,
                scale: t,
                backtracks,
            });
        }
        last = InnerStatus::Stagnated;
    }
    Ok(StepOutcome::Failed(last))
}

pub struct InnerResult<P: Problem> {
    pub point: P::Point,
    pub evaluation: P::Evaluation,
    pub status: InnerStatus,
    pub iterations: usize,
}

/// Called after every accepted inner step with its record and the new iterate.
pub type Observer<'a, X> = &'a mut dyn FnMut(&IterationRecord, &X);

/// Running state shared by consecutive inner solves.
pub struct RunState<'a, P: Problem> {
    pub memory: LbfgsMemory<P::Tangent>,
    pub records: Vec<IterationRecord>,
    pub outer: usize,
    start: Instant,
    wall_time: bool,
    observer: Option<Observer<'a, P::Point>>,
}

impl<'a, P: Problem> RunState<'a, P> {
    pub fn new(config: &OptimizerConfig) -> Self {
        RunState {
            memory: LbfgsMemory::new(config.memory),
            records: Vec::new(),
            outer: 1,
            start: Instant::now(),
            wall_time: config.record_wall_time,
            observer: None,
        }
    }

    pub fn with_observer(mut self, observer: Observer<'a, P::Point>) -> Self {
        self.observer = Some(observer);
        self
    }

    fn seconds(&self) -> f64 {
        if self.wall_time {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}

/// Minimizes `L_A(·, λ)` from `start` until the accepted step, or the
/// proposed one before the line search, is shorter than `δ_J`, or the
/// iteration cap is hit.
pub fn inner_solve<P: Problem>(
    problem: &P,
    start: P::Point,
    start_evaluation: Option<P::Evaluation>,
    lambda: &[f64],
    mu: f64,
    config: &OptimizerConfig,
    state: &mut RunState<'_, P>,
) -> Result<InnerResult<P>, OptimizerError> {
    let mut x = start;
    let mut e = match start_evaluation {
        Some(e) => e,
        None => problem.evaluate(&x).map_err(problem_error)?,
    };
    let mut previous: Option<(P::Tangent, P::Tangent)> = None;
    for iteration in 0..config.max_inner_iterations {
        let metric = problem.metric(&x).map_err(problem_error)?;
        let grad = problem
            .gradient(&metric, &e, lambda, mu)
            .map_err(problem_error)?;
        if let Some((s, old_grad)) = previous.take() {
            let y = problem.combine(1.0, &grad, -1.0, &old_grad);
            let curvature = problem.inner(&metric, &y, &s);
            state.memory.push(s, y, curvature);
        }
        let grad_norm = problem.inner(&metric, &grad, &grad).max(0.0).sqrt();
        let mut q = lbfgs_direction(problem, &metric, &grad, &state.memory);
        let mut fallback = false;
        let mut slope = problem.inner(&metric, &q, &grad);
        if !(slope > 0.0) {
            q = grad.clone();
            slope = grad_norm * grad_norm;
            fallback = !state.memory.is_empty();
            state.memory.clear();
        }
        let c = problem.constraints(&e);
        let l_a = augmented_lagrangian(problem.objective(&e), &c, lambda, mu);
        let mut q = problem.realize(&metric, q).map_err(problem_error)?;
        let (unit, outcome) = loop {
            let unit = problem.step_norm(&x, &q, 1.0);
            let initial = if state.memory.is_empty() {
                (config.step.steepest_descent_length / unit).min(1.0)
            } else {
                config.step.initial_scale
            };
            if initial * unit < config.delta_j {
                // the proposed step is already below tolerance
                return Ok(InnerResult {
                    point: x,
                    evaluation: e,
                    status: InnerStatus::Converged,
                    iterations: iteration,
                });
            }
            let outcome = step_control(
                problem,
                &x,
                l_a,
                slope,
                &q,
                initial,
                lambda,
                mu,
                &config.step,
                false,
            )
            .map_err(problem_error)?;
            match outcome {
                StepOutcome::Failed(_) if !state.memory.is_empty() => {
                    // restart along the gradient
                    state.memory.clear();
                    fallback = true;
                    q = problem
                        .realize(&metric, grad.clone())
                        .map_err(problem_error)?;
                    slope = grad_norm * grad_norm;
                }
                outcome => break (unit, outcome),
            }
        };
        let StepOutcome::Accepted {
            point,
            evaluation,
            scale,
            backtracks,
        } = outcome
        else {
            let StepOutcome::Failed(status) = outcome else {
                unreachable!()
            };
            return Ok(InnerResult {
                point: x,
                evaluation: e,
                status,
                iterations: iteration,
            });
        };
        let step_norm = scale * unit;
        let c_new = problem.constraints(&evaluation);
        let j_new = problem.objective(&evaluation);
        state.records.push(IterationRecord {
            iter: state.records.len() + 1,
            outer: state.outer,
            j: j_new,
            l_a: augmented_lagrangian(j_new, &c_new, lambda, mu),
            c_norm: euclidean_norm(&c_new),
            worst_quality: problem.quality(&point),
            step_norm,
            scale,
            seconds: state.seconds(),
            q_norm: problem.inner(&metric, &q, &q).max(0.0).sqrt(),
            grad_norm,
            tangential_norm: problem.tangential_norm(&x, &q, scale),
            backtracks,
            fallback,
        });
        if let Some(observer) = state.observer.as_mut() {
            observer(&state.records[state.records.len() - 1], &point);
        }
        let s = problem.combine(-scale, &q, 0.0, &q);
        previous = Some((s, grad));
        x = point;
        e = evaluation;
        if step_norm < config.delta_j {
            return Ok(InnerResult {
                point: x,
                evaluation: e,
                status: InnerStatus::Converged,
                iterations: iteration + 1,
            });
        }
    }
    Ok(InnerResult {
        point: x,
        evaluation: e,
        status: InnerStatus::IterationCap,
        iterations: config.max_inner_iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterAction {
    /// Step 2a: the penalty was raised.
    PenaltyIncrease,
    /// Step 2b: the multipliers were updated.
    MultiplierUpdate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRecord {
    pub outer: usize,
    /// Multipliers used in this outer iteration's inner solve.
    pub lambda: Vec<f64>,
    pub mu: f64,
    /// Constraint values at the end of the inner solve.
    pub constraints: Vec<f64>,
    pub c_norm: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub inner_iterations: usize,
    pub inner_status: InnerStatus,
    pub action: OuterAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MeshInvalid,
    IterationCap,
}

pub struct AlResult<P: Problem> {
    pub point: P::Point,
    pub evaluation: P::Evaluation,
    pub status: RunStatus,
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub records: Vec<IterationRecord>,
    pub multipliers: Vec<MultiplierRecord>,
}

/// Outer loop: inner solve, then either raise the penalty (when
/// `‖c‖ > δ_c`) or update `λ ← λ + μ c`, until `λ` stops changing.
///
/// `λ¹ = 0`. Memory pairs survive multiplier updates and are dropped when the
/// penalty changes. An inner solve that ends at its iteration cap or
/// stagnates still counts as step 1; a mesh-invalid inner solve ends the run.
pub fn augmented_lagrangian_loop<P: Problem>(
    problem: &P,
    start: P::Point,
    config: &OptimizerConfig,
) -> Result<AlResult<P>, OptimizerError> {
    augmented_lagrangian_loop_from(problem, start, None, config)
}

/// As [`augmented_lagrangian_loop`] with explicit initial multipliers.
pub fn augmented_lagrangian_loop_from<P: Problem>(
    problem: &P,
    start: P::Point,
    lambda0: Option<Vec<f64>>,
    config: &OptimizerConfig,
) -> Result<AlResult<P>, OptimizerError> {
    augmented_lagrangian_loop_observed(problem, start, lambda0, config, None)
}

/// As [`augmented_lagrangian_loop_from`], reporting every accepted step.
pub fn augmented_lagrangian_loop_observed<P: Problem>(
    problem: &P,
    start: P::Point,
    lambda0: Option<Vec<f64>>,
    config: &OptimizerConfig,
    observer: Option<Observer<'_, P::Point>>,
) -> Result<AlResult<P>, OptimizerError> {
    config.validate()?;
    let e0 = problem.evaluate(&start).map_err(problem_error)?;
    let m = problem.constraints(&e0).len();
    let mut lambda = lambda0.unwrap_or_else(|| vec![0.0; m]);
    if lambda.len() != m {
        return Err(OptimizerError::InvalidConfig(format!(
            "{} initial multipliers for {m} constraints",
            lambda.len()
        )));
    }
    let mut mu = config.mu_initial;
    let mut state = RunState::<P>::new(config);
    state.observer = observer;
    let mut multipliers = Vec::new();
    let (mut x, mut e) = (start, e0);
    for outer in 1..=config.max_outer_iterations {
        state.outer = outer;
        let inner = inner_solve(problem, x, Some(e), &lambda, mu, config, &mut state)?;
        x = inner.point;
        e = inner.evaluation;
        let c = problem.constraints(&e);
        let c_norm = euclidean_norm(&c);
        let mut record = MultiplierRecord {
            outer,
            lambda: lambda.clone(),
            mu,
            constraints: c.clone(),
            c_norm,
            j: problem.objective(&e),
            inner_iterations: inner.iterations,
            inner_status: inner.status,
            action: OuterAction::MultiplierUpdate,
        };
        if inner.status == InnerStatus::MeshInvalid {
            multipliers.push(record);
            return Ok(AlResult {
                point: x,
                evaluation: e,
                status: RunStatus::MeshInvalid,
                lambda,
                mu,
                records: state.records,
                multipliers,
            });
        }
        if c_norm > config.delta_c {
            mu *= config.mu_increase;
            state.memory.clear();
            record.action = OuterAction::PenaltyIncrease;
            multipliers.push(record);
            continue;
        }
        let next: Vec<f64> = lambda.iter().zip(&c).map(|(l, c)| l + mu * c).collect();
        let change = euclidean_norm(
            &next
                .iter()
                .zip(&lambda)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        lambda = next;
        multipliers.push(record);
        if change < config.lambda_tolerance {
            return Ok(AlResult {
                point: x,
                evaluation: e,
                status: RunStatus::Converged,
                lambda,
                mu,
                records: state.records,
                multipliers,
            });
        }
    }
    Ok(AlResult {
        point: x,
        evaluation: e,
        status: RunStatus::IterationCap,
        lambda,
        mu,
        records: state.records,
        multipliers,
    })
}

/// Inner solve with fixed multipliers from `start` with fresh memory.
pub fn fixed_multiplier_solve<P: Problem>(
    problem: &P,
    start: P::Point,
    lambda: &[f64],
    mu: f64,
    config: &OptimizerConfig,
) -> Result<(InnerResult<P>, Vec<IterationRecord>), OptimizerError> {
    config.validate()?;
    let mut state = RunState::<P>::new(config);
    let result = inner_solve(problem, start, None, lambda, mu, config, &mut state)?;
    Ok((result, state.records))
}
