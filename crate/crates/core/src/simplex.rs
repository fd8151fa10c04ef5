//! Convex minimization over the probability simplex and the nonnegative
//! orthant.
//!
//! The workhorse is entropic mirror descent with Armijo backtracking: the
//! multiplicative update keeps every iterate strictly positive, which matters
//! because generator derivatives such as `ln t` diverge at zero. Mirror descent
//! alone stalls well above 1e−9 on ill-conditioned kernel problems, so when
//! the objective can supply a Hessian the solver switches to a safeguarded
//! Newton iteration on the free coordinates once the warm-up is done.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    weights: Vec<f64>,
}

impl SimplexWeights {
    pub fn uniform(m: usize) -> Self {
        SimplexWeights {
            weights: vec![1.0 / m as f64; m],
        }
    }

    /// Validates nonnegativity and unit sum (within 1e−10).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Precondition("simplex weights must be nonempty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Precondition(format!(
                "simplex weight {w} is not a finite nonnegative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!("simplex weights sum to {sum}")));
        }
        Ok(SimplexWeights { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

impl AsRef<[f64]> for SimplexWeights {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

/// Diagnostics from a solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_objective: f64,
    /// Multiplicative stationarity measure `max αᵢ·|gᵢ − c|`, where `c` is
    /// `⟨α, g⟩` on the simplex and 0 on the orthant.
    pub kkt_residual: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

/// A smooth convex objective.
pub trait Objective {
    /// Returns the value at `x` and writes the gradient into `grad`.
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut grad = vec![0.0; x.len()];
        self.evaluate(x, &mut grad)
    }

    /// Dense Hessian, if the objective can supply one. Enables the Newton phase.
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Adapts a closure `(x, grad) -> value` to [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.0)(x, grad)
    }
}

const WEIGHT_FLOOR: f64 = 1e-300;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const STALL_LIMIT: usize = 10;
const STALL_REL_DECREASE: f64 = 1e-12;
const NEWTON_WARMUP: usize = 50;
const NEWTON_WARMUP_RESIDUAL: f64 = 1e-3;
// Upper bound on the distance from the boundary at which a coordinate the
// gradient pushes outward is shrunk rather than Newton-stepped.
const ACTIVE_WIDTH: f64 = 1e-3;
const FRACTION_TO_BOUNDARY: f64 = 0.995;
const ROUNDOFF_DECREMENT: f64 = 1e-10;
const ROUNDOFF_GUARD: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Domain {
    Simplex,
    Orthant,
}

impl Domain {
    fn shift(self, x: &[f64], g: &[f64]) -> f64 {
        match self {
            Domain::Simplex => x.iter().zip(g).map(|(a, b)| a * b).sum(),
            Domain::Orthant => 0.0,
        }
    }

    fn residual(self, x: &[f64], g: &[f64]) -> f64 {
        let c = self.shift(x, g);
        x.iter().zip(g).map(|(a, b)| (a * (b - c)).abs()).fold(0.0, f64::max)
    }
}

// Round-off allowance for sufficient-decrease tests.
fn slack(value: f64) -> f64 {
    4e-16 * value.abs().max(1.0)
}

struct State {
    x: Vec<f64>,
    grad: Vec<f64>,
    value: f64,
}

fn check_finite(value: f64, iteration: usize) -> Result<()> {
    if value.is_nan() || value == f64::NEG_INFINITY {
        return Err(Error::NumericFailure {
            iteration,
            message: format!("objective evaluated to {value}"),
        });
    }
    Ok(())
}

/// One mirror-descent step with backtracking. Returns `None` when no step
/// size gives sufficient decrease.
fn mirror_step<O: Objective + ?Sized>(
    objective: &O,
    domain: Domain,
    state: &State,
    eta: &mut f64,
    iteration: usize,
) -> Result<Option<State>> {
    let m = state.x.len();
    let c = domain.shift(&state.x, &state.grad);
    let mut trial = vec![0.0; m];
    for _ in 0..MAX_HALVINGS {
        let h = *eta;
        match domain {
            Domain::Simplex => {
                let logs: Vec<f64> = state
                    .x
                    .iter()
                    .zip(&state.grad)
                    .map(|(a, g)| a.max(WEIGHT_FLOOR).ln() - h * (g - c))
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (t, l) in trial.iter_mut().zip(&logs) {
                    *t = (l - top).exp();
                    sum += *t;
                }
                for t in trial.iter_mut() {
                    *t = (*t / sum).max(WEIGHT_FLOOR);
                }
            }
            Domain::Orthant => {
                for ((t, a), g) in trial.iter_mut().zip(&state.x).zip(&state.grad) {
                    // Cap the growth factor so a large step cannot overflow.
                    *t = (a.max(WEIGHT_FLOOR) * (-h * g).min(50.0).exp()).max(WEIGHT_FLOOR);
                }
            }
        }
        let directional: f64 = trial
            .iter()
            .zip(&state.x)
            .zip(&state.grad)
            .map(|((t, a), g)| g * (t - a))
            .sum();
        let value = objective.value(&trial);
        check_finite(value, iteration)?;
        if value <= state.value + ARMIJO_C * directional.min(0.0) + slack(state.value) {
            let mut grad = vec![0.0; m];
            let value = objective.evaluate(&trial, &mut grad);
            check_finite(value, iteration)?;
            *eta *= 2.0;
            return Ok(Some(State { x: trial, grad, value }));
        }
        *eta *= 0.5;
    }
    Ok(None)
}

/// Two-metric projected Newton step. Coordinates near the boundary whose
/// gradient pushes them outward are shrunk geometrically toward zero; the rest
/// take a Newton step that accounts for that move and, on the simplex, keeps
/// `Σ dᵢ = 0`.
fn newton_step<O: Objective + ?Sized>(
    objective: &O,
    domain: Domain,
    state: &State,
    hessian: DMatrix<f64>,
    iteration: usize,
) -> Result<Option<State>> {
    let m = state.x.len();
    let c = domain.shift(&state.x, &state.grad);
    // Width of the projected-gradient step decides what counts as "near".
    let width = state
        .x
        .iter()
        .zip(&state.grad)
        .map(|(x, g)| (x - (x - (g - c)).max(0.0)).abs())
        .fold(0.0, f64::max)
        .min(ACTIVE_WIDTH);
    let (shrinking, free): (Vec<usize>, Vec<usize>) = (0..m).partition(|&i| state.x[i] <= width && state.grad[i] > c);
    if free.is_empty() {
        return Ok(None);
    }
    let k = free.len();
    let d_shrink: Vec<f64> = shrinking.iter().map(|&i| -FRACTION_TO_BOUNDARY * state.x[i]).collect();
    let h_ff = DMatrix::from_fn(k, k, |a, b| hessian[(free[a], free[b])]);
    let chol = match h_ff.cholesky() {
        Some(ch) => ch,
        None => return Ok(None),
    };
    let rhs = DVector::from_iterator(
        k,
        free.iter().map(|&i| {
            state.grad[i]
                + shrinking
                    .iter()
                    .zip(&d_shrink)
                    .map(|(&j, d)| hessian[(i, j)] * d)
                    .sum::<f64>()
        }),
    );
    let a = chol.solve(&rhs);
    let step = match domain {
        Domain::Orthant => -a,
        Domain::Simplex => {
            let released = -d_shrink.iter().sum::<f64>();
            let b = chol.solve(&DVector::from_element(k, 1.0));
            let nu = -(released + a.sum()) / b.sum();
            -(a + b * nu)
        }
    };

    let mut t_max: f64 = 1.0;
    for (idx, &i) in free.iter().enumerate() {
        if step[idx] < 0.0 {
            t_max = t_max.min(-FRACTION_TO_BOUNDARY * state.x[i] / step[idx]);
        }
    }
    // A tiny admissible step means a free coordinate is heading for the
    // boundary; let mirror descent take this iteration.
    if !(t_max > 1e-3) {
        return Ok(None);
    }
    let directional: f64 = free
        .iter()
        .enumerate()
        .map(|(idx, &i)| state.grad[i] * step[idx])
        .chain(shrinking.iter().zip(&d_shrink).map(|(&i, d)| state.grad[i] * d))
        .sum();
    if !(directional < 0.0) {
        return Ok(None);
    }

    // Once the predicted decrease is below what the objective can resolve,
    // sufficient-decrease tests only see round-off: take the full step and
    // guard against a genuine increase.
    let scale = state.value.abs().max(1.0);
    let roundoff_regime = -directional <= ROUNDOFF_DECREMENT * scale;

    let mut t = t_max;
    let mut trial = state.x.clone();
    for _ in 0..MAX_HALVINGS {
        for (idx, &i) in free.iter().enumerate() {
            trial[i] = (state.x[i] + t * step[idx]).max(WEIGHT_FLOOR);
        }
        for (&i, d) in shrinking.iter().zip(&d_shrink) {
            trial[i] = (state.x[i] + t * d).max(WEIGHT_FLOOR);
        }
        if domain == Domain::Simplex {
            let sum: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= sum);
        }
        let value = objective.value(&trial);
        check_finite(value, iteration)?;
        let accept = if roundoff_regime {
            value <= state.value + ROUNDOFF_GUARD * scale
        } else {
            value <= state.value + ARMIJO_C * t * directional + slack(state.value)
        };
        if accept {
            let mut grad = vec![0.0; m];
            let value = objective.evaluate(&trial, &mut grad);
            check_finite(value, iteration)?;
            return Ok(Some(State { x: trial, grad, value }));
        }
        t *= 0.5;
    }
    Ok(None)
}

fn initial_state<O: Objective + ?Sized>(objective: &O, x: Vec<f64>) -> Result<State> {
    let mut grad = vec![0.0; x.len()];
    let value = objective.evaluate(&x, &mut grad);
    if !value.is_finite() {
        return Err(Error::NumericFailure {
            iteration: 0,
            message: format!("objective at the initial point is {value}"),
        });
    }
    Ok(State { x, grad, value })
}

fn run<O: Objective + ?Sized>(
    objective: &O,
    domain: Domain,
    x0: Vec<f64>,
    options: SolverOptions,
) -> Result<(Vec<f64>, SolverReport)> {
    if !(options.tol > 0.0) {
        return Err(Error::Precondition(format!(
            "solver tolerance must be positive, got {}",
            options.tol
        )));
    }
    let mut state = initial_state(objective, x0)?;
    let mut trace = vec![state.value];
    let mut residual = domain.residual(&state.x, &state.grad);
    let spread = state.grad.iter().copied().fold(0.0f64, |acc, g| acc.max(g.abs()));
    let mut eta = 1.0 / spread.max(1.0);
    let mut stalled = 0;
    let mut iterations = 0;

    while iterations < options.max_iters && residual > options.tol && stalled < STALL_LIMIT {
        iterations += 1;
        let mut next = None;
        if iterations > NEWTON_WARMUP || residual < NEWTON_WARMUP_RESIDUAL {
            if let Some(h) = objective.hessian(&state.x) {
                next = newton_step(objective, domain, &state, h, iterations)?;
            }
        }
        if next.is_none() {
            next = mirror_step(objective, domain, &state, &mut eta, iterations)?;
        }
        let Some(next) = next else {
            // No step decreases the objective: we are at round-off level.
            break;
        };
        let decrease = state.value - next.value;
        if decrease <= STALL_REL_DECREASE * state.value.abs().max(1e-300) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        state = next;
        trace.push(state.value);
        residual = domain.residual(&state.x, &state.grad);
    }

    let report = SolverReport {
        iterations,
        final_objective: state.value,
        kkt_residual: residual,
        converged: residual <= options.tol,
        objective_trace: trace,
    };
    Ok((state.x, report))
}

/// Minimizes a convex objective over the simplex of dimension `m`, starting
/// from `init` or the uniform point.
///
/// Running out of iterations yields an unconverged report, not an error.
pub fn minimize_on_simplex<O: Objective + ?Sized>(
    objective: &O,
    m: usize,
    options: SolverOptions,
    init: Option<&SimplexWeights>,
) -> Result<(SimplexWeights, SolverReport)> {
    if m == 0 {
        return Err(Error::Precondition("simplex dimension must be positive".into()));
    }
    let x0 = match init {
        Some(w) if w.len() != m => {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: w.len(),
            })
        }
        // Mirror descent cannot leave a face, so lift zeros off the boundary.
        Some(w) => {
            let lifted: Vec<f64> = w.as_slice().iter().map(|v| v.max(1e-12)).collect();
            let s: f64 = lifted.iter().sum();
            lifted.into_iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / m as f64; m],
    };
    let (x, report) = run(objective, Domain::Simplex, x0, options)?;
    Ok((SimplexWeights { weights: x }, report))
}

/// Minimizes a convex objective over `{α ∈ ℝᵐ : α ≥ 0}`, starting from `init`
/// or the point with every entry `1/m`.
pub fn minimize_on_nonneg<O: Objective + ?Sized>(
    objective: &O,
    m: usize,
    options: SolverOptions,
    init: Option<&[f64]>,
) -> Result<(Vec<f64>, SolverReport)> {
    if m == 0 {
        return Err(Error::Precondition("dimension must be positive".into()));
    }
    let x0 = match init {
        Some(w) if w.len() != m => {
            return Err(Error::LengthMismatch {
                expected: m,
                actual: w.len(),
            })
        }
        Some(w) => {
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Precondition(
                    "initial point must be finite and nonnegative".into(),
                ));
            }
            w.iter().map(|v| v.max(1e-12)).collect()
        }
        None => vec![1.0 / m as f64; m],
    };
    run(objective, Domain::Orthant, x0, options)
}

/// Euclidean projection onto the probability simplex by the sorted-threshold
/// rule.
pub fn project_to_simplex(v: &[f64]) -> SimplexWeights {
    if v.is_empty() {
        return SimplexWeights { weights: Vec::new() };
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    let mut weights: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    SimplexWeights { weights }
}

/// Projected gradient descent with Armijo backtracking along the projection
/// arc. Slower than [`minimize_on_simplex`]; kept as an independent route.
///
/// The residual reported is `‖α − P(α − g)‖∞`.
pub fn minimize_on_simplex_projected<O: Objective + ?Sized>(
    objective: &O,
    m: usize,
    options: SolverOptions,
    init: Option<&SimplexWeights>,
) -> Result<(SimplexWeights, SolverReport)> {
    if m == 0 {
        return Err(Error::Precondition("simplex dimension must be positive".into()));
    }
    let x0 = init
        .map(|w| w.as_slice().to_vec())
        .unwrap_or_else(|| vec![1.0 / m as f64; m]);
    let mut state = initial_state(objective, x0)?;
    let mut trace = vec![state.value];
    let stationarity = |s: &State| {
        let shifted: Vec<f64> = s.x.iter().zip(&s.grad).map(|(a, g)| a - g).collect();
        let p = project_to_simplex(&shifted);
        s.x.iter()
            .zip(p.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut residual = stationarity(&state);
    let mut step = 1.0;
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < options.max_iters && residual > options.tol && stalled < STALL_LIMIT {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let shifted: Vec<f64> = state.x.iter().zip(&state.grad).map(|(a, g)| a - step * g).collect();
            let trial = project_to_simplex(&shifted).into_vec();
            let directional: f64 = trial
                .iter()
                .zip(&state.x)
                .zip(&state.grad)
                .map(|((t, a), g)| g * (t - a))
                .sum();
            let value = objective.value(&trial);
            check_finite(value, iterations)?;
            if value <= state.value + ARMIJO_C * directional.min(0.0) + slack(state.value) {
                let mut grad = vec![0.0; m];
                let value = objective.evaluate(&trial, &mut grad);
                accepted = Some(State { x: trial, grad, value });
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        if state.value - next.value <= STALL_REL_DECREASE * state.value.abs().max(1e-300) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        state = next;
        trace.push(state.value);
        residual = stationarity(&state);
    }
    let report = SolverReport {
        iterations,
        final_objective: state.value,
        kkt_residual: residual,
        converged: residual <= options.tol,
        objective_trace: trace,
    };
    Ok((SimplexWeights { weights: state.x }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// ½ xᵀQx + cᵀx, optionally exposing its Hessian.
    struct Quadratic {
        q: DMatrix<f64>,
        c: DVector<f64>,
        with_hessian: bool,
    }

    impl Objective for Quadratic {
        fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            let x = DVector::from_column_slice(x);
            let qx = &self.q * &x;
            grad.copy_from_slice((&qx + &self.c).as_slice());
            0.5 * x.dot(&qx) + self.c.dot(&x)
        }

        fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
            self.with_hessian.then(|| self.q.clone())
        }
    }

    fn random_quadratic(rng: &mut ChaCha8Rng, m: usize, with_hessian: bool) -> Quadratic {
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = &a * a.transpose() + DMatrix::identity(m, m) * 0.1;
        let c = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        Quadratic { q, c, with_hessian }
    }

    fn subsets(m: usize) -> impl Iterator<Item = Vec<usize>> {
        (1u32..(1 << m)).map(move |mask| (0..m).filter(|i| mask & (1 << i) != 0).collect())
    }

    /// Enumerates supports; on each, solves the equality-constrained KKT system
    /// and keeps the best nonnegative solution.
    fn active_set_oracle(obj: &Quadratic, simplex: bool) -> (Vec<f64>, f64) {
        let m = obj.c.len();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut consider = |x: Vec<f64>| {
            if x.iter().any(|v| *v < -1e-12) {
                return;
            }
            let x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
            let v = obj.value(&x);
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((x, v));
            }
        };
        if !simplex {
            consider(vec![0.0; m]);
        }
        for support in subsets(m) {
            let k = support.len();
            let extra = usize::from(simplex);
            let mut lhs = DMatrix::zeros(k + extra, k + extra);
            let mut rhs = DVector::zeros(k + extra);
            for (a, &i) in support.iter().enumerate() {
                for (b, &j) in support.iter().enumerate() {
                    lhs[(a, b)] = obj.q[(i, j)];
                }
                rhs[a] = -obj.c[i];
                if simplex {
                    lhs[(a, k)] = 1.0;
                    lhs[(k, a)] = 1.0;
                }
            }
            if simplex {
                rhs[k] = 1.0;
            }
            if let Some(sol) = lhs.lu().solve(&rhs) {
                let mut x = vec![0.0; m];
                for (a, &i) in support.iter().enumerate() {
                    x[i] = sol[a];
                }
                consider(x);
            }
        }
        best.unwrap()
    }

    fn strict() -> SolverOptions {
        SolverOptions {
            tol: 1e-12,
            max_iters: 50_000,
        }
    }

    #[test]
    fn weights_validation() {
        assert!(SimplexWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexWeights::new(vec![]).is_err());
        let u = SimplexWeights::uniform(4);
        assert_eq!(u.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn interior_quadratic_minimum() {
        let c = [0.1, 0.2, 0.3, 0.4];
        let obj = FnObjective(|x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..4 {
                g[i] = 2.0 * (x[i] - c[i]);
                v += (x[i] - c[i]).powi(2);
            }
            v
        });
        let (w, report) = minimize_on_simplex(&obj, 4, SolverOptions::default(), None).unwrap();
        for (a, b) in w.as_slice().iter().zip(c) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(report.final_objective <= report.objective_trace[0]);
    }

    #[test]
    fn linear_objective_goes_to_vertex() {
        let g = [0.7, -0.3, 0.2, 0.5];
        let obj = FnObjective(|x: &[f64], grad: &mut [f64]| {
            grad.copy_from_slice(&g);
            x.iter().zip(g).map(|(a, b)| a * b).sum()
        });
        let (w, _) = minimize_on_simplex(&obj, 4, SolverOptions::default(), None).unwrap();
        assert!((w.as_slice()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn negative_entropy_is_minimized_at_uniform() {
        let obj = FnObjective(|x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = xi.ln() + 1.0;
                v += xi * xi.ln();
            }
            v
        });
        let skewed = SimplexWeights::new(vec![0.7, 0.1, 0.1, 0.05, 0.05]).unwrap();
        let (w, report) = minimize_on_simplex(&obj, 5, SolverOptions::default(), Some(&skewed)).unwrap();
        assert!(report.converged);
        for a in w.as_slice() {
            assert!((a - 0.2).abs() < 1e-8);
        }
    }

    #[test]
    fn simplex_matches_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..20 {
            let obj = random_quadratic(&mut rng, 5, true);
            let (want, want_value) = active_set_oracle(&obj, true);
            let (got, report) = minimize_on_simplex(&obj, 5, strict(), None).unwrap();
            assert!((report.final_objective - want_value).abs() < 1e-6);
            for (a, b) in got.as_slice().iter().zip(&want) {
                assert!((a - b).abs() < 1e-6, "trial {trial}: {:?} vs {want:?}", got.as_slice());
            }
        }
    }

    #[test]
    fn mirror_descent_alone_reaches_oracle_objective() {
        // Without a Hessian the solver stops at the round-off floor of the
        // objective; weights are then only accurate to about sqrt(ε).
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..20 {
            let obj = random_quadratic(&mut rng, 5, false);
            let (_, want) = active_set_oracle(&obj, true);
            let (_, report) = minimize_on_simplex(&obj, 5, strict(), None).unwrap();
            assert!((report.final_objective - want).abs() < 1e-9);
            let (_, want) = active_set_oracle(&obj, false);
            let (_, report) = minimize_on_nonneg(&obj, 5, strict(), None).unwrap();
            assert!((report.final_objective - want).abs() < 1e-9);
        }
    }

    #[test]
    fn nonneg_examples() {
        let c = [0.5, -1.0, 2.0];
        let obj = FnObjective(|x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * (x[i] - c[i]);
                v += (x[i] - c[i]).powi(2);
            }
            v
        });
        let (x, _) = minimize_on_nonneg(&obj, 3, SolverOptions::default(), None).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6);
        assert!(x[1].abs() < 1e-6);
        assert!((x[2] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn nonneg_matches_active_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for trial in 0..20 {
            let obj = random_quadratic(&mut rng, 4, true);
            let (want, want_value) = active_set_oracle(&obj, false);
            let (got, report) = minimize_on_nonneg(&obj, 4, strict(), None).unwrap();
            assert!((report.final_objective - want_value).abs() < 1e-6);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-6, "trial {trial}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn nan_objective_is_a_numeric_failure() {
        let obj = FnObjective(|_x: &[f64], g: &mut [f64]| {
            g.iter_mut().for_each(|v| *v = 0.0);
            f64::NAN
        });
        assert!(matches!(
            minimize_on_simplex(&obj, 3, SolverOptions::default(), None),
            Err(Error::NumericFailure { .. })
        ));
    }

    #[test]
    fn exhausted_budget_is_reported_not_raised() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let obj = random_quadratic(&mut rng, 5, false);
        let options = SolverOptions {
            tol: 1e-14,
            max_iters: 3,
        };
        let (_, report) = minimize_on_simplex(&obj, 5, options, None).unwrap();
        assert_eq!(report.iterations, 3);
        assert!(!report.converged);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[2.0, 0.0]).as_slice(), &[1.0, 0.0]);
        let on = [0.2, 0.3, 0.5];
        let p = project_to_simplex(&on);
        for (a, b) in p.as_slice().iter().zip(on) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Brute-force projection: grid search over the simplex refined locally.
    fn grid_projection(v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let steps = match m {
            2 => 20_000,
            3 => 400,
            _ => 40,
        };
        let mut best = vec![1.0 / m as f64; m];
        let mut best_d = f64::INFINITY;
        let mut point = vec![0usize; m];
        fn recurse(
            i: usize,
            left: usize,
            point: &mut Vec<usize>,
            steps: usize,
            v: &[f64],
            best: &mut Vec<f64>,
            best_d: &mut f64,
        ) {
            let m = v.len();
            if i == m - 1 {
                point[i] = left;
                let x: Vec<f64> = point.iter().map(|&k| k as f64 / steps as f64).collect();
                let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < *best_d {
                    *best_d = d;
                    *best = x;
                }
                return;
            }
            for k in 0..=left {
                point[i] = k;
                recurse(i + 1, left - k, point, steps, v, best, best_d);
            }
        }
        recurse(0, steps, &mut point, steps, v, &mut best, &mut best_d);
        // Local refinement by coordinate-pair exchanges at shrinking scales.
        let mut h = 1.0 / steps as f64;
        while h > 1e-9 {
            let mut improved = true;
            while improved {
                improved = false;
                for a in 0..m {
                    for b in 0..m {
                        if a == b || best[b] < h {
                            continue;
                        }
                        let mut x = best.clone();
                        x[a] += h;
                        x[b] -= h;
                        let d: f64 = x.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum();
                        if d < best_d {
                            best_d = d;
                            best = x;
                            improved = true;
                        }
                    }
                }
            }
            h *= 0.5;
        }
        best
    }

    #[test]
    fn projection_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..30 {
            let m = rng.random_range(2..=5);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.5)).collect();
            let got = project_to_simplex(&v);
            let want = grid_projection(&v);
            for (a, b) in got.as_slice().iter().zip(&want) {
                assert!((a - b).abs() < 1e-6, "{v:?}: {:?} vs {want:?}", got.as_slice());
            }
        }
    }

    #[test]
    fn primary_and_projected_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..20 {
            let m = rng.random_range(2..8);
            let obj = random_quadratic(&mut rng, m, false);
            let (_, primary) = minimize_on_simplex(&obj, m, strict(), None).unwrap();
            let (_, projected) = minimize_on_simplex_projected(&obj, m, strict(), None).unwrap();
            assert!((primary.final_objective - projected.final_objective).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn feasible_and_monotone(seed in 0u64..1_000_000, m in 1usize..9, hess in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obj = random_quadratic(&mut rng, m, hess);
            let (w, report) = minimize_on_simplex(&obj, m, SolverOptions::default(), None).unwrap();
            prop_assert!(SimplexWeights::new(w.clone().into_vec()).is_ok());
            for pair in report.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12);
            }
            prop_assert!(report.final_objective <= obj.value(&vec![1.0 / m as f64; m]) + 1e-12);

            let (x, report) = minimize_on_nonneg(&obj, m, SolverOptions::default(), None).unwrap();
            prop_assert!(x.iter().all(|v| *v >= 0.0));
            for pair in report.objective_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12);
            }
        }
    }
}
