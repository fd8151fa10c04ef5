//! Kernel f-divergence estimators.
//!
//! All three estimators minimize over weights α on the Y sample:
//!
//! * restricted: `J(α) = (1/n) Σ f(nαᵢ) + MMD²(α) / (2λ)` over the simplex;
//! * norm ball: `(1/n) Σ f(nαᵢ)` over the simplex subject to `MMD(α) ≤ √λ`;
//! * NWJ baseline: the restricted objective over `α ≥ 0` instead.
//!
//! The reported divergence estimate is `(1/n) Σ f(nαᵢ)` at the optimum, and
//! `nαᵢ` estimates the density ratio dP/dQ at `yᵢ`.

use crate::error::{Error, Result};
use crate::generators::DivergenceGenerator;
use crate::kernels::{gram_blocks, mmd_from_product, pooled_variance_bandwidth, GramBlocks, KernelSpec};
use crate::simplex::{minimize_on_nonneg, minimize_on_simplex, Objective, SimplexWeights, SolverOptions, SolverReport};
use nalgebra::{DMatrix, DVector};

/// How λ is chosen for a sample of size n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// λₙ = c / n
    Schedule {
        c: f64,
    },
}

impl LambdaRule {
    pub fn resolve(&self, n: usize) -> Result<f64> {
        let lambda = match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::Schedule { c } => c / n as f64,
        };
        if lambda > 0.0 && lambda.is_finite() {
            Ok(lambda)
        } else {
            Err(Error::Precondition(format!(
                "lambda must be positive and finite, got {lambda}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelRule {
    Fixed(KernelSpec),
    PooledVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub generator: DivergenceGenerator,
    pub lambda_rule: LambdaRule,
    pub kernel: KernelRule,
    pub solver_tol: f64,
    pub solver_max_iters: usize,
}

impl EstimatorConfig {
    /// λₙ = 1/n, pooled-variance bandwidth, tight solver tolerance.
    pub fn new(generator: DivergenceGenerator) -> Self {
        EstimatorConfig {
            generator,
            lambda_rule: LambdaRule::Schedule { c: 1.0 },
            kernel: KernelRule::PooledVariance,
            solver_tol: 1e-10,
            solver_max_iters: 50_000,
        }
    }

    fn solver_options(&self) -> Result<SolverOptions> {
        if !(self.solver_tol > 0.0) {
            return Err(Error::Precondition(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tol
            )));
        }
        Ok(SolverOptions {
            tol: self.solver_tol,
            max_iters: self.solver_max_iters,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// Optimal weights; on the simplex except for the NWJ baseline.
    pub alpha: Vec<f64>,
    /// Full objective at the optimum (for the norm ball, the f-term alone).
    pub objective_value: f64,
    /// (1/n) Σ f(nαᵢ)
    pub divergence_estimate: f64,
    /// Weighted squared MMD at the optimum.
    pub mmd_term: f64,
    /// nαᵢ
    pub density_ratio_at_y: Vec<f64>,
    pub report: SolverReport,
    pub lambda: f64,
    /// Bandwidth used, when the estimator built the Gram blocks itself.
    pub kernel: Option<KernelSpec>,
    pub blocks: GramBlocks,
}

/// `(1/n) Σ f(nαᵢ) + weight · MMD²(α)`, with analytic gradient and Hessian.
///
/// The restricted and NWJ estimators use `weight = 1/(2λ)`; the norm-ball
/// estimator varies it as a Lagrange multiplier.
pub struct PenalizedObjective<'a> {
    generator: &'a DivergenceGenerator,
    blocks: &'a GramBlocks,
    weight: f64,
}

impl<'a> PenalizedObjective<'a> {
    pub fn new(generator: &'a DivergenceGenerator, blocks: &'a GramBlocks, weight: f64) -> Self {
        PenalizedObjective {
            generator,
            blocks,
            weight,
        }
    }

    /// The objective `J(α)` for regularization λ.
    pub fn for_lambda(generator: &'a DivergenceGenerator, blocks: &'a GramBlocks, lambda: f64) -> Self {
        Self::new(generator, blocks, 0.5 / lambda)
    }

    fn scale(&self) -> f64 {
        self.blocks.m as f64
    }

    fn f_term(&self, x: &[f64]) -> f64 {
        let n = self.scale();
        x.iter().map(|a| self.generator.f(n * a)).sum::<f64>() / n
    }
}

impl Objective for PenalizedObjective<'_> {
    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.scale();
        let a = DVector::from_column_slice(x);
        let kyy_a = &self.blocks.kyy * &a;
        let b = self.blocks.kxy_col_means();
        for i in 0..x.len() {
            grad[i] = self.generator.fprime(n * x[i]) + 2.0 * self.weight * (kyy_a[i] - b[i]);
        }
        self.f_term(x) + self.weight * mmd_from_product(self.blocks, &a, &kyy_a)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let a = DVector::from_column_slice(x);
        let kyy_a = &self.blocks.kyy * &a;
        self.f_term(x) + self.weight * mmd_from_product(self.blocks, &a, &kyy_a)
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.scale();
        let mut h = &self.blocks.kyy * (2.0 * self.weight);
        for (i, a) in x.iter().enumerate() {
            h[(i, i)] += n * self.generator.fsecond(n * a);
        }
        Some(h)
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(x.ncols(), y.ncols()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Precondition(format!(
            "samples must have equal sizes, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Precondition("need at least two points per sample".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("samples contain non-finite values".into()));
    }
    Ok(())
}

fn check_generator(generator: &DivergenceGenerator) -> Result<()> {
    if !generator.is_smooth() {
        return Err(Error::Precondition(format!(
            "generator `{}` is not differentiable; the estimators need f′ and f″",
            generator.name()
        )));
    }
    Ok(())
}

fn build_blocks(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &EstimatorConfig) -> Result<(GramBlocks, KernelSpec)> {
    check_inputs(x, y)?;
    let spec = match config.kernel {
        KernelRule::Fixed(spec) => spec,
        KernelRule::PooledVariance => pooled_variance_bandwidth(x, y)?,
    };
    Ok((gram_blocks(x, y, &spec)?, spec))
}

fn finish(
    generator: &DivergenceGenerator,
    blocks: GramBlocks,
    alpha: Vec<f64>,
    report: SolverReport,
    lambda: f64,
    penalized: bool,
) -> EstimateResult {
    let n = blocks.m as f64;
    let a = DVector::from_column_slice(&alpha);
    let kyy_a = &blocks.kyy * &a;
    let mmd_term = mmd_from_product(&blocks, &a, &kyy_a);
    let divergence_estimate = alpha.iter().map(|v| generator.f(n * v)).sum::<f64>() / n;
    let objective_value = if penalized {
        divergence_estimate + mmd_term / (2.0 * lambda)
    } else {
        divergence_estimate
    };
    EstimateResult {
        density_ratio_at_y: alpha.iter().map(|v| n * v).collect(),
        alpha,
        objective_value,
        divergence_estimate,
        mmd_term,
        report,
        lambda,
        kernel: None,
        blocks,
    }
}

fn check_blocks(blocks: &GramBlocks) -> Result<()> {
    if blocks.n != blocks.m {
        return Err(Error::Precondition(format!(
            "samples must have equal sizes, got {} and {}",
            blocks.n, blocks.m
        )));
    }
    if blocks.m < 2 {
        return Err(Error::Precondition("need at least two points per sample".into()));
    }
    Ok(())
}

/// Restricted estimator on precomputed Gram blocks.
pub fn estimate_restricted_from_blocks(blocks: GramBlocks, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    check_blocks(&blocks)?;
    let lambda = config.lambda_rule.resolve(blocks.n)?;
    let objective = PenalizedObjective {
        generator: &config.generator,
        blocks: &blocks,
        weight: 0.5 / lambda,
    };
    let (alpha, report) = minimize_on_simplex(&objective, blocks.m, config.solver_options()?, None)?;
    Ok(finish(
        &config.generator,
        blocks,
        alpha.into_vec(),
        report,
        lambda,
        true,
    ))
}

/// Restricted (simplex) estimator: minimizes `J(α)` over the simplex.
pub fn estimate_restricted(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    let (blocks, spec) = build_blocks(x, y, config)?;
    let mut result = estimate_restricted_from_blocks(blocks, config)?;
    result.kernel = Some(spec);
    Ok(result)
}

/// NWJ-style baseline on precomputed Gram blocks.
pub fn estimate_nwj_from_blocks(blocks: GramBlocks, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    check_blocks(&blocks)?;
    let lambda = config.lambda_rule.resolve(blocks.n)?;
    let objective = PenalizedObjective {
        generator: &config.generator,
        blocks: &blocks,
        weight: 0.5 / lambda,
    };
    let (alpha, report) = minimize_on_nonneg(&objective, blocks.m, config.solver_options()?, None)?;
    Ok(finish(&config.generator, blocks, alpha, report, lambda, true))
}

/// NWJ-style baseline: the restricted objective over `α ≥ 0`.
pub fn estimate_nwj(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    let (blocks, spec) = build_blocks(x, y, config)?;
    let mut result = estimate_nwj_from_blocks(blocks, config)?;
    result.kernel = Some(spec);
    Ok(result)
}

const MULTIPLIER_LO: f64 = 1e-8;
const MULTIPLIER_HI: f64 = 1e8;
const MULTIPLIER_STEPS: usize = 40;

/// Norm-ball estimator on precomputed Gram blocks.
///
/// Bisects the multiplier μ of the penalized program `f-term + μ·MMD²` in log
/// space and returns the feasible end of the final bracket.
pub fn estimate_norm_ball_from_blocks(blocks: GramBlocks, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    check_blocks(&blocks)?;
    let lambda = config.lambda_rule.resolve(blocks.n)?;
    let radius = lambda.sqrt();
    let options = config.solver_options()?;
    let m = blocks.m;

    let uniform = SimplexWeights::uniform(m);
    let uniform_mmd2 = crate::kernels::weighted_mmd_squared(&blocks, uniform.as_slice())?;
    if uniform_mmd2.max(0.0).sqrt() <= radius {
        let report = SolverReport {
            iterations: 0,
            final_objective: 0.0,
            kkt_residual: 0.0,
            converged: true,
            objective_trace: vec![0.0],
        };
        return Ok(finish(
            &config.generator,
            blocks,
            uniform.into_vec(),
            report,
            lambda,
            false,
        ));
    }

    let solve = |mu: f64, init: Option<&SimplexWeights>| -> Result<(SimplexWeights, SolverReport, f64)> {
        let objective = PenalizedObjective {
            generator: &config.generator,
            blocks: &blocks,
            weight: mu,
        };
        let (alpha, report) = minimize_on_simplex(&objective, m, options, init)?;
        let mmd = crate::kernels::weighted_mmd_squared(&blocks, alpha.as_slice())?
            .max(0.0)
            .sqrt();
        Ok((alpha, report, mmd))
    };

    let (mut feasible, mut feasible_report, min_mmd) = solve(MULTIPLIER_HI, None)?;
    if min_mmd > radius {
        return Err(Error::Infeasible { radius, min_mmd });
    }
    let (mut lo, mut hi) = (MULTIPLIER_LO.ln(), MULTIPLIER_HI.ln());
    let mut warm = feasible.clone();
    for _ in 0..MULTIPLIER_STEPS {
        let mid = 0.5 * (lo + hi);
        let (alpha, report, mmd) = solve(mid.exp(), Some(&warm))?;
        warm = alpha.clone();
        if mmd <= radius {
            hi = mid;
            feasible = alpha;
            feasible_report = report;
        } else {
            lo = mid;
        }
    }
    Ok(finish(
        &config.generator,
        blocks,
        feasible.into_vec(),
        feasible_report,
        lambda,
        false,
    ))
}

/// Norm-ball estimator: minimizes the f-term over the simplex subject to
/// `MMD(α) ≤ √λ`.
pub fn estimate_norm_ball(x: &DMatrix<f64>, y: &DMatrix<f64>, config: &EstimatorConfig) -> Result<EstimateResult> {
    check_generator(&config.generator)?;
    let (blocks, spec) = build_blocks(x, y, config)?;
    let mut result = estimate_norm_ball_from_blocks(blocks, config)?;
    result.kernel = Some(spec);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{all_generators, make_generator};
    use crate::kernels::weighted_mmd_squared;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kl_config() -> EstimatorConfig {
        EstimatorConfig::new(make_generator("kl").unwrap())
    }

    fn smooth_generators() -> Vec<DivergenceGenerator> {
        all_generators().into_iter().filter(|g| g.is_smooth()).collect()
    }

    fn sample(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0) + shift)
    }

    fn toy_blocks() -> GramBlocks {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 0.4]);
        let y = DMatrix::from_row_slice(2, 1, &[0.3, 1.5]);
        gram_blocks(&x, &y, &KernelSpec::new(0.5).unwrap()).unwrap()
    }

    fn j(gen: &DivergenceGenerator, blocks: &GramBlocks, lambda: f64, a: &[f64]) -> f64 {
        let n = a.len() as f64;
        a.iter().map(|v| gen.f(n * v)).sum::<f64>() / n + weighted_mmd_squared(blocks, a).unwrap() / (2.0 * lambda)
    }

    #[test]
    fn identical_samples_give_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample(&mut rng, 30, 2, 0.0);
        let r = estimate_restricted(&x, &x, &kl_config()).unwrap();
        assert!(r.divergence_estimate <= 1e-6);
        for a in &r.alpha {
            assert!((a - 1.0 / 30.0).abs() < 1e-8);
        }
    }

    #[test]
    fn restricted_matches_grid_on_two_points() {
        let blocks = toy_blocks();
        for gen in smooth_generators() {
            let config = EstimatorConfig::new(gen);
            let r = estimate_restricted_from_blocks(blocks.clone(), &config).unwrap();
            let lambda = 0.5;
            let mut best = (f64::INFINITY, 0.0);
            for k in 1..10_000 {
                let t = k as f64 / 10_000.0;
                let v = j(&gen, &blocks, lambda, &[t, 1.0 - t]);
                if v < best.0 {
                    best = (v, t);
                }
            }
            assert!(
                (r.alpha[0] - best.1).abs() < 1e-4,
                "{}: {} vs {}",
                gen.name(),
                r.alpha[0],
                best.1
            );
            assert!(r.objective_value <= best.0 + 1e-12);
        }
    }

    #[test]
    fn nwj_matches_grid_on_two_points() {
        let blocks = toy_blocks();
        let gen = make_generator("kl").unwrap();
        let r = estimate_nwj_from_blocks(blocks.clone(), &EstimatorConfig::new(gen)).unwrap();
        // Coarse grid over [0, 3]², then successively finer grids around the best cell.
        let (mut c0, mut c1, mut half) = (1.5, 1.5, 1.5);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for _ in 0..8 {
            let steps = 300;
            for i in 0..=steps {
                for k in 0..=steps {
                    let a0 = c0 - half + 2.0 * half * i as f64 / steps as f64;
                    let a1 = c1 - half + 2.0 * half * k as f64 / steps as f64;
                    if a0 < 0.0 || a1 < 0.0 {
                        continue;
                    }
                    let v = j(&gen, &blocks, 0.5, &[a0, a1]);
                    if v < best.0 {
                        best = (v, a0, a1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            half *= 0.05;
        }
        assert!((r.alpha[0] - best.1).abs() < 1e-4);
        assert!((r.alpha[1] - best.2).abs() < 1e-4);
        assert!(r.objective_value <= best.0 + 1e-12);
    }

    #[test]
    fn norm_ball_matches_grid_on_two_points() {
        let blocks = toy_blocks();
        let gen = make_generator("kl").unwrap();
        let mut config = EstimatorConfig::new(gen);
        config.lambda_rule = LambdaRule::Fixed(0.05);
        let r = estimate_norm_ball_from_blocks(blocks.clone(), &config).unwrap();
        let radius = 0.05f64.sqrt();
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let t = k as f64 / 10_000.0;
            let a = [t, 1.0 - t];
            if weighted_mmd_squared(&blocks, &a).unwrap().max(0.0).sqrt() > radius {
                continue;
            }
            let v = (gen.f(2.0 * t) + gen.f(2.0 - 2.0 * t)) / 2.0;
            if v < best.0 {
                best = (v, t);
            }
        }
        assert!(best.0.is_finite());
        assert!((r.divergence_estimate - best.0).abs() < 1e-3);
        assert!(r.mmd_term.sqrt() <= radius + 1e-6);
    }

    #[test]
    fn norm_ball_uniform_when_unconstrained() {
        let blocks = toy_blocks();
        let mut config = kl_config();
        config.lambda_rule = LambdaRule::Fixed(10.0);
        let r = estimate_norm_ball_from_blocks(blocks, &config).unwrap();
        assert_eq!(r.alpha, vec![0.5, 0.5]);
        assert_eq!(r.divergence_estimate, 0.0);
    }

    #[test]
    fn norm_ball_infeasible_reports_minimal_mmd() {
        let blocks = toy_blocks();
        let mut config = kl_config();
        config.lambda_rule = LambdaRule::Fixed(1e-6);
        match estimate_norm_ball_from_blocks(blocks, &config) {
            Err(Error::Infeasible { radius, min_mmd }) => {
                assert!((radius - 1e-3).abs() < 1e-15);
                assert!(min_mmd > radius);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn norm_ball_estimate_grows_as_lambda_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = sample(&mut rng, 20, 1, 0.0);
        let y = sample(&mut rng, 20, 1, 0.3);
        let mut config = kl_config();
        let uniform_mmd = {
            let (blocks, _) = build_blocks(&x, &y, &config).unwrap();
            weighted_mmd_squared(&blocks, &[1.0 / 20.0; 20]).unwrap().sqrt()
        };
        config.lambda_rule = LambdaRule::Fixed(1e-12);
        let min_mmd = match estimate_norm_ball(&x, &y, &config) {
            Err(Error::Infeasible { min_mmd, .. }) => min_mmd,
            other => panic!("expected infeasibility, got {other:?}"),
        };
        let mut previous = -1.0;
        for frac in [0.95, 0.75, 0.5, 0.25, 0.05] {
            let radius = min_mmd + frac * (uniform_mmd - min_mmd);
            config.lambda_rule = LambdaRule::Fixed(radius * radius);
            let r = estimate_norm_ball(&x, &y, &config).unwrap();
            assert!(r.mmd_term.sqrt() <= radius + 1e-6);
            assert!(
                r.divergence_estimate > previous,
                "{frac}: {} <= {previous}",
                r.divergence_estimate
            );
            previous = r.divergence_estimate;
        }
    }

    #[test]
    fn invariants_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..12 {
            let n = rng.random_range(5..25);
            let d = rng.random_range(1..4);
            let x = sample(&mut rng, n, d, 0.0);
            let shift = rng.random_range(-0.5..0.5);
            let y = sample(&mut rng, n, d, shift);
            for gen in smooth_generators() {
                let config = EstimatorConfig::new(gen);
                let r = estimate_restricted(&x, &y, &config).unwrap();
                let nwj = estimate_nwj(&x, &y, &config).unwrap();
                let ctx = format!("trial {trial} {}", gen.name());
                assert!(r.report.converged, "{ctx}: {:?}", r.report);
                assert!(nwj.report.converged, "{ctx}: {:?}", nwj.report.kkt_residual);
                assert!(r.objective_value >= nwj.objective_value - 1e-8, "{ctx}");
                assert!(r.divergence_estimate >= -1e-10, "{ctx}");
                for res in [&r, &nwj] {
                    let rebuilt = res.divergence_estimate + res.mmd_term / (2.0 * res.lambda);
                    assert!((rebuilt - res.objective_value).abs() <= 1e-9);
                    assert!((rebuilt - res.report.final_objective).abs() <= 1e-9);
                }
                assert!((r.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(nwj.alpha.iter().all(|a| *a >= 0.0));
            }
        }
    }

    #[test]
    fn permuting_y_permutes_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = sample(&mut rng, 40, 2, 0.0);
        let y = sample(&mut rng, 40, 2, 0.25);
        let mut order: Vec<usize> = (0..40).collect();
        order.shuffle(&mut rng);
        let y_perm = y.select_rows(order.iter());
        for gen in smooth_generators() {
            let config = EstimatorConfig::new(gen);
            let base = estimate_restricted(&x, &y, &config).unwrap();
            let perm = estimate_restricted(&x, &y_perm, &config).unwrap();
            assert!(
                (base.divergence_estimate - perm.divergence_estimate).abs() <= 1e-10,
                "{}",
                gen.name()
            );
            for (k, &i) in order.iter().enumerate() {
                assert!((perm.alpha[k] - base.alpha[i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn rescaling_data_leaves_estimates_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = sample(&mut rng, 30, 3, 0.0);
        let y = sample(&mut rng, 30, 3, 0.2);
        for c in [1e-3, 0.37, 12.0] {
            for gen in smooth_generators() {
                let config = EstimatorConfig::new(gen);
                let base = estimate_restricted(&x, &y, &config).unwrap();
                let scaled = estimate_restricted(&(&x * c), &(&y * c), &config).unwrap();
                assert!(
                    (base.divergence_estimate - scaled.divergence_estimate).abs() <= 1e-9,
                    "{} c={c}",
                    gen.name()
                );
                let diff = (&base.blocks.kyy - &scaled.blocks.kyy).amax();
                assert!(diff <= 1e-9);
            }
        }
    }

    #[test]
    fn supplied_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = sample(&mut rng, 8, 2, 0.0);
        let y = sample(&mut rng, 8, 2, 0.3);
        let (blocks, _) = build_blocks(&x, &y, &kl_config()).unwrap();
        for gen in smooth_generators() {
            let objective = PenalizedObjective {
                generator: &gen,
                blocks: &blocks,
                weight: 4.0,
            };
            for _ in 0..20 {
                let raw: Vec<f64> = (0..8).map(|_| rng.random_range(0.2..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let a: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let mut grad = vec![0.0; 8];
                objective.evaluate(&a, &mut grad);
                let hess = objective.hessian(&a).unwrap();
                for i in 0..8 {
                    let h = 1e-6 * a[i];
                    let mut up = a.clone();
                    let mut down = a.clone();
                    up[i] += h;
                    down[i] -= h;
                    let fd = (objective.value(&up) - objective.value(&down)) / (2.0 * h);
                    assert!(
                        ((fd - grad[i]) / grad[i].abs().max(1.0)).abs() <= 1e-5,
                        "{} grad {i}",
                        gen.name()
                    );

                    let mut g_up = vec![0.0; 8];
                    let mut g_down = vec![0.0; 8];
                    objective.evaluate(&up, &mut g_up);
                    objective.evaluate(&down, &mut g_down);
                    for k in 0..8 {
                        let fd = (g_up[k] - g_down[k]) / (2.0 * h);
                        assert!(((fd - hess[(k, i)]) / hess[(k, i)].abs().max(1.0)).abs() <= 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = sample(&mut rng, 10, 1, 0.0);
        let y = sample(&mut rng, 9, 1, 0.0);
        assert!(matches!(
            estimate_restricted(&x, &y, &kl_config()),
            Err(Error::Precondition(_))
        ));
        let z = sample(&mut rng, 10, 2, 0.0);
        assert!(matches!(
            estimate_restricted(&x, &z, &kl_config()),
            Err(Error::DimensionMismatch(1, 2))
        ));
        let tv = EstimatorConfig::new(make_generator("total_variation").unwrap());
        assert!(estimate_restricted(&x, &x, &tv).is_err());
        let same = DMatrix::from_element(10, 1, 0.5);
        assert!(matches!(
            estimate_restricted(&same, &same, &kl_config()),
            Err(Error::DegenerateSample(_))
        ));
        let mut bad = x.clone();
        bad[(3, 0)] = f64::NAN;
        assert!(estimate_nwj(&bad, &x, &kl_config()).is_err());
        let mut zero_lambda = kl_config();
        zero_lambda.lambda_rule = LambdaRule::Fixed(0.0);
        assert!(estimate_restricted(&x, &x, &zero_lambda).is_err());
    }
}
