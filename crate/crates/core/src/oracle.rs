//! Exact computations for pairs of finite distributions: the divergence, the
//! plain and density-restricted conjugates, and the ordering between them.
//!
//! For a PMF pair (p, q) and a test function φ:
//!
//! ```text
//! I_f(p, q) ≥ E_p[φ] − R(φ) ≥ E_p[φ] − E_q[f*(φ)]
//! ```
//!
//! where `R(φ) = sup { Σ qᵢ(φᵢrᵢ − f(rᵢ)) : r ≥ 0, Σ qᵢrᵢ = 1 }` is the conjugate
//! taken over densities only. `R` is evaluated through its one-dimensional
//! dual `R(φ) = min_ν ν + Σ qᵢ f*(φᵢ − ν)`.

use crate::error::{Error, Result};
use crate::generators::DivergenceGenerator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const PMF_TOL: f64 = 1e-12;
const MIN_Q: f64 = 1e-12;

/// Two PMFs on a common finite support, with q strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePair {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl DiscretePair {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch {
                expected: q.len(),
                actual: p.len(),
            });
        }
        if p.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        for (label, v) in [("p", &p), ("q", &q)] {
            if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "{label} has a negative or non-finite entry"
                )));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > PMF_TOL {
                return Err(Error::InvalidDistribution(format!("{label} sums to {s}")));
            }
        }
        if let Some(x) = q.iter().find(|x| **x < MIN_Q) {
            return Err(Error::InvalidDistribution(format!(
                "q entry {x} is below {MIN_Q}; p must be absolutely continuous w.r.t. q"
            )));
        }
        Ok(DiscretePair { p, q })
    }

    pub fn support_size(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// pᵢ / qᵢ
    pub fn ratio(&self) -> Vec<f64> {
        self.p.iter().zip(&self.q).map(|(p, q)| p / q).collect()
    }

    fn expect_p(&self, phi: &TestFunction) -> Result<f64> {
        self.check(phi)?;
        Ok(self.p.iter().zip(&phi.phi).map(|(p, f)| p * f).sum())
    }

    fn check(&self, phi: &TestFunction) -> Result<()> {
        if phi.phi.len() != self.p.len() {
            return Err(Error::LengthMismatch {
                expected: self.p.len(),
                actual: phi.phi.len(),
            });
        }
        Ok(())
    }
}

/// A function on the finite support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    phi: Vec<f64>,
}

impl TestFunction {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("test function entries must be finite".into()));
        }
        Ok(TestFunction { phi })
    }

    pub fn constant(m: usize, c: f64) -> Self {
        TestFunction { phi: vec![c; m] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phi
    }

    pub fn shifted(&self, c: f64) -> Self {
        TestFunction {
            phi: self.phi.iter().map(|v| v + c).collect(),
        }
    }
}

/// Σ qᵢ f(pᵢ/qᵢ), using f(0) for empty atoms of p.
pub fn exact_divergence(pair: &DiscretePair, gen: &DivergenceGenerator) -> f64 {
    pair.p.iter().zip(&pair.q).map(|(p, q)| q * gen.f(p / q)).sum()
}

/// Σ qᵢ f*(φᵢ); `+∞` when some φᵢ lies outside the dual domain.
pub fn unrestricted_conjugate_value(pair: &DiscretePair, gen: &DivergenceGenerator, phi: &TestFunction) -> Result<f64> {
    pair.check(phi)?;
    Ok(pair.q.iter().zip(&phi.phi).map(|(q, u)| q * gen.fstar(*u)).sum())
}

fn dual_objective(pair: &DiscretePair, gen: &DivergenceGenerator, phi: &[f64], nu: f64) -> f64 {
    nu + pair.q.iter().zip(phi).map(|(q, u)| q * gen.fstar(u - nu)).sum::<f64>()
}

/// Conjugate restricted to densities, `sup_{r ∈ Δ(q)} Σ qᵢ(φᵢrᵢ − f(rᵢ))`.
///
/// Smooth generators: bisection on the normalization multiplier ν, using
/// `rᵢ(ν) = argmax_t t(φᵢ − ν) − f(t)` and `Σ qᵢ rᵢ(ν) = 1`, then the value
/// through the dual. Piecewise-linear generators: the dual is piecewise linear
/// in ν, so its minimum is found exactly by enumerating breakpoints.
pub fn restricted_conjugate_value(pair: &DiscretePair, gen: &DivergenceGenerator, phi: &TestFunction) -> Result<f64> {
    pair.check(phi)?;
    let phi = phi.as_slice();
    let lo_phi = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_phi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if !gen.is_smooth() {
        // Candidate ν: where the largest φᵢ − ν reaches the top of the dual
        // domain, and where each φᵢ − ν crosses the bottom of the range of f′.
        let top = gen.dual_domain().hi;
        let kink = gen.fprime_limit_at_zero();
        let start = hi_phi - top;
        // Every candidate satisfies ν ≥ start, so φᵢ − ν > top can only be
        // round-off in `hi_phi − (hi_phi − top)`; clamp it back into the domain.
        let dual = |nu: f64| -> f64 {
            nu + pair
                .q
                .iter()
                .zip(phi)
                .map(|(q, u)| q * gen.fstar((u - nu).min(top)))
                .sum::<f64>()
        };
        let best = std::iter::once(start)
            .chain(phi.iter().map(|u| u - kink).filter(|nu| *nu >= start))
            .map(dual)
            .fold(f64::INFINITY, f64::min);
        return if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::NumericFailure {
                iteration: 0,
                message: format!("no finite dual value for `{}`", gen.name()),
            })
        };
    }

    // Σ qᵢ rᵢ(ν) is nonincreasing in ν; at ν = min φ − f′(1) every rᵢ ≥ 1 and
    // at ν = max φ − f′(1) every rᵢ ≤ 1, so this bracket straddles the root.
    let anchor = gen.fprime(1.0);
    let mass = |nu: f64| -> f64 {
        pair.q
            .iter()
            .zip(phi)
            .map(|(q, u)| q * gen.conjugate_argmax(u - nu))
            .sum()
    };
    let (mut lo, mut hi) = (lo_phi - anchor, hi_phi - anchor);
    let (m_lo, m_hi) = (mass(lo), mass(hi));
    if !(m_lo >= 1.0 - 1e-12 && m_hi <= 1.0 + 1e-12) {
        return Err(Error::NumericFailure {
            iteration: 0,
            message: format!(
                "multiplier bracket [{lo}, {hi}] does not straddle unit mass (masses {m_lo}, {m_hi}) for `{}`",
                gen.name()
            ),
        });
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both ends give upper bounds on the dual minimum; keep the smaller.
    let value = dual_objective(pair, gen, phi, lo).min(dual_objective(pair, gen, phi, hi));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericFailure {
            iteration: 0,
            message: format!("dual value is not finite at ν ∈ [{lo}, {hi}] for `{}`", gen.name()),
        })
    }
}

/// The three sides of the bound chain and the two gaps between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainReport {
    pub divergence: f64,
    /// E_p[φ] − R(φ)
    pub mid: f64,
    /// E_p[φ] − E_q[f*(φ)]; `−∞` when φ leaves the dual domain.
    pub low: f64,
    pub upper_slack: f64,
    pub lower_slack: f64,
}

pub const CHAIN_TOL: f64 = 1e-9;

/// Evaluates the chain `I_f ≥ mid ≥ low` and fails if either gap is below −1e−9.
pub fn verify_tightness_chain(
    pair: &DiscretePair,
    gen: &DivergenceGenerator,
    phi: &TestFunction,
) -> Result<ChainReport> {
    let report = chain_values(pair, gen, phi)?;
    if !(report.upper_slack >= -CHAIN_TOL) || !(report.lower_slack >= -CHAIN_TOL) {
        return Err(Error::Certification(format!(
            "bound chain violated for `{}`: I_f = {}, mid = {}, low = {}",
            gen.name(),
            report.divergence,
            report.mid,
            report.low
        )));
    }
    Ok(report)
}

fn chain_values(pair: &DiscretePair, gen: &DivergenceGenerator, phi: &TestFunction) -> Result<ChainReport> {
    let e_p = pair.expect_p(phi)?;
    let divergence = exact_divergence(pair, gen);
    let mid = e_p - restricted_conjugate_value(pair, gen, phi)?;
    let low = e_p - unrestricted_conjugate_value(pair, gen, phi)?;
    let upper_slack = if divergence == f64::INFINITY {
        f64::INFINITY
    } else {
        divergence - mid
    };
    let lower_slack = if low == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        mid - low
    };
    Ok(ChainReport {
        divergence,
        mid,
        low,
        upper_slack,
        lower_slack,
    })
}

/// φᵢ = f′(pᵢ/qᵢ), the first-order maximizer of the middle expression.
pub fn optimal_phi(pair: &DiscretePair, gen: &DivergenceGenerator) -> Result<TestFunction> {
    let mut phi = Vec::with_capacity(pair.support_size());
    for (i, r) in pair.ratio().into_iter().enumerate() {
        let v = if r == 0.0 {
            gen.fprime_limit_at_zero()
        } else {
            gen.fprime(r)
        };
        if !v.is_finite() {
            return Err(Error::Boundary(format!(
                "p vanishes at atom {i} and f′(0) is unbounded for `{}`; smooth p away from zero",
                gen.name()
            )));
        }
        phi.push(v);
    }
    TestFunction::new(phi)
}

/// KL ≥ E_p[φ] − ln E_q[e^φ] ≥ E_p[φ] − E_q[e^φ] + 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlChainReport {
    pub kl: f64,
    pub donsker_varadhan: f64,
    pub loose: f64,
    pub upper_slack: f64,
    pub lower_slack: f64,
}

pub fn verify_kl_specialization(pair: &DiscretePair, phi: &TestFunction) -> Result<KlChainReport> {
    let e_p = pair.expect_p(phi)?;
    let kl: f64 = pair
        .p
        .iter()
        .zip(&pair.q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q).ln())
        .sum();
    // log-sum-exp with the maximum factored out
    let top = phi.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: f64 = pair.q.iter().zip(&phi.phi).map(|(q, v)| q * (v - top).exp()).sum();
    let log_mgf = top + scaled.ln();
    let mgf = scaled * top.exp();
    let donsker_varadhan = e_p - log_mgf;
    let loose = e_p - mgf + 1.0;
    let report = KlChainReport {
        kl,
        donsker_varadhan,
        loose,
        upper_slack: kl - donsker_varadhan,
        lower_slack: donsker_varadhan - loose,
    };
    if !(report.upper_slack >= -CHAIN_TOL) || !(report.lower_slack >= -CHAIN_TOL) {
        return Err(Error::Certification(format!(
            "KL chain violated: KL = {kl}, DV = {donsker_varadhan}, loose = {loose}"
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Randomized certification battery

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub trials: usize,
    pub max_support: usize,
    pub generators: Vec<DivergenceGenerator>,
    pub seed: u64,
}

/// Pass/fail counts for one property and the smallest margin seen.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckTally {
    pub check: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Smallest (most negative) margin, measured so that ≥ −tolerance passes.
    pub worst_slack: f64,
}

/// A failing instance, serialized for replay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureCase {
    pub generator: String,
    pub check: &'static str,
    pub trial: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub phi: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorReport {
    pub generator: String,
    pub checks: Vec<CheckTally>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub seed: u64,
    pub trials: usize,
    pub generators: Vec<GeneratorReport>,
    /// Only the first few failures are kept.
    pub failures: Vec<FailureCase>,
    pub total_failures: usize,
}

impl CertifyReport {
    pub fn all_passed(&self) -> bool {
        self.total_failures == 0
    }
}

const SHIFT_TOL: f64 = 1e-9;
const ATTAINMENT_TOL: f64 = 1e-6;
const MAX_RECORDED_FAILURES: usize = 20;
const ASCENT_STEPS: usize = 60;

struct Tallies {
    checks: Vec<CheckTally>,
}

impl Tallies {
    fn new(names: &[&'static str]) -> Self {
        Tallies {
            checks: names
                .iter()
                .map(|&check| CheckTally {
                    check,
                    passed: 0,
                    failed: 0,
                    worst_slack: f64::INFINITY,
                })
                .collect(),
        }
    }

    /// Records `slack` against `-tol`; returns whether it passed.
    fn record(&mut self, check: &'static str, slack: f64, tol: f64) -> bool {
        let t = self.checks.iter_mut().find(|t| t.check == check).expect("known check");
        t.worst_slack = t.worst_slack.min(slack);
        let ok = slack >= -tol;
        if ok {
            t.passed += 1;
        } else {
            t.failed += 1;
        }
        ok
    }
}

fn random_pmf(rng: &mut ChaCha8Rng, m: usize, allow_zeros: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m).map(|_| -rng.random_range(f64::EPSILON..1.0).ln()).collect();
    if allow_zeros && m > 1 && rng.random_bool(0.3) {
        let k = rng.random_range(0..m);
        v[k] = 0.0;
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

fn random_pair(rng: &mut ChaCha8Rng, m: usize, interior: bool) -> DiscretePair {
    loop {
        let p = random_pmf(rng, m, !interior);
        let q = random_pmf(rng, m, false);
        if let Ok(pair) = DiscretePair::new(p, q) {
            return pair;
        }
    }
}

/// Gradient ascent on the concave map φ ↦ E_p[φ] − R(φ), whose gradient is
/// `pᵢ − qᵢ rᵢ(ν*)`. Returns the best value reached.
fn ascend_mid(pair: &DiscretePair, gen: &DivergenceGenerator, start: Vec<f64>) -> Result<f64> {
    let mid_at = |phi: &[f64]| -> Result<f64> {
        let tf = TestFunction::new(phi.to_vec())?;
        Ok(pair.expect_p(&tf)? - restricted_conjugate_value(pair, gen, &tf)?)
    };
    let mut phi = start;
    let mut value = mid_at(&phi)?;
    let mut step = 1.0;
    for _ in 0..ASCENT_STEPS {
        // ν* from the current density; any ν in the final bracket will do for
        // the gradient direction.
        let nu = root_multiplier(pair, gen, &phi);
        let grad: Vec<f64> = pair
            .p
            .iter()
            .zip(&pair.q)
            .zip(&phi)
            .map(|((p, q), u)| p - q * gen.conjugate_argmax(u - nu))
            .collect();
        if grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = phi.iter().zip(&grad).map(|(u, g)| u + step * g).collect();
            let v = mid_at(&trial)?;
            if v > value {
                phi = trial;
                value = v;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(value)
}

fn root_multiplier(pair: &DiscretePair, gen: &DivergenceGenerator, phi: &[f64]) -> f64 {
    let anchor = gen.fprime(1.0);
    let mut lo = phi.iter().copied().fold(f64::INFINITY, f64::min) - anchor;
    let mut hi = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max) - anchor;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        let mass: f64 = pair
            .q
            .iter()
            .zip(phi)
            .map(|(q, u)| q * gen.conjugate_argmax(u - mid))
            .sum();
        if mass > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const CHECKS: [&str; 8] = [
    "chain",
    "shift",
    "ordering",
    "attainment",
    "ascent",
    "kl_chain",
    "kl_tight",
    "kl_strict_gap",
];

/// Runs the randomized battery: for each generator and trial, a random pair
/// (support 2..=max_support) and φ ∈ [−3, 3]^m are checked for the bound
/// chain, the shift property, the conjugate ordering, and attainment at
/// φ* = f′(p/q); KL-named generators additionally get the Donsker–Varadhan
/// checks. Instances are regenerated from `seed`, so failures are replayable.
pub fn certify(options: &CertifyOptions) -> Result<CertifyReport> {
    if options.trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if options.max_support < 2 {
        return Err(Error::Precondition("max_support must be at least 2".into()));
    }
    if options.generators.is_empty() {
        return Err(Error::Precondition("no generators selected".into()));
    }
    let mut failures = Vec::new();
    let mut total_failures = 0;
    let mut generators = Vec::new();

    for (g_index, gen) in options.generators.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(g_index as u64);
        let mut tallies = Tallies::new(&CHECKS);
        let is_kl = gen.name() == "kl" || gen.name().starts_with("kl_");
        let mut strict_gaps = 0usize;

        for trial in 0..options.trials {
            let m = rng.random_range(2..=options.max_support);
            let pair = random_pair(&mut rng, m, false);
            let phi = TestFunction::new((0..m).map(|_| rng.random_range(-3.0..=3.0)).collect())?;
            let c = rng.random_range(-5.0..5.0);
            let interior = random_pair(&mut rng, m, true);

            let mut fail = |check: &'static str, pair: &DiscretePair, phi: &[f64], detail: String| {
                total_failures += 1;
                if failures.len() < MAX_RECORDED_FAILURES {
                    failures.push(FailureCase {
                        generator: gen.name().to_string(),
                        check,
                        trial,
                        p: pair.p.clone(),
                        q: pair.q.clone(),
                        phi: phi.to_vec(),
                        detail,
                    });
                }
            };

            // Chain and ordering at a random φ.
            let chain = chain_values(&pair, gen, &phi)?;
            let slack = chain.upper_slack.min(chain.lower_slack);
            if !tallies.record("chain", slack, CHAIN_TOL) {
                fail("chain", &pair, phi.as_slice(), format!("{chain:?}"));
            }
            let restricted = restricted_conjugate_value(&pair, gen, &phi)?;
            let plain = unrestricted_conjugate_value(&pair, gen, &phi)?;
            if !tallies.record("ordering", plain - restricted, CHAIN_TOL) {
                fail(
                    "ordering",
                    &pair,
                    phi.as_slice(),
                    format!("R = {restricted}, U = {plain}"),
                );
            }

            // Shift property.
            let shifted = restricted_conjugate_value(&pair, gen, &phi.shifted(c))?;
            let deviation = (shifted - restricted - c).abs();
            if !tallies.record("shift", -deviation, SHIFT_TOL) {
                fail(
                    "shift",
                    &pair,
                    phi.as_slice(),
                    format!("shift {c}: deviation {deviation}"),
                );
            }

            // Attainment at φ*, and ascent never beats it.
            let star = optimal_phi(&interior, gen)?;
            let at_star = chain_values(&interior, gen, &star)?;
            let gap = (at_star.mid - at_star.divergence).abs();
            if !tallies.record("attainment", -gap, ATTAINMENT_TOL) {
                fail("attainment", &interior, star.as_slice(), format!("{at_star:?}"));
            }
            if gen.has_invertible_derivative() {
                let start: Vec<f64> = star
                    .as_slice()
                    .iter()
                    .map(|u| u + rng.random_range(-0.5..0.5))
                    .collect();
                let best = ascend_mid(&interior, gen, start)?;
                if !tallies.record("ascent", at_star.mid - best, ATTAINMENT_TOL) {
                    fail(
                        "ascent",
                        &interior,
                        star.as_slice(),
                        format!("ascent reached {best}, φ* gives {}", at_star.mid),
                    );
                }
            }

            if is_kl {
                match verify_kl_specialization(&pair, &phi) {
                    Ok(r) => {
                        tallies.record("kl_chain", r.upper_slack.min(r.lower_slack), CHAIN_TOL);
                    }
                    Err(e) => {
                        tallies.record("kl_chain", f64::NEG_INFINITY, CHAIN_TOL);
                        fail("kl_chain", &pair, phi.as_slice(), e.to_string());
                    }
                }
                let log_ratio = TestFunction::new(interior.ratio().iter().map(|r| r.ln()).collect())?;
                match verify_kl_specialization(&interior, &log_ratio) {
                    Ok(r) => {
                        if !tallies.record("kl_tight", -r.upper_slack.abs(), CHAIN_TOL) {
                            fail("kl_tight", &interior, log_ratio.as_slice(), format!("{r:?}"));
                        }
                    }
                    Err(e) => {
                        tallies.record("kl_tight", f64::NEG_INFINITY, CHAIN_TOL);
                        fail("kl_tight", &interior, log_ratio.as_slice(), e.to_string());
                    }
                }
                if chain.lower_slack > 0.0 {
                    strict_gaps += 1;
                }
            }
        }

        if is_kl {
            // The restricted bound should be strictly tighter almost always.
            let fraction = strict_gaps as f64 / options.trials as f64;
            if !tallies.record("kl_strict_gap", fraction - 0.99, 0.0) {
                total_failures += 1;
            }
        }
        tallies.checks.retain(|t| t.passed + t.failed > 0);
        generators.push(GeneratorReport {
            generator: gen.name().to_string(),
            checks: tallies.checks,
        });
    }

    Ok(CertifyReport {
        seed: options.seed,
        trials: options.trials,
        generators,
        failures,
        total_failures,
    })
}
