//! f-divergence generators and the closed-form beta KL divergence.
//!
//! A generator is a convex `f: [0, ∞) → ℝ ∪ {+∞}` with `f(1) = 0`. Each
//! instance carries its derivative, its convex conjugate over the domain
//! `[0, ∞)`, and the inverse of the derivative where that exists. Values at
//! `t = 0` use the lower semicontinuous extension.

use crate::error::{Error, Result};
use crate::numerics::{digamma, log_beta};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Stable identifiers accepted by [`make_generator`].
pub const GENERATOR_NAMES: [&str; 5] = [
    "kl",
    "reverse_kl",
    "total_variation",
    "squared_hellinger",
    "pearson_chi2",
];

/// An interval of the real line with open or closed ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_closed: false,
        hi_closed: false,
    };

    pub fn contains(&self, u: f64) -> bool {
        let above = if self.lo_closed { u >= self.lo } else { u > self.lo };
        let below = if self.hi_closed { u <= self.hi } else { u < self.hi };
        above && below
    }
}

/// A convex generator together with its calculus.
#[derive(Clone, Copy)]
pub struct DivergenceGenerator {
    name: &'static str,
    f: fn(f64) -> f64,
    fprime: fn(f64) -> f64,
    fsecond: fn(f64) -> f64,
    fstar: fn(f64) -> f64,
    fprime_inverse: Option<fn(f64) -> f64>,
    dual_domain: Interval,
    fprime_limit_at_zero: f64,
    fprime_limit_at_infinity: f64,
    smooth: bool,
}

impl fmt::Debug for DivergenceGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceGenerator")
            .field("name", &self.name)
            .field("dual_domain", &self.dual_domain)
            .field("fprime_limit_at_zero", &self.fprime_limit_at_zero)
            .finish()
    }
}

impl PartialEq for DivergenceGenerator {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl DivergenceGenerator {
    pub fn name(&self) -> &'static str {
        self.name
    }

    /// f(t); `+∞` for t < 0.
    pub fn f(&self, t: f64) -> f64 {
        if t < 0.0 {
            f64::INFINITY
        } else {
            (self.f)(t)
        }
    }

    /// f′(t) on the interior of the domain. For nonsmooth generators this is a
    /// subgradient.
    pub fn fprime(&self, t: f64) -> f64 {
        (self.fprime)(t)
    }

    /// f″(t) on the interior of the domain (zero almost everywhere for
    /// piecewise-linear generators).
    pub fn fsecond(&self, t: f64) -> f64 {
        (self.fsecond)(t)
    }

    /// Convex conjugate f*(u) = sup_{t ≥ 0} u·t − f(t); `+∞` outside the dual
    /// domain.
    pub fn fstar(&self, u: f64) -> f64 {
        if self.dual_domain.contains(u) {
            (self.fstar)(u)
        } else {
            f64::INFINITY
        }
    }

    /// (f′)⁻¹(u) where the derivative is invertible.
    pub fn fprime_inverse(&self, u: f64) -> Option<f64> {
        let inv = self.fprime_inverse?;
        if u > self.fprime_limit_at_zero && u < self.fprime_limit_at_infinity {
            Some(inv(u))
        } else {
            None
        }
    }

    /// Maximizer of u·t − f(t) over t ≥ 0: zero below the range of f′,
    /// `+∞` above it.
    pub fn conjugate_argmax(&self, u: f64) -> f64 {
        if u <= self.fprime_limit_at_zero {
            0.0
        } else if u >= self.fprime_limit_at_infinity {
            f64::INFINITY
        } else {
            match self.fprime_inverse {
                Some(inv) => inv(u),
                None => f64::NAN,
            }
        }
    }

    pub fn has_invertible_derivative(&self) -> bool {
        self.fprime_inverse.is_some()
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn dual_domain(&self) -> Interval {
        self.dual_domain
    }

    pub fn fprime_limit_at_zero(&self) -> f64 {
        self.fprime_limit_at_zero
    }

    pub fn fprime_limit_at_infinity(&self) -> f64 {
        self.fprime_limit_at_infinity
    }

    /// Replaces the conjugate with `fstar`, keeping everything else. Used by
    /// the certification self-test to build a deliberately wrong generator.
    pub fn with_conjugate(mut self, name: &'static str, fstar: fn(f64) -> f64) -> Self {
        self.name = name;
        self.fstar = fstar;
        self
    }
}

fn kl() -> DivergenceGenerator {
    DivergenceGenerator {
        name: "kl",
        f: |t| if t == 0.0 { 0.0 } else { t * t.ln() },
        fprime: |t| t.ln() + 1.0,
        fsecond: |t| 1.0 / t,
        fstar: |u| (u - 1.0).exp(),
        fprime_inverse: Some(|u| (u - 1.0).exp()),
        dual_domain: Interval::REAL_LINE,
        fprime_limit_at_zero: f64::NEG_INFINITY,
        fprime_limit_at_infinity: f64::INFINITY,
        smooth: true,
    }
}

fn reverse_kl() -> DivergenceGenerator {
    DivergenceGenerator {
        name: "reverse_kl",
        f: |t| if t == 0.0 { f64::INFINITY } else { -t.ln() },
        fprime: |t| -1.0 / t,
        fsecond: |t| 1.0 / (t * t),
        fstar: |u| -1.0 - (-u).ln(),
        fprime_inverse: Some(|u| -1.0 / u),
        dual_domain: Interval {
            lo: f64::NEG_INFINITY,
            hi: 0.0,
            lo_closed: false,
            hi_closed: false,
        },
        fprime_limit_at_zero: f64::NEG_INFINITY,
        fprime_limit_at_infinity: 0.0,
        smooth: true,
    }
}

fn total_variation() -> DivergenceGenerator {
    DivergenceGenerator {
        name: "total_variation",
        f: |t| (t - 1.0).abs(),
        fprime: |t| {
            if t > 1.0 {
                1.0
            } else if t < 1.0 {
                -1.0
            } else {
                0.0
            }
        },
        fsecond: |_| 0.0,
        // On t ≥ 0 the supremum is attained at t = 1 for |u| ≤ 1 and at t = 0
        // for u < −1.
        fstar: |u| u.max(-1.0),
        fprime_inverse: None,
        dual_domain: Interval {
            lo: f64::NEG_INFINITY,
            hi: 1.0,
            lo_closed: false,
            hi_closed: true,
        },
        fprime_limit_at_zero: -1.0,
        fprime_limit_at_infinity: 1.0,
        smooth: false,
    }
}

fn squared_hellinger() -> DivergenceGenerator {
    DivergenceGenerator {
        name: "squared_hellinger",
        f: |t| {
            let s = t.sqrt() - 1.0;
            s * s
        },
        fprime: |t| 1.0 - 1.0 / t.sqrt(),
        fsecond: |t| 0.5 / (t * t.sqrt()),
        fstar: |u| u / (1.0 - u),
        fprime_inverse: Some(|u| {
            let s = 1.0 / (1.0 - u);
            s * s
        }),
        dual_domain: Interval {
            lo: f64::NEG_INFINITY,
            hi: 1.0,
            lo_closed: false,
            hi_closed: false,
        },
        fprime_limit_at_zero: f64::NEG_INFINITY,
        fprime_limit_at_infinity: 1.0,
        smooth: true,
    }
}

fn pearson_chi2() -> DivergenceGenerator {
    DivergenceGenerator {
        name: "pearson_chi2",
        f: |t| (t - 1.0) * (t - 1.0),
        fprime: |t| 2.0 * (t - 1.0),
        fsecond: |_| 2.0,
        fstar: |u| if u >= -2.0 { u + 0.25 * u * u } else { -1.0 },
        fprime_inverse: Some(|u| 1.0 + 0.5 * u),
        dual_domain: Interval::REAL_LINE,
        fprime_limit_at_zero: -2.0,
        fprime_limit_at_infinity: f64::INFINITY,
        smooth: true,
    }
}

/// Looks up a generator by its stable identifier.
pub fn make_generator(name: &str) -> Result<DivergenceGenerator> {
    match name {
        "kl" => Ok(kl()),
        "reverse_kl" => Ok(reverse_kl()),
        "total_variation" => Ok(total_variation()),
        "squared_hellinger" => Ok(squared_hellinger()),
        "pearson_chi2" => Ok(pearson_chi2()),
        other => Err(Error::UnsupportedGenerator(other.to_string())),
    }
}

/// All built-in generators in [`GENERATOR_NAMES`] order.
pub fn all_generators() -> Vec<DivergenceGenerator> {
    GENERATOR_NAMES
        .iter()
        .map(|n| make_generator(n).expect("built-in name"))
        .collect()
}

/// Parameters of a beta distribution B(alpha, beta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = BetaParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "beta parameters must be positive and finite, got B({}, {})",
                self.alpha, self.beta
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Density at `x ∈ (0, 1)`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p()
            - log_beta(self.alpha, self.beta).expect("validated parameters")
    }
}

impl fmt::Display for BetaParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B({},{})", self.alpha, self.beta)
    }
}

/// KL(B(α₁, β₁) ‖ B(α₂, β₂)) in closed form.
pub fn kl_beta_closed_form(p: BetaParams, q: BetaParams) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    let d_alpha = q.alpha - p.alpha;
    let d_beta = q.beta - p.beta;
    Ok(log_beta(q.alpha, q.beta)?
        - log_beta(p.alpha, p.beta)?
        - d_alpha * digamma(p.alpha)?
        - d_beta * digamma(p.beta)?
        + (d_alpha + d_beta) * digamma(p.alpha + p.beta)?)
}
