//! Seeded random variates: gamma (Marsaglia–Tsang), beta (gamma ratio) and
//! Gaussian noise columns (Kinderman–Monahan ratio of uniforms).
//!
//! Every draw comes from a ChaCha8 stream keyed by `(seed, stream_id)`, so a
//! run's samples depend only on those two numbers and the call sequence.

use crate::error::{Error, Result};
use crate::generators::BetaParams;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        SeededStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on (0, 1].
    fn open_uniform(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Standard normal by the ratio-of-uniforms method.
    pub fn standard_normal(&mut self) -> f64 {
        // sqrt(2/e)
        const V_MAX: f64 = 0.857_763_884_960_706_8;
        loop {
            let u = self.open_uniform();
            let v = V_MAX * (2.0 * self.rng.random::<f64>() - 1.0);
            let x = v / u;
            if x * x <= -4.0 * u.ln() {
                return x;
            }
        }
    }

    /// ln of a Gamma(shape, 1) variate. Working in logs keeps small shapes,
    /// whose draws can underflow, usable for the beta ratio.
    fn ln_gamma_variate(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            // Boost: G(a) = G(a + 1) · U^{1/a}
            let boosted = self.ln_gamma_variate(shape + 1.0);
            return boosted + self.open_uniform().ln() / shape;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.open_uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d.ln() + v.ln();
            }
        }
    }
}

/// An n×d sample, one point per row, with a note of where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub points: DMatrix<f64>,
    pub provenance: String,
}

impl SampleMatrix {
    pub fn nrows(&self) -> usize {
        self.points.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.points.ncols()
    }
}

/// n draws from Gamma(shape, 1).
pub fn sample_gamma(stream: &mut SeededStream, shape: f64, n: usize) -> Result<Vec<f64>> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::InvalidDistribution(format!(
            "gamma shape must be positive, got {shape}"
        )));
    }
    Ok((0..n).map(|_| stream.ln_gamma_variate(shape).exp()).collect())
}

/// n draws from B(α, β) as X / (X + Y) with X ~ Γ(α), Y ~ Γ(β); every entry is
/// strictly inside (0, 1).
pub fn sample_beta(stream: &mut SeededStream, params: BetaParams, n: usize) -> Result<SampleMatrix> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Precondition("sample size must be at least 1".into()));
    }
    let mut values = Vec::with_capacity(n);
    while values.len() < n {
        let lx = stream.ln_gamma_variate(params.alpha);
        let ly = stream.ln_gamma_variate(params.beta);
        // X / (X + Y) = 1 / (1 + e^{ln Y − ln X})
        let x = 1.0 / (1.0 + (ly - lx).exp());
        if x > 0.0 && x < 1.0 {
            values.push(x);
        }
    }
    Ok(SampleMatrix {
        points: DMatrix::from_vec(n, 1, values),
        provenance: format!("{params} seed={} stream={}", stream.seed, stream.stream_id),
    })
}

/// Appends `extra_dims` columns of N(0, noise_variance) noise to a 1-d sample.
pub fn embed_with_noise(
    stream: &mut SeededStream,
    base: &SampleMatrix,
    extra_dims: usize,
    noise_variance: f64,
) -> Result<SampleMatrix> {
    if base.ncols() != 1 {
        return Err(Error::DimensionMismatch(base.ncols(), 1));
    }
    if !(noise_variance > 0.0) || !noise_variance.is_finite() {
        return Err(Error::Precondition(format!(
            "noise variance must be positive, got {noise_variance}"
        )));
    }
    if extra_dims == 0 {
        return Ok(base.clone());
    }
    let n = base.nrows();
    let sd = noise_variance.sqrt();
    let mut points = DMatrix::zeros(n, 1 + extra_dims);
    for i in 0..n {
        points[(i, 0)] = base.points[(i, 0)];
        for c in 1..=extra_dims {
            points[(i, c)] = sd * stream.standard_normal();
        }
    }
    Ok(SampleMatrix {
        points,
        provenance: format!("{} + {extra_dims}×N(0, {noise_variance})", base.provenance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate_adaptive;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn uniform_beta_mean() {
        let mut s = SeededStream::new(1, 0);
        let m = sample_beta(&mut s, BetaParams::new(1.0, 1.0).unwrap(), 100_000).unwrap();
        let (mean, _) = mean_var(m.points.as_slice());
        assert!((mean - 0.5).abs() < 0.01);
        assert!(m.points.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn beta_moments_within_five_standard_errors() {
        for (a, b) in [(2.0, 2.0), (0.5, 3.0), (14.0, 14.0), (1.0, 4.0)] {
            let p = BetaParams::new(a, b).unwrap();
            let mut s = SeededStream::new(2, 7);
            let n = 100_000;
            let m = sample_beta(&mut s, p, n).unwrap();
            let (mean, var) = mean_var(m.points.as_slice());
            let se_mean = (p.variance() / n as f64).sqrt();
            assert!((mean - p.mean()).abs() < 5.0 * se_mean, "B({a},{b}) mean {mean}");
            // Var of the sample variance ≈ (μ₄ − σ⁴)/n; bound μ₄ by the sample.
            let mu4 = m.points.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
            let se_var = ((mu4 - var * var) / n as f64).sqrt();
            assert!((var - p.variance()).abs() < 5.0 * se_var, "B({a},{b}) var {var}");
        }
        let mut s = SeededStream::new(3, 0);
        let m = sample_beta(&mut s, BetaParams::new(2.0, 2.0).unwrap(), 100_000).unwrap();
        let (_, var) = mean_var(m.points.as_slice());
        assert!((var / 0.05 - 1.0).abs() < 0.1);
    }

    #[test]
    fn gamma_moments() {
        for shape in [0.3, 1.0, 3.0, 12.5] {
            let mut s = SeededStream::new(4, 1);
            let n = 100_000;
            let v = sample_gamma(&mut s, shape, n).unwrap();
            assert!(v.iter().all(|x| *x > 0.0));
            let (mean, var) = mean_var(&v);
            // Gamma(k, 1): mean k, variance k, fourth central moment 3k² + 6k.
            let se_mean = (shape / n as f64).sqrt();
            assert!((mean - shape).abs() < 5.0 * se_mean, "shape {shape}: mean {mean}");
            let se_var = ((3.0 * shape * shape + 6.0 * shape - shape * shape) / n as f64).sqrt();
            assert!((var - shape).abs() < 5.0 * se_var, "shape {shape}: var {var}");
        }
        let mut s = SeededStream::new(5, 0);
        let (mean, _) = mean_var(&sample_gamma(&mut s, 1.0, 100_000).unwrap());
        assert!((mean - 1.0).abs() < 0.02);
        assert!(sample_gamma(&mut s, 0.0, 3).is_err());
    }

    #[test]
    fn gamma_ks_against_quadrature_cdf() {
        let shape = 3.0;
        let mut s = SeededStream::new(6, 0);
        let mut v = sample_gamma(&mut s, shape, 100_000).unwrap();
        v.sort_by(f64::total_cmp);
        let density = |t: f64| t * t * (-t).exp() / 2.0;
        let n = v.len() as f64;
        let mut cdf = 0.0;
        let mut prev = 0.0;
        let mut ks: f64 = 0.0;
        for (i, &x) in v.iter().enumerate() {
            if x > prev {
                cdf += integrate_adaptive(density, prev, x, 1e-13).unwrap().value;
                prev = x;
            }
            ks = ks.max((cdf - i as f64 / n).abs()).max(((i + 1) as f64 / n - cdf).abs());
        }
        assert!(ks <= 0.01, "KS statistic {ks}");
    }

    #[test]
    fn normal_moments() {
        let mut s = SeededStream::new(7, 3);
        let v: Vec<f64> = (0..100_000).map(|_| s.standard_normal()).collect();
        let (mean, var) = mean_var(&v);
        assert!(mean.abs() < 5.0 / (100_000f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / 100_000f64).sqrt());
    }

    #[test]
    fn same_stream_same_samples() {
        let p = BetaParams::new(2.0, 5.0).unwrap();
        let a = sample_beta(&mut SeededStream::new(42, 9), p, 500).unwrap();
        let b = sample_beta(&mut SeededStream::new(42, 9), p, 500).unwrap();
        assert_eq!(a, b);
        let c = sample_beta(&mut SeededStream::new(42, 10), p, 500).unwrap();
        assert_ne!(a.points, c.points);
        let g1 = sample_gamma(&mut SeededStream::new(1, 1), 2.5, 100).unwrap();
        let g2 = sample_gamma(&mut SeededStream::new(1, 1), 2.5, 100).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let p = BetaParams::new(1.0, 1.0).unwrap();
        let n = 100_000;
        let a = sample_beta(&mut SeededStream::new(11, 0), p, n).unwrap();
        let b = sample_beta(&mut SeededStream::new(11, 1), p, n).unwrap();
        let (ma, va) = mean_var(a.points.as_slice());
        let (mb, vb) = mean_var(b.points.as_slice());
        let cov = a
            .points
            .iter()
            .zip(b.points.iter())
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n as f64 - 1.0);
        assert!((cov / (va * vb).sqrt()).abs() <= 0.02);
    }

    #[test]
    fn embedding() {
        let mut s = SeededStream::new(8, 0);
        let base = sample_beta(&mut s, BetaParams::new(2.0, 2.0).unwrap(), 100_000).unwrap();
        let same = embed_with_noise(&mut s, &base, 0, 0.01).unwrap();
        assert_eq!(same.points, base.points);

        let wide = embed_with_noise(&mut s, &base, 9, 0.01).unwrap();
        assert_eq!(wide.ncols(), 10);
        assert_eq!(wide.points.column(0), base.points.column(0));
        for c in 1..10 {
            let col: Vec<f64> = wide.points.column(c).iter().copied().collect();
            let (_, var) = mean_var(&col);
            assert!((var / 0.01 - 1.0).abs() < 0.1);
        }
        assert!(embed_with_noise(&mut s, &base, 3, 0.0).is_err());
        assert!(embed_with_noise(&mut s, &wide, 3, 0.01).is_err());
    }
}
