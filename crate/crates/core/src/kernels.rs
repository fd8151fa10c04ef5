//! RBF kernel blocks and the weighted squared-MMD term.
//!
//! The kernel is `k(a, b) = exp(−‖a − b‖² / (2σ))` where σ is a *variance*
//! (squared data units), so pairing it with the pooled sample variance makes
//! the Gram blocks invariant to rescaling the data.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Isotropic RBF kernel parameterized by a squared-distance scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KernelSpec { bandwidth })
        } else {
            Err(Error::Precondition(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Kernel value for two points of equal dimension.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-sq / (2.0 * self.bandwidth)).exp()
    }
}

/// Kernel blocks over an `n`-point sample X and an `m`-point sample Y.
#[derive(Debug, Clone)]
pub struct GramBlocks {
    pub kxx: DMatrix<f64>,
    pub kxy: DMatrix<f64>,
    pub kyy: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    kxx_mean: f64,
    // (1/n) Kxyᵀ 1
    kxy_col_means: DVector<f64>,
}

impl GramBlocks {
    /// Wraps precomputed blocks, checking shapes.
    pub fn from_blocks(kxx: DMatrix<f64>, kxy: DMatrix<f64>, kyy: DMatrix<f64>) -> Result<Self> {
        let n = kxx.nrows();
        let m = kyy.nrows();
        if kxx.ncols() != n {
            return Err(Error::DimensionMismatch(kxx.nrows(), kxx.ncols()));
        }
        if kyy.ncols() != m {
            return Err(Error::DimensionMismatch(kyy.nrows(), kyy.ncols()));
        }
        if kxy.nrows() != n || kxy.ncols() != m {
            return Err(Error::DimensionMismatch(kxy.nrows() * kxy.ncols(), n * m));
        }
        if n == 0 || m == 0 {
            return Err(Error::Precondition("empty Gram block".into()));
        }
        let kxx_mean = kxx.sum() / (n * n) as f64;
        let kxy_col_means = kxy.row_sum().transpose() / n as f64;
        Ok(GramBlocks {
            kxx,
            kxy,
            kyy,
            n,
            m,
            kxx_mean,
            kxy_col_means,
        })
    }

    /// (1/n²) 1ᵀ Kxx 1
    pub fn kxx_mean(&self) -> f64 {
        self.kxx_mean
    }

    /// (1/n) Kxyᵀ 1, one entry per Y point.
    pub fn kxy_col_means(&self) -> &DVector<f64> {
        &self.kxy_col_means
    }
}

fn check_samples(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(x.ncols(), y.ncols()));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Precondition("samples must be nonempty".into()));
    }
    Ok(())
}

/// Mean over coordinates of the unbiased per-coordinate variance of the
/// pooled sample X ∪ Y.
pub fn pooled_variance_bandwidth(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<KernelSpec> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(x.ncols(), y.ncols()));
    }
    let total = x.nrows() + y.nrows();
    if total < 2 {
        return Err(Error::Precondition("pooled sample needs at least two points".into()));
    }
    let d = x.ncols();
    if d == 0 {
        return Err(Error::Precondition("samples have zero dimensions".into()));
    }
    let mut variance_sum = 0.0;
    for c in 0..d {
        let (xc, yc) = (x.column(c), y.column(c));
        let column = xc.iter().chain(yc.iter());
        let first = xc.iter().chain(yc.iter()).next().copied().unwrap_or(0.0);
        if column.clone().all(|&v| v == first) {
            // Constant coordinate: skip the mean so round-off cannot fake a spread.
            continue;
        }
        let mean = column.clone().sum::<f64>() / total as f64;
        let ss: f64 = column.map(|v| (v - mean) * (v - mean)).sum();
        variance_sum += ss / (total - 1) as f64;
    }
    let bandwidth = variance_sum / d as f64;
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::DegenerateSample(
            "pooled sample has zero variance (all points identical)".into(),
        ));
    }
    KernelSpec::new(bandwidth)
}

fn cross_block(a: &DMatrix<f64>, b: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    let scale = -0.5 / spec.bandwidth();
    let d = a.ncols();
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut sq = 0.0;
        for c in 0..d {
            let diff = a[(i, c)] - b[(j, c)];
            sq += diff * diff;
        }
        (sq * scale).exp()
    })
}

fn self_block(a: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    let scale = -0.5 / spec.bandwidth();
    let n = a.nrows();
    let d = a.ncols();
    let mut k = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for c in 0..d {
                let diff = a[(i, c)] - a[(j, c)];
                sq += diff * diff;
            }
            let v = (sq * scale).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Builds Kxx, Kxy and Kyy for samples stored one point per row.
pub fn gram_blocks(x: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec) -> Result<GramBlocks> {
    check_samples(x, y)?;
    GramBlocks::from_blocks(self_block(x, spec), cross_block(x, y, spec), self_block(y, spec))
}

/// ‖(1/n) Σᵢ Φ(xᵢ) − Σⱼ αⱼ Φ(yⱼ)‖² expanded through the kernel blocks.
pub fn weighted_mmd_squared(blocks: &GramBlocks, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != blocks.m {
        return Err(Error::LengthMismatch {
            expected: blocks.m,
            actual: alpha.len(),
        });
    }
    let a = DVector::from_column_slice(alpha);
    let kyy_a = &blocks.kyy * &a;
    Ok(mmd_from_product(blocks, &a, &kyy_a))
}

/// Same as [`weighted_mmd_squared`] when `Kyy·α` is already available.
pub(crate) fn mmd_from_product(blocks: &GramBlocks, alpha: &DVector<f64>, kyy_alpha: &DVector<f64>) -> f64 {
    blocks.kxx_mean - 2.0 * blocks.kxy_col_means.dot(alpha) + alpha.dot(kyy_alpha)
}

/// Gradient of [`weighted_mmd_squared`] with respect to α:
/// `2 Kyy α − (2/n) Kxyᵀ 1`.
pub fn weighted_mmd_squared_gradient(blocks: &GramBlocks, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != blocks.m {
        return Err(Error::LengthMismatch {
            expected: blocks.m,
            actual: alpha.len(),
        });
    }
    let a = DVector::from_column_slice(alpha);
    let g = (&blocks.kyy * &a - &blocks.kxy_col_means) * 2.0;
    Ok(g.as_slice().to_vec())
}

/// Biased (V-statistic) squared MMD between two samples.
pub fn mmd_squared_empirical(x: &DMatrix<f64>, y: &DMatrix<f64>, spec: &KernelSpec) -> Result<f64> {
    let blocks = gram_blocks(x, y, spec)?;
    let uniform = vec![1.0 / blocks.m as f64; blocks.m];
    weighted_mmd_squared(&blocks, &uniform)
}
