//! Stable elementary numerics shared by all loss kernels.

use crate::batch::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM_FLOOR: f64 = 1e-30;

/// Returns `v / ‖v‖`. The result has norm 1 within 1e-12.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    if norm < ZERO_NORM_FLOOR {
        return Err(Error::ZeroVector { norm });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// In-place variant of [`l2_normalize`].
pub fn l2_normalize_in_place(v: &mut [f64]) -> Result<()> {
    let norm = dot(v, v).sqrt();
    if norm < ZERO_NORM_FLOOR {
        return Err(Error::ZeroVector { norm });
    }
    for x in v {
        *x /= norm;
    }
    Ok(())
}

/// Temperature-scaled similarity matrix: entry `(i, j)` is `(aᵢ·bⱼ)/T`.
///
/// Both batches must share the embedding dimension and the temperature.
pub fn sim_matrix(a: &EmbeddingBatch, b: &EmbeddingBatch) -> Result<Matrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.temperature() != b.temperature() {
        return Err(Error::InvalidConfig(format!(
            "temperature mismatch: {} vs {}",
            a.temperature(),
            b.temperature()
        )));
    }
    let mut out = a.vectors().matmul_transpose(b.vectors());
    out.scale_in_place(1.0 / a.temperature());
    Ok(out)
}

/// `log Σ exp(xᵢ)` with max-subtraction; finite for |xᵢ| ≤ 700.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut acc = 0.0;
    for &x in xs {
        acc += (x - m).exp();
    }
    Ok(m + acc.ln())
}

/// `log(e^a + e^b)` without materializing a slice.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}
