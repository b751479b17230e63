//! Log-domain weight arithmetic.
//!
//! Particle weights are products of many densities and underflow `f64` well
//! before realistic horizons, so every kernel in this crate stores and
//! combines weights as logarithms. Entries equal to `-inf` are legitimate
//! (a particle with zero weight); NaN and `+inf` are rejected.

use crate::error::WeightError;

/// Validates a log-weight vector: non-empty, no NaN/+inf, at least one
/// finite entry.
fn validate(lw: &[f64]) -> Result<f64, WeightError> {
    if lw.is_empty() {
        return Err(WeightError::Empty);
    }
    let mut max = f64::NEG_INFINITY;
    for &w in lw {
        if w.is_nan() || w == f64::INFINITY {
            return Err(WeightError::InvalidWeight(w));
        }
        if w > max {
            max = w;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(WeightError::AllZeroWeights);
    }
    Ok(max)
}

/// Normalizes log-weights into a probability vector.
///
/// Computed as `exp(lw_i - max) / sum_j exp(lw_j - max)`, so adding a common
/// constant to all entries leaves the result unchanged and entries of `-inf`
/// map to exactly zero.
pub fn normalize_log_weights(lw: &[f64]) -> Result<Vec<f64>, WeightError> {
    let max = validate(lw)?;
    let mut out: Vec<f64> = lw.iter().map(|&w| (w - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Writes normalized probabilities into `out` without allocating.
pub fn normalize_log_weights_into(lw: &[f64], out: &mut [f64]) -> Result<(), WeightError> {
    debug_assert_eq!(lw.len(), out.len());
    let max = validate(lw)?;
    let mut sum = 0.0;
    for (p, &w) in out.iter_mut().zip(lw) {
        *p = (w - max).exp();
        sum += *p;
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

/// `log((1/N) * sum_i exp(lw_i))`, the log of the mean unnormalized weight.
///
/// One factor of the marginal-likelihood estimate. Max-shifted so it is
/// finite whenever any entry is finite.
pub fn log_mean_exp(lw: &[f64]) -> Result<f64, WeightError> {
    Ok(log_sum_exp_checked(lw)? - (lw.len() as f64).ln())
}

/// `log(sum_i exp(lw_i))` with input validation.
pub fn log_sum_exp_checked(lw: &[f64]) -> Result<f64, WeightError> {
    let max = validate(lw)?;
    let sum: f64 = lw.iter().map(|&w| (w - max).exp()).sum();
    Ok(max + sum.ln())
}

/// `log(sum_i exp(lw_i))` for inputs already known to be well-formed.
/// Returns `-inf` on an all`-inf` or empty slice.
pub fn log_sum_exp(lw: &[f64]) -> f64 {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = lw.iter().map(|&w| (w - max).exp()).sum();
    max + sum.ln()
}
