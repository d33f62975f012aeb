//! Anchoring and sampling schedules shared by the solvers.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("delta must lie in (0,1), got {0}")]
    InvalidDelta(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("batch size overflows a 64-bit counter")]
    BatchOverflow,
}

/// The schedule pair driving every solver here:
///
/// * sampling weights `c_k = 5 (k+2) ln^2(k+2)`, chosen so that
///   `2 sum_k 1/c_k <= 1` (which is what makes the per-iteration failure
///   probabilities sum below `delta`), and
/// * anchoring weights `beta_k = k/(k+2)`, increasing from `beta_0 = 0`
///   towards 1 so the anchor's pull fades as the iteration progresses.
///
/// The same `c` sequence doubles as the divisor for the per-loop confidence
/// split `delta_i = delta / c_i` in the restart loops.
#[derive(Debug, Clone, Copy, Default)]
pub struct Schedule;

impl Schedule {
    pub fn c(&self, k: usize) -> f64 {
        let t = (k + 2) as f64;
        5.0 * t * t.ln().powi(2)
    }

    pub fn beta(&self, k: usize) -> f64 {
        k as f64 / (k + 2) as f64
    }

    pub fn delta_divisor(&self, i: usize) -> f64 {
        self.c(i)
    }
}

/// Confidence parameter `alpha = ln(2 |S| |A| (n+1) / delta)` sizing every
/// batch in a run of `n+1` iterations.
pub fn alpha(n_states: usize, n_actions: usize, n: usize, delta: f64) -> Result<f64, ParamError> {
    if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
        return Err(ParamError::InvalidDelta(delta));
    }
    let count = 2.0 * n_states as f64 * n_actions as f64 * (n as f64 + 1.0);
    Ok((count / delta).ln())
}

/// Average-reward batch rule `m_k = max(ceil(alpha c_k sp(d)^2 / eps^2), 1)`.
pub fn batch_size(alpha: f64, c_k: f64, span_d: f64, epsilon: f64) -> Result<u64, ParamError> {
    raw_batch(alpha * c_k * span_d * span_d, epsilon)
}

/// Discounted batch rule `m_k = max(ceil(2 alpha c_k ||d||_inf^2 / eps^2), 1)`.
pub fn batch_size_discounted(
    alpha: f64,
    c_k: f64,
    inf_d: f64,
    epsilon: f64,
) -> Result<u64, ParamError> {
    raw_batch(2.0 * alpha * c_k * inf_d * inf_d, epsilon)
}

fn raw_batch(numerator: f64, epsilon: f64) -> Result<u64, ParamError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(ParamError::InvalidEpsilon(epsilon));
    }
    let raw = (numerator / (epsilon * epsilon)).ceil();
    if !raw.is_finite() || raw >= u64::MAX as f64 {
        return Err(ParamError::BatchOverflow);
    }
    Ok((raw as u64).max(1))
}
