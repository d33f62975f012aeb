//! Span seminorm and infinity norm over raw slices.
//!
//! The span seminorm `sp(x) = max x - min x` is the natural metric for
//! average-reward value functions, which are only defined modulo additive
//! constants; the infinity norm is used in the discounted setting.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NormError {
    #[error("empty vector")]
    Empty,
}

/// Span seminorm: `max(xs) - min(xs)`.
///
/// Invariant under adding a constant to every entry, and `sp(x) <= 2 ||x||_inf`.
pub fn span(xs: &[f64]) -> Result<f64, NormError> {
    if xs.is_empty() {
        return Err(NormError::Empty);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok(hi - lo)
}

/// Infinity norm: `max |xs|`.
pub fn inf_norm(xs: &[f64]) -> Result<f64, NormError> {
    if xs.is_empty() {
        return Err(NormError::Empty);
    }
    Ok(xs.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())))
}
