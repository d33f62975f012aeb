//! Small statistics helpers for the experiment runner and acceptance tests.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} epsilon groups, got {got}")]
    InsufficientGroups { need: usize, got: usize },
    #[error("group {group} has {got} trials, need at least {need}")]
    InsufficientTrials {
        group: usize,
        got: usize,
        need: usize,
    },
}

/// Least-squares slope of `log(mean total_samples)` against `log(epsilon)`,
/// over groups of trials run at different accuracy levels. A sampler whose
/// cost scales like `1/eps^2` fits slope -2.
pub fn fit_scaling(groups: &[(f64, Vec<f64>)]) -> Result<f64, StatsError> {
    if groups.len() < 3 {
        return Err(StatsError::InsufficientGroups {
            need: 3,
            got: groups.len(),
        });
    }
    for (i, (_, samples)) in groups.iter().enumerate() {
        if samples.len() < 20 {
            return Err(StatsError::InsufficientTrials {
                group: i,
                got: samples.len(),
                need: 20,
            });
        }
    }
    let points: Vec<(f64, f64)> = groups
        .iter()
        .map(|(eps, samples)| (eps.ln(), mean(samples).ln()))
        .collect();
    let xbar = mean(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    let ybar = mean(&points.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &points {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    Ok(num / den)
}

/// Failures tolerated when testing an event of probability at least
/// `1 - delta` over `trials` independent runs: the expected count plus three
/// binomial standard deviations, keeping the flake rate below 0.3% while
/// still catching constant-factor regressions.
pub fn failure_allowance(delta: f64, trials: usize) -> f64 {
    let t = trials as f64;
    delta * t + 3.0 * (delta * (1.0 - delta) * t).sqrt()
}

/// Mean; NaN on empty input.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Nearest-rank quantile on a sorted copy: entry `ceil(q * n) - 1`. NaN on
/// empty input.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q));
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in summaries"));
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1) - 1;
    sorted[rank.min(sorted.len() - 1)]
}
