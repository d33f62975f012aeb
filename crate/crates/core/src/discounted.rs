//! Anchored stochastic value iteration for discounted MDPs.
//!
//! Same loop shape as the average-reward solver with three changes: the
//! increment is a difference of value vectors measured in the infinity norm,
//! the batch rule carries a factor 2, and the accumulator update carries the
//! discount factor: `T^k = T^{k-1} + gamma D^k`.

use crate::mdp::{DiscountedParams, QTable, TabularMdp, ValueVector};
use crate::sampling::GenerativeModel;
use crate::schedule::{alpha, batch_size_discounted, ParamError, Schedule};
use crate::trace::{AnchoredOutput, DoublingOutput, IterationRecord, LoopRecord, SolverTrace};

pub use crate::average::{RunOptions, SolverError};

/// The discounted doubling loop stops once `||T^{n_i} - Q^{n_i}||_inf <= 11 eps`.
pub const STOP_FACTOR: f64 = 11.0;
/// With that rule the output satisfies `||T_g(Q^N) - Q^N||_inf <= 12 eps`
/// with probability at least `1 - delta`.
pub const OUTPUT_RESIDUAL_FACTOR: f64 = 12.0;

/// Inputs of a fixed-length discounted run.
#[derive(Debug, Clone)]
pub struct SavidParams {
    pub q0: QTable,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl SavidParams {
    fn validate(&self) -> Result<DiscountedParams, SolverError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(ParamError::InvalidEpsilon(self.epsilon).into());
        }
        if !(self.delta.is_finite() && 0.0 < self.delta && self.delta < 1.0) {
            return Err(ParamError::InvalidDelta(self.delta).into());
        }
        DiscountedParams::new(self.gamma).map_err(|_| SolverError::InvalidGamma(self.gamma))
    }
}

/// Fixed-length discounted run: for `k = 0..=n`, starting from `T^{-1} = r`
/// and `V^{-1} = 0`,
///
/// ```text
/// Q^k = (1 - beta_k) Q^0 + beta_k T^{k-1}
/// V^k = max_A(Q^k)
/// d^k = V^k - V^{k-1}
/// m_k = max(ceil(2 alpha c_k ||d^k||_inf^2 / eps^2), 1)
/// D^k = mean of d^k over m_k next-state draws per (s,a)
/// T^k = T^{k-1} + gamma D^k
/// ```
pub fn savid(
    model: &GenerativeModel,
    params: &SavidParams,
    schedule: &Schedule,
) -> Result<AnchoredOutput, SolverError> {
    savid_with(model, params, schedule, &RunOptions::default())
}

pub fn savid_with(
    model: &GenerativeModel,
    params: &SavidParams,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<AnchoredOutput, SolverError> {
    let discount = params.validate()?;
    let mdp = model.mdp();
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    assert_eq!(
        (params.q0.n_states(), params.q0.n_actions()),
        (ns, na),
        "Q^0 shape mismatch"
    );
    let a = alpha(ns, na, params.n, params.delta)?;
    let pair_count = (ns * na) as u64;

    let mut t = mdp.rewards_q();
    let mut v_prev = ValueVector::zeros(ns);
    let mut q = params.q0.clone();
    let mut records = Vec::with_capacity(params.n + 1);
    let mut cumulative: u64 = 0;

    for k in 0..=params.n {
        let beta = schedule.beta(k);
        q = QTable::affine(&params.q0, 1.0 - beta, &t, beta);
        let v = q.max_over_actions();
        let d = v.sub(&v_prev);
        let inf_d = d.inf_norm();
        let m = batch_size_discounted(a, schedule.c(k), inf_d, params.epsilon)?;
        let dk = model.sample_matrix(&d, m, k, opts.loop_index)?;
        t.add_scaled_assign(&dk, params.gamma);
        cumulative += pair_count * m;

        let empirical_residual = t.sub(&q).inf_norm();
        let (true_residual, sampling_error) = match opts.exact_reference {
            Some(reference) => {
                let exact = reference.apply_bellman_discounted(&q, &discount);
                (
                    Some(exact.sub(&q).inf_norm()),
                    Some(t.sub(&exact).inf_norm()),
                )
            }
            None => (None, None),
        };
        records.push(IterationRecord {
            k,
            increment_norm: inf_d,
            batch_size: m,
            cumulative_samples: cumulative,
            empirical_residual,
            true_residual,
            sampling_error,
        });
        v_prev = v;
    }

    let policy = q.greedy_policy();
    Ok(AnchoredOutput {
        q,
        t,
        policy,
        trace: SolverTrace { records },
    })
}

/// Doubling restart loop with the infinity-norm stopping rule
/// `||T^{n_i} - Q^{n_i}||_inf <= 11 eps`; loops are independent by
/// construction (fresh substreams per loop index).
pub fn savid_plus(
    model: &GenerativeModel,
    q0: &QTable,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    schedule: &Schedule,
    max_loops: usize,
) -> Result<DoublingOutput, SolverError> {
    savid_plus_with(model, q0, epsilon, delta, gamma, schedule, max_loops, None)
}

#[allow(clippy::too_many_arguments)]
pub fn savid_plus_with(
    model: &GenerativeModel,
    q0: &QTable,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    schedule: &Schedule,
    max_loops: usize,
    exact_reference: Option<&TabularMdp>,
) -> Result<DoublingOutput, SolverError> {
    assert!(max_loops >= 1, "max_loops must be at least 1");
    let threshold = STOP_FACTOR * epsilon;
    let mut loops = Vec::new();
    let mut total: u64 = 0;
    let mut last_statistic = f64::INFINITY;

    for i in 0..max_loops {
        let n_i = 1u64 << i.min(62);
        let delta_i = delta / schedule.delta_divisor(i);
        let params = SavidParams {
            q0: q0.clone(),
            n: n_i as usize,
            epsilon,
            delta: delta_i,
            gamma,
        };
        let opts = RunOptions {
            loop_index: i as u64,
            exact_reference,
        };
        let before = model.total_samples();
        let out = savid_with(model, &params, schedule, &opts)?;
        let samples_in_loop = model.total_samples() - before;
        total += samples_in_loop;
        let stop_statistic = out.trace.last().empirical_residual;
        last_statistic = stop_statistic;
        loops.push(LoopRecord {
            loop_index: i,
            n_i,
            delta_i,
            stop_statistic,
            samples_in_loop,
        });
        if stop_statistic <= threshold {
            return Ok(DoublingOutput {
                output: out,
                stop_loop: i,
                n_final: n_i,
                loops,
                total_samples: total,
            });
        }
    }
    Err(SolverError::LoopBudgetExhausted {
        loops: max_loops,
        last_statistic,
        threshold,
    })
}

/// Fixed-`n` entry point reaching residual `||T_g(Q^n) - Q^n||_inf <= eps`
/// with probability at least `1 - delta`: requires rewards in `[0,1]` and
/// `eps <= 1/(1-gamma)`, starts from `Q^0 = 0`, and runs
/// `n = ceil(10 / ((1-gamma) eps))` iterations at accuracy `eps / 10`.
pub fn savid_residual_target(
    model: &GenerativeModel,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    schedule: &Schedule,
) -> Result<AnchoredOutput, SolverError> {
    savid_residual_target_with(model, epsilon, delta, gamma, schedule, &RunOptions::default())
}

pub fn savid_residual_target_with(
    model: &GenerativeModel,
    epsilon: f64,
    delta: f64,
    gamma: f64,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<AnchoredOutput, SolverError> {
    let mdp = model.mdp();
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let r = mdp.reward(s, a);
            if !(0.0..=1.0).contains(&r) {
                return Err(SolverError::RewardRange {
                    state: s,
                    action: a,
                    value: r,
                });
            }
        }
    }
    let discount =
        DiscountedParams::new(gamma).map_err(|_| SolverError::InvalidGamma(gamma))?;
    let limit = 1.0 / (1.0 - discount.gamma());
    if !(epsilon.is_finite() && 0.0 < epsilon && epsilon <= limit) {
        return Err(SolverError::EpsilonRange { epsilon, limit });
    }
    let n = (10.0 / ((1.0 - gamma) * epsilon)).ceil() as usize;
    let params = SavidParams {
        q0: QTable::zeros(mdp.n_states(), mdp.n_actions()),
        n,
        epsilon: epsilon / 10.0,
        delta,
        gamma,
    };
    savid_with(model, &params, schedule, opts)
}
