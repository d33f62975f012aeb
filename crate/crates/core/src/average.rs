//! Anchored stochastic value iteration for weakly communicating
//! average-reward MDPs.
//!
//! [`savia`] runs a fixed number of anchored iterations, estimating the
//! Bellman image `T(Q^k)` by recursive sampling: only the increment
//! `d^k = h^k - h^{k-1}` is sampled each iteration and accumulated into the
//! running estimate `T^k = T^{k-1} + D^k`, so batch sizes scale with the span
//! of increments rather than of values. [`savia_plus`] wraps it in a
//! doubling restart loop with an empirical stopping rule, removing the need
//! to know problem constants in advance. [`exact_savia`] is the noiseless
//! reference: the same anchored recursion with the exact operator.

use thiserror::Error;

use crate::mdp::{QTable, TabularMdp, ValueVector};
use crate::sampling::{GenerativeModel, SampleError};
use crate::schedule::{alpha, batch_size, ParamError, Schedule};
use crate::trace::{AnchoredOutput, DoublingOutput, IterationRecord, LoopRecord, SolverTrace};

/// The doubling loop stops once `sp(T^{n_i} - Q^{n_i}) <= 14 eps`.
pub const STOP_FACTOR: f64 = 14.0;
/// With the stopping rule above, the true residual of the output satisfies
/// `sp(T(Q^N) - Q^N) <= 16 eps` with probability at least `1 - delta`.
pub const OUTPUT_RESIDUAL_FACTOR: f64 = 16.0;
/// Default cap on doubling loops. Termination happens with probability 1
/// long before this; the cap only turns configuration errors into a hard
/// failure instead of an unbounded run.
pub const DEFAULT_MAX_LOOPS: usize = 40;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(
        "doubling loop budget exhausted after {loops} loops (last stop statistic {last_statistic}, threshold {threshold})"
    )]
    LoopBudgetExhausted {
        loops: usize,
        last_statistic: f64,
        threshold: f64,
    },
    #[error("rewards must lie in [0,1] for this entry point; found {value} at ({state},{action})")]
    RewardRange {
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("epsilon {epsilon} out of range for this entry point (limit {limit})")]
    EpsilonRange { epsilon: f64, limit: f64 },
    #[error("discount factor must lie strictly inside (0,1), got {0}")]
    InvalidGamma(f64),
}

/// Inputs of a fixed-length run: start point `Q^0`, iteration count `n`,
/// accuracy `epsilon`, and confidence `delta`.
#[derive(Debug, Clone)]
pub struct SaviaParams {
    pub q0: QTable,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl SaviaParams {
    fn validate(&self) -> Result<(), ParamError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(ParamError::InvalidEpsilon(self.epsilon));
        }
        if !(self.delta.is_finite() && 0.0 < self.delta && self.delta < 1.0) {
            return Err(ParamError::InvalidDelta(self.delta));
        }
        Ok(())
    }
}

/// Optional run plumbing.
///
/// `loop_index` namespaces the sampling substreams so restart loops are
/// mutually independent. `exact_reference` switches on the oracle channel of
/// the trace (true residuals and sampling errors); the solver itself never
/// reads the attached transition kernel, so production use against an opaque
/// sampler simply leaves it `None`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub loop_index: u64,
    pub exact_reference: Option<&'a TabularMdp>,
}

/// Fixed-length anchored stochastic value iteration.
///
/// Starting from `T^{-1} = r`, `h^{-1} = 0`, iterates for `k = 0..=n`:
///
/// ```text
/// Q^k = (1 - beta_k) Q^0 + beta_k T^{k-1}
/// h^k = max_A(Q^k)
/// d^k = h^k - h^{k-1}
/// m_k = max(ceil(alpha c_k sp(d^k)^2 / eps^2), 1)
/// D^k = mean of d^k over m_k next-state draws per (s,a)
/// T^k = T^{k-1} + D^k
/// ```
///
/// and returns `(Q^n, T^n, greedy policy of Q^n)` with the full trace. Since
/// `beta_0 = 0`, the first iterate is exactly `Q^0`, and telescoping gives
/// `T^k = r + sum_{i<=k} D^i`.
pub fn savia(
    model: &GenerativeModel,
    params: &SaviaParams,
    schedule: &Schedule,
) -> Result<AnchoredOutput, SolverError> {
    savia_with(model, params, schedule, &RunOptions::default())
}

pub fn savia_with(
    model: &GenerativeModel,
    params: &SaviaParams,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<AnchoredOutput, SolverError> {
    params.validate()?;
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
    let mut h_prev = ValueVector::zeros(ns);
    let mut q = params.q0.clone();
    let mut records = Vec::with_capacity(params.n + 1);
    let mut cumulative: u64 = 0;

    for k in 0..=params.n {
        let beta = schedule.beta(k);
        q = QTable::affine(&params.q0, 1.0 - beta, &t, beta);
        let h = q.max_over_actions();
        let d = h.sub(&h_prev);
        let span_d = d.span();
        let m = batch_size(a, schedule.c(k), span_d, params.epsilon)?;
        let dk = model.sample_matrix(&d, m, k, opts.loop_index)?;
        t.add_scaled_assign(&dk, 1.0);
        // sample_matrix already panics if |S||A| * m overflows the counter.
        cumulative += pair_count * m;

        let empirical_residual = t.sub(&q).span();
        let (true_residual, sampling_error) = match opts.exact_reference {
            Some(reference) => {
                let exact = reference.apply_bellman(&q);
                (
                    Some(exact.sub(&q).span()),
                    Some(t.sub(&exact).inf_norm()),
                )
            }
            None => (None, None),
        };
        records.push(IterationRecord {
            k,
            increment_norm: span_d,
            batch_size: m,
            cumulative_samples: cumulative,
            empirical_residual,
            true_residual,
            sampling_error,
        });
        h_prev = h;
    }

    let policy = q.greedy_policy();
    Ok(AnchoredOutput {
        q,
        t,
        policy,
        trace: SolverTrace { records },
    })
}

/// Doubling restart loop: runs [`savia`] from the same `Q^0` with budgets
/// `n_i = 2^i` and confidence shares `delta_i = delta / c_i`, on fresh
/// independent sample substreams per loop, until the empirical stopping rule
/// `sp(T^{n_i} - Q^{n_i}) <= 14 eps` fires.
///
/// Termination happens with probability 1; exhausting `max_loops` therefore
/// signals a bug or a pathological configuration and is reported as a
/// distinct error rather than a result.
pub fn savia_plus(
    model: &GenerativeModel,
    q0: &QTable,
    epsilon: f64,
    delta: f64,
    schedule: &Schedule,
    max_loops: usize,
) -> Result<DoublingOutput, SolverError> {
    savia_plus_with(model, q0, epsilon, delta, schedule, max_loops, None)
}

pub fn savia_plus_with(
    model: &GenerativeModel,
    q0: &QTable,
    epsilon: f64,
    delta: f64,
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
        let params = SaviaParams {
            q0: q0.clone(),
            n: n_i as usize,
            epsilon,
            delta: delta_i,
        };
        let opts = RunOptions {
            loop_index: i as u64,
            exact_reference,
        };
        let before = model.total_samples();
        let out = savia_with(model, &params, schedule, &opts)?;
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

/// Convenience entry point for an `epsilon`-optimal policy with probability
/// at least `1 - delta`: requires rewards in `[0,1]` and `epsilon <= 1`,
/// starts from `Q^0 = 0`, and runs the doubling loop at accuracy
/// `epsilon / 16` so the output residual bound collapses to `epsilon`.
pub fn epsilon_optimal(
    model: &GenerativeModel,
    epsilon: f64,
    delta: f64,
    schedule: &Schedule,
    max_loops: usize,
) -> Result<DoublingOutput, SolverError> {
    require_unit_rewards(model.mdp())?;
    if !(epsilon.is_finite() && 0.0 < epsilon && epsilon <= 1.0) {
        return Err(SolverError::EpsilonRange {
            epsilon,
            limit: 1.0,
        });
    }
    let q0 = QTable::zeros(model.mdp().n_states(), model.mdp().n_actions());
    savia_plus(model, &q0, epsilon / 16.0, delta, schedule, max_loops)
}

/// Variant tuned for the expected (rather than high-probability) policy
/// error: accuracy `epsilon / 17` and confidence `delta = epsilon^2 / 17`.
pub fn epsilon_optimal_expected(
    model: &GenerativeModel,
    epsilon: f64,
    schedule: &Schedule,
    max_loops: usize,
) -> Result<DoublingOutput, SolverError> {
    require_unit_rewards(model.mdp())?;
    if !(epsilon.is_finite() && 0.0 < epsilon && epsilon <= 1.0) {
        return Err(SolverError::EpsilonRange {
            epsilon,
            limit: 1.0,
        });
    }
    let q0 = QTable::zeros(model.mdp().n_states(), model.mdp().n_actions());
    savia_plus(
        model,
        &q0,
        epsilon / 17.0,
        epsilon * epsilon / 17.0,
        schedule,
        max_loops,
    )
}

fn require_unit_rewards(mdp: &TabularMdp) -> Result<(), SolverError> {
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
    Ok(())
}

/// Output of the exact-operator anchored iteration.
#[derive(Debug, Clone)]
pub struct ExactRun {
    /// Final iterate `Q^n`.
    pub q: QTable,
    /// Exact Bellman image `T(Q^n)`.
    pub t: QTable,
    pub policy: crate::mdp::Policy,
    /// `sp(T(Q^k) - Q^k)` for every `k = 0..=n`.
    pub residuals: Vec<f64>,
}

/// Anchored value iteration with the exact Bellman operator:
/// `Q^k = (1 - beta_k) Q^0 + beta_k T(Q^{k-1})`. Consumes zero samples; the
/// sampled runs coincide with this recursion whenever every transition row
/// is a point mass.
pub fn exact_savia(mdp: &TabularMdp, q0: &QTable, n: usize, schedule: &Schedule) -> ExactRun {
    let mut q = q0.clone();
    let mut bell = mdp.apply_bellman(&q);
    let mut residuals = Vec::with_capacity(n + 1);
    residuals.push(bell.sub(&q).span());
    for k in 1..=n {
        let beta = schedule.beta(k);
        q = QTable::affine(q0, 1.0 - beta, &bell, beta);
        bell = mdp.apply_bellman(&q);
        residuals.push(bell.sub(&q).span());
    }
    let policy = q.greedy_policy();
    ExactRun {
        q,
        t: bell,
        policy,
        residuals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;
    use crate::oracle::exact_anchored_vi;

    fn cycle(n: usize) -> TabularMdp {
        let mut t = vec![0.0; n * n];
        let mut r = vec![0.0; n];
        for s in 0..n {
            t[s * n + (s + 1) % n] = 1.0;
        }
        r[n - 1] = 1.0;
        TabularMdp::new(n, 1, t, r).unwrap()
    }

    /// Two-state, one-action chain with genuinely random transitions.
    fn noisy_chain() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            vec![
                0.7, 0.3, //
                0.2, 0.8, //
                0.5, 0.5, //
                0.9, 0.1,
            ],
            vec![0.2, 0.0, 1.0, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_return_the_start_point() {
        let mdp = cycle(3);
        let model = GenerativeModel::new(&mdp, 1);
        let q0 = QTable::from_values(3, 1, vec![0.5, -1.0, 2.0]);
        let params = SaviaParams {
            q0: q0.clone(),
            n: 0,
            epsilon: 0.5,
            delta: 0.1,
        };
        let out = savia(&model, &params, &Schedule).unwrap();
        assert_eq!(out.q, q0);
    }

    #[test]
    fn deterministic_mdp_matches_the_exact_recursion() {
        // Point-mass rows make sampling exact, so the run must coincide with
        // the exact anchored iteration at every k.
        let mdp = cycle(4);
        let model = GenerativeModel::new(&mdp, 9);
        let params = SaviaParams {
            q0: QTable::zeros(4, 1),
            n: 32,
            epsilon: 0.25,
            delta: 0.1,
        };
        let opts = RunOptions {
            loop_index: 0,
            exact_reference: Some(&mdp),
        };
        let out = savia_with(&model, &params, &Schedule, &opts).unwrap();
        // Point-mass draws are exact; the only slack is the telescoped
        // accumulator re-rounding the increments it sums.
        for rec in &out.trace.records {
            assert!(rec.sampling_error.unwrap() <= 1e-12, "k = {}", rec.k);
        }
        let exact = exact_savia(&mdp, &params.q0, 32, &Schedule);
        assert!(out.q.sub(&exact.q).inf_norm() <= 1e-12);
        assert!(out.t.sub(&exact.t).inf_norm() <= 1e-12);
    }

    #[test]
    fn trace_sample_identity_matches_the_model_counter() {
        let mdp = noisy_chain();
        let model = GenerativeModel::new(&mdp, 5);
        let params = SaviaParams {
            q0: QTable::zeros(2, 2),
            n: 12,
            epsilon: 0.3,
            delta: 0.2,
        };
        let out = savia(&model, &params, &Schedule).unwrap();
        let from_trace: u64 = out
            .trace
            .records
            .iter()
            .map(|r| r.batch_size * 4)
            .sum();
        assert_eq!(out.trace.total_samples(), from_trace);
        assert_eq!(model.total_samples(), from_trace);
    }

    #[test]
    fn increment_spans_stay_below_the_start_bound() {
        // sp(d^k) <= max(sp(r), sp(Q^0)) holds surely along every run.
        let mdp = noisy_chain();
        let kappa = mdp.rewards_q().span().max(0.0);
        for seed in 0..20 {
            let model = GenerativeModel::new(&mdp, seed);
            let params = SaviaParams {
                q0: QTable::zeros(2, 2),
                n: 40,
                epsilon: 0.2,
                delta: 0.1,
            };
            let out = savia(&model, &params, &Schedule).unwrap();
            for rec in &out.trace.records {
                assert!(
                    rec.increment_norm <= kappa + 1e-12,
                    "seed {seed} k {} span {} kappa {kappa}",
                    rec.k,
                    rec.increment_norm
                );
            }
        }
    }

    #[test]
    fn empirical_and_true_residuals_differ_by_at_most_twice_the_error() {
        let mdp = noisy_chain();
        let model = GenerativeModel::new(&mdp, 77);
        let params = SaviaParams {
            q0: QTable::zeros(2, 2),
            n: 24,
            epsilon: 0.25,
            delta: 0.1,
        };
        let opts = RunOptions {
            loop_index: 0,
            exact_reference: Some(&mdp),
        };
        let out = savia_with(&model, &params, &Schedule, &opts).unwrap();
        let max_err = out.trace.max_sampling_error().unwrap();
        if max_err <= params.epsilon {
            for rec in &out.trace.records {
                let gap = (rec.empirical_residual - rec.true_residual.unwrap()).abs();
                assert!(gap <= 2.0 * params.epsilon + 1e-12, "k = {}", rec.k);
            }
        }
    }

    #[test]
    fn doubling_stops_immediately_when_the_rule_already_holds() {
        let mdp = cycle(2);
        let model = GenerativeModel::new(&mdp, 3);
        let q0 = QTable::zeros(2, 1);
        let out = savia_plus(&model, &q0, 1.0, 0.1, &Schedule, 10).unwrap();
        assert_eq!(out.stop_loop, 0);
        assert_eq!(out.n_final, 1);
        assert!(out.output.trace.last().empirical_residual <= 14.0);
        assert_eq!(out.total_samples, out.loops[0].samples_in_loop);
    }

    #[test]
    fn exhausted_loop_budget_is_a_distinct_error() {
        let mdp = cycle(2);
        let model = GenerativeModel::new(&mdp, 3);
        let q0 = QTable::zeros(2, 1);
        match savia_plus(&model, &q0, 1e-6, 0.1, &Schedule, 3) {
            Err(SolverError::LoopBudgetExhausted { loops: 3, .. }) => {}
            other => panic!("expected loop budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn doubling_total_samples_add_up() {
        let mdp = noisy_chain();
        let model = GenerativeModel::new(&mdp, 21);
        let q0 = QTable::zeros(2, 2);
        let out = savia_plus(&model, &q0, 0.05, 0.1, &Schedule, 20).unwrap();
        assert_eq!(
            out.total_samples,
            out.loops.iter().map(|l| l.samples_in_loop).sum::<u64>()
        );
        assert_eq!(model.total_samples(), out.total_samples);
        assert!(out.output.trace.last().empirical_residual <= 14.0 * 0.05);
        // n_i doubles and delta_i shrinks with the loop index.
        for w in out.loops.windows(2) {
            assert_eq!(w[1].n_i, 2 * w[0].n_i);
            assert!(w[1].delta_i < w[0].delta_i);
        }
    }

    #[test]
    fn unit_reward_wrappers_enforce_their_preconditions() {
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.5]).unwrap();
        let model = GenerativeModel::new(&mdp, 0);
        match epsilon_optimal(&model, 0.5, 0.1, &Schedule, 10) {
            Err(SolverError::RewardRange { value, .. }) => assert_eq!(value, 1.5),
            other => panic!("expected reward-range error, got {other:?}"),
        }

        let ok = cycle(2);
        let model = GenerativeModel::new(&ok, 0);
        assert!(matches!(
            epsilon_optimal(&model, 1.5, 0.1, &Schedule, 10),
            Err(SolverError::EpsilonRange { .. })
        ));
        assert!(epsilon_optimal(&model, 1.0, 0.1, &Schedule, 20).is_ok());
        assert!(epsilon_optimal_expected(&model, 1.0, &Schedule, 20).is_ok());
    }

    #[test]
    fn exact_run_from_a_fixed_point_has_zero_residual() {
        let mdp = cycle(3);
        let solution = exact_anchored_vi(&mdp, &QTable::zeros(3, 1), 1e-11, 1_000_000).unwrap();
        let run = exact_savia(&mdp, &solution.q_star, 50, &Schedule);
        for (k, r) in run.residuals.iter().enumerate() {
            assert!(*r <= 1e-9, "k = {k}, residual {r}");
        }
    }

    #[test]
    fn exact_run_satisfies_the_anchored_residual_bound() {
        let mdp = noisy_chain();
        let q0 = QTable::zeros(2, 2);
        let solution = exact_anchored_vi(&mdp, &q0, 1e-11, 10_000_000).unwrap();
        let mu = q0.sub(&solution.q_star).span();
        let run = exact_savia(&mdp, &q0, 1000, &Schedule);
        for (k, r) in run.residuals.iter().enumerate() {
            assert!(
                *r <= 4.0 * mu / (k as f64 + 1.0) + 1e-8,
                "k = {k}, residual {r}, mu {mu}"
            );
        }
    }

    #[test]
    fn exact_iterates_never_move_farther_than_the_start() {
        // sp(Q^k - Q*) <= sp(Q^0 - Q*) along the exact recursion.
        let mdp = noisy_chain();
        let q0 = QTable::zeros(2, 2);
        let solution = exact_anchored_vi(&mdp, &q0, 1e-11, 10_000_000).unwrap();
        let start = q0.sub(&solution.q_star).span();
        let schedule = Schedule;
        let mut q = q0.clone();
        let mut bell = mdp.apply_bellman(&q);
        for k in 1..=500 {
            q = QTable::affine(&q0, 1.0 - schedule.beta(k), &bell, schedule.beta(k));
            bell = mdp.apply_bellman(&q);
            assert!(q.sub(&solution.q_star).span() <= start + 1e-9, "k = {k}");
        }
    }

    #[test]
    fn shifted_and_unshifted_recursions_agree_up_to_a_constant() {
        // Subtracting the optimal gain inside the operator only shifts the
        // iterates by constants: the span of the difference stays zero.
        let mdp = noisy_chain();
        let q0 = QTable::zeros(2, 2);
        let solution = exact_anchored_vi(&mdp, &q0, 1e-11, 10_000_000).unwrap();
        let g = solution.gain;
        let schedule = Schedule;

        let mut q_plain = q0.clone();
        let mut q_shift = q0.clone();
        for k in 1..=60 {
            let beta = schedule.beta(k);
            let bell_plain = mdp.apply_bellman(&q_plain);
            let bell_shift = mdp.apply_bellman(&q_shift).shift(-g);
            q_plain = QTable::affine(&q0, 1.0 - beta, &bell_plain, beta);
            q_shift = QTable::affine(&q0, 1.0 - beta, &bell_shift, beta);
            assert!(q_plain.sub(&q_shift).span() <= 1e-9, "k = {k}");
        }
    }
}
