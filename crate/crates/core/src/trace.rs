//! Per-iteration run records shared by the average-reward and discounted
//! solvers. Recording is always on; every bound check in the test and
//! benchmark layers reads these traces.

use crate::mdp::{Policy, QTable};

/// One solver iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// Norm of the increment `d^k`: span seminorm for average-reward runs,
    /// infinity norm for discounted runs.
    pub increment_norm: f64,
    /// Batch size `m_k` (draws per state-action pair this iteration).
    pub batch_size: u64,
    /// `|S||A| * sum_{i<=k} m_i`, the draws consumed so far in this run.
    pub cumulative_samples: u64,
    /// Residual of the running estimate against the current iterate:
    /// `sp(T^k - Q^k)` (average) or `||T^k - Q^k||_inf` (discounted).
    pub empirical_residual: f64,
    /// Residual against the exact operator; only filled when a ground-truth
    /// MDP is attached, never consumed by the solver itself.
    pub true_residual: Option<f64>,
    /// `||T^k - T(Q^k)||_inf`, the estimation error at iteration k; oracle
    /// mode only.
    pub sampling_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace has at least one record")
    }

    /// Total draws reported by the trace: `|S||A| * sum_k m_k`.
    pub fn total_samples(&self) -> u64 {
        self.last().cumulative_samples
    }

    /// Largest recorded `||T^k - T(Q^k)||_inf`; `None` outside oracle mode.
    pub fn max_sampling_error(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.sampling_error)
            .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)))
    }
}

/// Output of one fixed-length anchored run: the final iterate `Q^n`, the
/// running estimate `T^n`, and the greedy policy of `Q^n`.
#[derive(Debug, Clone)]
pub struct AnchoredOutput {
    pub q: QTable,
    pub t: QTable,
    pub policy: Policy,
    pub trace: SolverTrace,
}

/// One restart loop of a doubling run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub loop_index: usize,
    /// Inner iteration budget `n_i = 2^i`.
    pub n_i: u64,
    /// Confidence share `delta_i = delta / c_i`.
    pub delta_i: f64,
    /// Value of the stopping statistic at the end of the loop.
    pub stop_statistic: f64,
    /// Draws consumed by this loop.
    pub samples_in_loop: u64,
}

/// Output of a doubling run: the stopping loop's run output plus per-loop
/// records and the exact total sample count.
#[derive(Debug, Clone)]
pub struct DoublingOutput {
    pub output: AnchoredOutput,
    /// Index `I` of the stopping loop.
    pub stop_loop: usize,
    /// `N = 2^I`, the inner budget of the stopping loop.
    pub n_final: u64,
    pub loops: Vec<LoopRecord>,
    /// `sum_i M_i` over all executed loops.
    pub total_samples: u64,
}
