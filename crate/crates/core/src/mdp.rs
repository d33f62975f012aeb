//! Dense tabular MDP model, Q-tables, policies, and exact Bellman operators.
//!
//! All types are immutable after construction and all operators are pure
//! functions, so everything here is safe to share across threads.

use std::fmt;

use thiserror::Error;

use crate::norms;

/// Absolute tolerance on each transition row sum.
///
/// Generators build rows by normalisation, so exact sums are not guaranteed.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A single validation failure, with the indices that locate it.
#[derive(Debug, Clone, PartialEq)]
pub enum MdpViolation {
    /// Transition row does not sum to 1 within [`ROW_SUM_TOL`].
    RowSum { state: usize, action: usize, sum: f64 },
    /// Negative transition probability.
    NegativeProbability {
        state: usize,
        action: usize,
        next_state: usize,
        value: f64,
    },
    /// NaN or infinite transition probability.
    NonFiniteProbability {
        state: usize,
        action: usize,
        next_state: usize,
    },
    /// NaN or infinite reward.
    NonFiniteReward { state: usize, action: usize },
}

impl fmt::Display for MdpViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpViolation::RowSum { state, action, sum } => {
                write!(f, "row ({state},{action}) sums to {sum}, expected 1")
            }
            MdpViolation::NegativeProbability {
                state,
                action,
                next_state,
                value,
            } => write!(f, "negative probability {value} at ({state},{action},{next_state})"),
            MdpViolation::NonFiniteProbability {
                state,
                action,
                next_state,
            } => write!(f, "non-finite probability at ({state},{action},{next_state})"),
            MdpViolation::NonFiniteReward { state, action } => {
                write!(f, "non-finite reward at ({state},{action})")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("state and action counts must both be positive")]
    EmptySpace,
    #[error("{name} has length {got}, expected {expected}")]
    BadShape {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid MDP: {} violation(s), first: {}", .0.len(), .0[0])]
    Invalid(Vec<MdpViolation>),
    #[error("discount factor must lie strictly inside (0,1), got {0}")]
    InvalidGamma(f64),
}

/// A finite MDP stored densely: transition tensor `[state][action][next]`
/// and reward matrix `[state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

impl TabularMdp {
    /// Builds an MDP from flattened row-major tensors and validates it:
    /// every transition row must be a probability distribution (entries
    /// nonnegative, sum within [`ROW_SUM_TOL`] of 1) and all rewards finite.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::EmptySpace);
        }
        let want_t = n_states * n_actions * n_states;
        if transitions.len() != want_t {
            return Err(MdpError::BadShape {
                name: "transitions",
                expected: want_t,
                got: transitions.len(),
            });
        }
        let want_r = n_states * n_actions;
        if rewards.len() != want_r {
            return Err(MdpError::BadShape {
                name: "rewards",
                expected: want_r,
                got: rewards.len(),
            });
        }
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transitions,
            rewards,
        };
        let violations = mdp.violations();
        if violations.is_empty() {
            Ok(mdp)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    /// Re-checks every invariant, reporting all violations rather than the
    /// first one. Never panics.
    pub fn validate(&self) -> Result<(), MdpError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    fn violations(&self) -> Vec<MdpViolation> {
        let mut out = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let mut sum = 0.0;
                let mut row_ok = true;
                for (s2, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        out.push(MdpViolation::NonFiniteProbability {
                            state: s,
                            action: a,
                            next_state: s2,
                        });
                        row_ok = false;
                    } else if p < 0.0 {
                        out.push(MdpViolation::NegativeProbability {
                            state: s,
                            action: a,
                            next_state: s2,
                            value: p,
                        });
                        row_ok = false;
                    }
                    sum += p;
                }
                if row_ok && (sum - 1.0).abs() > ROW_SUM_TOL {
                    out.push(MdpViolation::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
                let r = self.reward(s, a);
                if !r.is_finite() {
                    out.push(MdpViolation::NonFiniteReward { state: s, action: a });
                }
            }
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.n_actions + action) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize, next_state: usize) -> f64 {
        self.transitions[(state * self.n_actions + action) * self.n_states + next_state]
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.n_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// The reward matrix as a Q-table (used as the accumulator seed `T = r`).
    pub fn rewards_q(&self) -> QTable {
        QTable::from_values(self.n_states, self.n_actions, self.rewards.clone())
    }

    /// Expectation operator: `(P h)(s,a) = sum_{s'} P(s'|s,a) h(s')`.
    pub fn apply_p(&self, h: &ValueVector) -> QTable {
        assert_eq!(h.len(), self.n_states, "value vector length mismatch");
        let mut values = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                let mut acc = 0.0;
                for (p, hv) in row.iter().zip(h.values()) {
                    acc += p * hv;
                }
                values.push(acc);
            }
        }
        QTable::from_values(self.n_states, self.n_actions, values)
    }

    /// Average-reward Bellman operator `T(Q) = r + P max_A(Q)`.
    ///
    /// Homogeneous under additive constants (`T(Q + c) = T(Q) + c`) and
    /// nonexpansive in both the span seminorm and the infinity norm.
    pub fn apply_bellman(&self, q: &QTable) -> QTable {
        self.check_shape(q);
        let h = q.max_over_actions();
        let mut out = self.apply_p(&h);
        for (o, r) in out.values.iter_mut().zip(&self.rewards) {
            *o += r;
        }
        out
    }

    /// Discounted Bellman operator `T_g(Q) = r + g P max_A(Q)`,
    /// a `g`-contraction in the infinity norm.
    pub fn apply_bellman_discounted(&self, q: &QTable, params: &DiscountedParams) -> QTable {
        self.check_shape(q);
        let h = q.max_over_actions();
        let mut out = self.apply_p(&h);
        for (o, r) in out.values.iter_mut().zip(&self.rewards) {
            *o = r + params.gamma() * *o;
        }
        out
    }

    fn check_shape(&self, q: &QTable) {
        assert_eq!(
            (q.n_states, q.n_actions),
            (self.n_states, self.n_actions),
            "Q-table shape mismatch"
        );
    }
}

/// An `S x A` table of action values.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Self {
        assert!(n_states > 0 && n_actions > 0, "empty Q-table");
        QTable {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    /// Row-major `[state][action]` values.
    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert!(n_states > 0 && n_actions > 0, "empty Q-table");
        assert_eq!(values.len(), n_states * n_actions, "Q-table shape mismatch");
        QTable {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn span(&self) -> f64 {
        norms::span(&self.values).expect("Q-table is nonempty")
    }

    pub fn inf_norm(&self) -> f64 {
        norms::inf_norm(&self.values).expect("Q-table is nonempty")
    }

    /// `max_A`: per-state maximum over actions.
    ///
    /// Nonexpansive in both the infinity norm and the span seminorm.
    pub fn max_over_actions(&self) -> ValueVector {
        let values = self
            .values
            .chunks_exact(self.n_actions)
            .map(|row| row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
            .collect();
        ValueVector::from_values(values)
    }

    /// Greedy policy `pi(s) = argmax_a Q(s,a)`, ties broken by the lowest
    /// action index so runs are reproducible across platforms.
    pub fn greedy_policy(&self) -> Policy {
        let actions = self
            .values
            .chunks_exact(self.n_actions)
            .map(|row| {
                let mut best = 0;
                for (a, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect();
        Policy::from_actions(actions)
    }

    /// Convex/affine combination `wa * a + wb * b`, elementwise.
    pub fn affine(a: &QTable, wa: f64, b: &QTable, wb: f64) -> QTable {
        assert_eq!((a.n_states, a.n_actions), (b.n_states, b.n_actions));
        let values = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| wa * x + wb * y)
            .collect();
        QTable::from_values(a.n_states, a.n_actions, values)
    }

    pub fn sub(&self, rhs: &QTable) -> QTable {
        assert_eq!((self.n_states, self.n_actions), (rhs.n_states, rhs.n_actions));
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(x, y)| x - y)
            .collect();
        QTable::from_values(self.n_states, self.n_actions, values)
    }

    pub fn add_scaled_assign(&mut self, rhs: &QTable, w: f64) {
        assert_eq!((self.n_states, self.n_actions), (rhs.n_states, rhs.n_actions));
        for (x, y) in self.values.iter_mut().zip(&rhs.values) {
            *x += w * y;
        }
    }

    pub fn shift(&self, c: f64) -> QTable {
        let values = self.values.iter().map(|x| x + c).collect();
        QTable::from_values(self.n_states, self.n_actions, values)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// An `S`-indexed real vector (values, biases, increments, per-state gains).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    values: Vec<f64>,
}

impl ValueVector {
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "empty value vector");
        ValueVector { values: vec![0.0; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "empty value vector");
        ValueVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: constructors reject empty vectors.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn span(&self) -> f64 {
        norms::span(&self.values).expect("value vector is nonempty")
    }

    pub fn inf_norm(&self) -> f64 {
        norms::inf_norm(&self.values).expect("value vector is nonempty")
    }

    pub fn sub(&self, rhs: &ValueVector) -> ValueVector {
        assert_eq!(self.len(), rhs.len());
        ValueVector::from_values(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(x, y)| x - y)
                .collect(),
        )
    }
}

/// A stationary deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn from_actions(actions: Vec<usize>) -> Self {
        assert!(!actions.is_empty(), "empty policy");
        Policy { actions }
    }

    pub fn n_states(&self) -> usize {
        self.actions.len()
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Checks every entry against the action count of `mdp`.
    pub fn is_valid_for(&self, mdp: &TabularMdp) -> bool {
        self.actions.len() == mdp.n_states() && self.actions.iter().all(|&a| a < mdp.n_actions())
    }
}

/// Discount factor, validated strictly inside (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedParams {
    gamma: f64,
}

impl DiscountedParams {
    pub fn new(gamma: f64) -> Result<Self, MdpError> {
        if gamma.is_finite() && 0.0 < gamma && gamma < 1.0 {
            Ok(DiscountedParams { gamma })
        } else {
            Err(MdpError::InvalidGamma(gamma))
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}
