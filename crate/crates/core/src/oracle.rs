//! Ground-truth solvers used to verify the sampled algorithms: exact optimal
//! gain/bias, exact discounted fixed points, Markov-chain structure, and
//! exact or Monte-Carlo policy evaluation.
//!
//! Oracle accuracy is meant to dominate every test tolerance by several
//! orders of magnitude; linear systems are solved by dense LU with partial
//! pivoting and residual-checked afterwards.

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::mdp::{DiscountedParams, Policy, QTable, TabularMdp, ValueVector};
use crate::sampling::GenerativeModel;
use crate::schedule::Schedule;

/// Default span tolerance for the gain/bias oracle.
pub const DEFAULT_TOL_SPAN: f64 = 1e-9;
/// Default iteration cap for the gain/bias oracle.
pub const DEFAULT_MAX_ITER: u64 = 10_000_000;
/// Residual tolerance enforced after every linear solve.
const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "no convergence after {iterations} iterations (residual {residual}, tolerance \
         {tolerance}); the input may not be weakly communicating"
    )]
    MaxIterExceeded {
        iterations: u64,
        residual: f64,
        tolerance: f64,
    },
    #[error("row {row} is not a probability distribution (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),
    #[error("solution residual {residual} exceeds tolerance {tolerance}")]
    ResidualCheck { residual: f64, tolerance: f64 },
    #[error("cannot enumerate {policies:e} deterministic policies")]
    TooManyPolicies { policies: f64 },
}

/// A fixed point of the average-reward Bellman operator, up to tolerance.
#[derive(Debug, Clone)]
pub struct GainBiasSolution {
    /// Optimal gain, extracted as the midrange of `T(Q) - Q` at convergence
    /// (the midrange minimises the worst-case scalar error given a
    /// span-bounded residual).
    pub gain: f64,
    /// Canonical fixed-point representative, shifted so its minimum entry is
    /// 0 (fixed points are only defined modulo constants).
    pub q_star: QTable,
    /// `h* = max_A(Q*)`.
    pub h_star: ValueVector,
    /// `sp(T(Q*) - Q*)` actually achieved.
    pub residual_span: f64,
    /// Operator applications consumed.
    pub iterations: u64,
}

/// High-precision solve of `Q = T(Q) - g` by anchored value iteration with
/// periodic anchor refresh.
///
/// A single anchored sweep has residual `O(1/k)`, which cannot reach
/// tolerances like 1e-9 directly; re-anchoring at the current iterate after
/// each epoch restarts that decay from a much closer point, which converges
/// geometrically on the weakly communicating instances this oracle is for.
/// Epochs double in length whenever one fails to halve the residual.
///
/// Callers are responsible for weak communication; on other inputs the span
/// residual need not vanish and the iteration cap reports non-convergence.
pub fn exact_anchored_vi(
    mdp: &TabularMdp,
    q0: &QTable,
    tol_span: f64,
    max_iter: u64,
) -> Result<GainBiasSolution, OracleError> {
    let schedule = Schedule;
    let mut anchor = q0.clone();
    let mut q = q0.clone();
    let mut bell = mdp.apply_bellman(&q);
    let mut residual = bell.sub(&q).span();
    let mut iterations: u64 = 1;
    let mut epoch_len: u64 = 64;
    let mut last_epoch_residual = residual;

    while residual > tol_span {
        if iterations >= max_iter {
            return Err(OracleError::MaxIterExceeded {
                iterations,
                residual,
                tolerance: tol_span,
            });
        }
        let budget = epoch_len.min(max_iter - iterations);
        q = anchor.clone();
        bell = mdp.apply_bellman(&q);
        iterations += 1;
        for k in 1..=budget {
            let beta = schedule.beta(k as usize);
            q = QTable::affine(&anchor, 1.0 - beta, &bell, beta);
            bell = mdp.apply_bellman(&q);
            iterations += 1;
        }
        residual = bell.sub(&q).span();
        if residual > 0.5 * last_epoch_residual {
            epoch_len = epoch_len.saturating_mul(2);
        }
        last_epoch_residual = residual;
        // Re-anchor at the current iterate; the shift keeps the drift of the
        // unnormalised recursion (roughly the gain per step) out of the
        // floating-point range.
        anchor = q.shift(-q.min_value());
    }

    let diff = bell.sub(&q);
    let gain = (diff.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        + diff.values().iter().fold(f64::INFINITY, |m, &v| m.min(v)))
        / 2.0;
    let q_star = q.shift(-q.min_value());
    let h_star = q_star.max_over_actions();
    Ok(GainBiasSolution {
        gain,
        q_star,
        h_star,
        residual_span: residual,
        iterations,
    })
}

/// Fixed-point iteration for the discounted operator, returning `Q` with
/// `||Q - Q*||_inf <= tol_inf` via the stopping criterion
/// `||T_g(Q) - Q||_inf <= tol_inf (1 - gamma)`.
///
/// # Panics
/// If `gamma` is not strictly inside (0,1). Convergence is geometric, so no
/// error path is needed.
pub fn discounted_vi(mdp: &TabularMdp, gamma: f64, tol_inf: f64) -> QTable {
    let params = DiscountedParams::new(gamma).expect("gamma must lie in (0,1)");
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let threshold = tol_inf * (1.0 - gamma);
    for _ in 0..100_000_000u64 {
        let next = mdp.apply_bellman_discounted(&q, &params);
        if next.sub(&q).inf_norm() <= threshold {
            return q;
        }
        q = next;
    }
    unreachable!("discounted value iteration contracts geometrically");
}

/// A row-stochastic matrix (the chain induced by a fixed policy).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    n: usize,
    rows: Vec<f64>,
}

impl MarkovMatrix {
    pub fn new(n: usize, rows: Vec<f64>) -> Result<Self, OracleError> {
        assert_eq!(rows.len(), n * n, "matrix shape mismatch");
        for i in 0..n {
            let sum: f64 = rows[i * n..(i + 1) * n].iter().sum();
            let ok = rows[i * n..(i + 1) * n].iter().all(|&p| p >= 0.0)
                && (sum - 1.0).abs() <= 1e-9;
            if !ok {
                return Err(OracleError::NotStochastic { row: i, sum });
            }
        }
        Ok(MarkovMatrix { n, rows })
    }

    /// The chain `P_pi(s'|s) = P(s'|s, pi(s))`.
    pub fn from_policy(mdp: &TabularMdp, policy: &Policy) -> Self {
        assert!(policy.is_valid_for(mdp), "policy does not fit the MDP");
        let n = mdp.n_states();
        let mut rows = Vec::with_capacity(n * n);
        for s in 0..n {
            rows.extend_from_slice(mdp.transition_row(s, policy.action(s)));
        }
        MarkovMatrix { n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from * self.n + to]
    }

    /// Restriction to a subset of states; only sensible on closed sets,
    /// where the result is again stochastic.
    pub fn restrict(&self, states: &[usize]) -> MarkovMatrix {
        let m = states.len();
        let mut rows = Vec::with_capacity(m * m);
        for &i in states {
            for &j in states {
                rows.push(self.get(i, j));
            }
        }
        MarkovMatrix { n: m, rows }
    }
}

/// Communicating structure of a Markov chain: closed strongly connected
/// components are the recurrent classes, everything else is transient.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDecomposition {
    /// Sorted recurrent classes (each sorted, ordered by smallest member).
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    /// Per state: index into `recurrent_classes`, or `None` if transient.
    pub class_of: Vec<Option<usize>>,
}

pub fn recurrent_classes(p: &MarkovMatrix) -> ChainDecomposition {
    let n = p.n();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p.get(i, j) > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for scc in petgraph::algo::kosaraju_scc(&graph) {
        let mut members: Vec<usize> = scc.into_iter().map(|ix| ix.index()).collect();
        members.sort_unstable();
        // Recurrent iff closed: no probability mass leaves the component.
        let closed = members.iter().all(|&i| {
            (0..n).all(|j| p.get(i, j) == 0.0 || members.binary_search(&j).is_ok())
        });
        if closed {
            classes.push(members);
        }
    }
    classes.sort_by_key(|c| c[0]);

    let mut class_of = vec![None; n];
    for (idx, class) in classes.iter().enumerate() {
        for &s in class {
            class_of[s] = Some(idx);
        }
    }
    let transient_states = (0..n).filter(|&s| class_of[s].is_none()).collect();
    ChainDecomposition {
        recurrent_classes: classes,
        transient_states,
        class_of,
    }
}

/// Stationary distribution of an irreducible stochastic matrix, solved as
/// `mu (P - I) = 0` with the normalisation `sum(mu) = 1` replacing one
/// equation, then residual-checked to 1e-10.
pub fn stationary_distribution(p: &MarkovMatrix) -> Result<Vec<f64>, OracleError> {
    let n = p.n();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Row i < n-1 of A is column i of (P - I); the last row is all ones.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n {
            a[(i, j)] = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let mu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| OracleError::LinearSolveFailed("singular stationary system".into()))?;

    let mut out = Vec::with_capacity(n);
    let mut residual = 0.0f64;
    for &w in mu.iter() {
        if w < -SOLVE_TOL {
            return Err(OracleError::ResidualCheck {
                residual: -w,
                tolerance: SOLVE_TOL,
            });
        }
        out.push(w.max(0.0));
    }
    for (j, &w) in out.iter().enumerate() {
        let mut col = 0.0;
        for (i, &wi) in out.iter().enumerate() {
            col += wi * p.get(i, j);
        }
        residual = residual.max((col - w).abs());
    }
    let sum: f64 = out.iter().sum();
    residual = residual.max((sum - 1.0).abs());
    if residual > SOLVE_TOL {
        return Err(OracleError::ResidualCheck {
            residual,
            tolerance: SOLVE_TOL,
        });
    }
    Ok(out)
}

/// Exact long-run average reward of a policy, per start state.
///
/// Each recurrent class gets the stationary average of its rewards; the
/// expected gain of a transient state solves
/// `(I - P_TT) x = P_{T -> recurrent} g_recurrent`, i.e. the absorption-
/// weighted mixture of class gains. This realises the Cesaro-limit
/// definition exactly, including for multichain policy evaluation.
pub fn policy_gain(mdp: &TabularMdp, policy: &Policy) -> Result<ValueVector, OracleError> {
    let p = MarkovMatrix::from_policy(mdp, policy);
    let n = p.n();
    let decomp = recurrent_classes(&p);
    let mut gain = vec![0.0f64; n];

    for class in &decomp.recurrent_classes {
        let mu = stationary_distribution(&p.restrict(class))?;
        let g: f64 = class
            .iter()
            .zip(&mu)
            .map(|(&s, &w)| w * mdp.reward(s, policy.action(s)))
            .sum();
        for &s in class {
            gain[s] = g;
        }
    }

    let transient = &decomp.transient_states;
    if !transient.is_empty() {
        let m = transient.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (ti, &i) in transient.iter().enumerate() {
            for (tj, &j) in transient.iter().enumerate() {
                a[(ti, tj)] = if ti == tj { 1.0 } else { 0.0 } - p.get(i, j);
            }
            let mut drive = 0.0;
            for (j, &g) in gain.iter().enumerate() {
                if decomp.class_of[j].is_some() {
                    drive += p.get(i, j) * g;
                }
            }
            b[ti] = drive;
        }
        let x = a
            .clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| OracleError::LinearSolveFailed("singular transient system".into()))?;
        let residual = (&a * &x - &b).abs().max();
        if residual > SOLVE_TOL {
            return Err(OracleError::ResidualCheck {
                residual,
                tolerance: SOLVE_TOL,
            });
        }
        for (ti, &i) in transient.iter().enumerate() {
            gain[i] = x[ti];
        }
    }
    Ok(ValueVector::from_values(gain))
}

/// Exact discounted Q-values of a policy: solve `(I - gamma P_pi) v = r_pi`
/// by LU, residual-check, then one Bellman backup fills all `(s,a)`.
pub fn discounted_policy_q(
    mdp: &TabularMdp,
    policy: &Policy,
    gamma: f64,
) -> Result<QTable, OracleError> {
    let params = DiscountedParams::new(gamma).expect("gamma must lie in (0,1)");
    let p = MarkovMatrix::from_policy(mdp, policy);
    let n = p.n();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - gamma * p.get(i, j);
        }
        b[i] = mdp.reward(i, policy.action(i));
    }
    let v = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| OracleError::LinearSolveFailed("singular evaluation system".into()))?;
    let residual = (&a * &v - &b).abs().max();
    if residual > SOLVE_TOL {
        return Err(OracleError::ResidualCheck {
            residual,
            tolerance: SOLVE_TOL,
        });
    }
    let values = ValueVector::from_values(v.iter().copied().collect());
    let expected = mdp.apply_p(&values);
    let mut out = mdp.rewards_q();
    out.add_scaled_assign(&expected, params.gamma());
    Ok(out)
}

/// Empirical average reward along one simulated trajectory per start state.
/// Deterministic in `(model.master_seed, seed)`; draws count against the
/// model's sample counter.
pub fn monte_carlo_gain(
    model: &GenerativeModel,
    policy: &Policy,
    horizon: u64,
    seed: u64,
) -> ValueVector {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mdp = model.mdp();
    assert!(policy.is_valid_for(mdp), "policy does not fit the MDP");
    let mut out = Vec::with_capacity(mdp.n_states());
    for start in 0..mdp.n_states() {
        let mut rng = model.trajectory_rng(seed, start);
        let mut state = start;
        let mut total = 0.0f64;
        for _ in 0..horizon {
            let action = policy.action(state);
            total += mdp.reward(state, action);
            state = model.sample_next(&mut rng, state, action);
        }
        out.push(total / horizon as f64);
    }
    ValueVector::from_values(out)
}

/// Enumerates every deterministic policy.
pub fn all_policies(mdp: &TabularMdp) -> Result<Vec<Policy>, OracleError> {
    let count = (mdp.n_actions() as f64).powi(mdp.n_states() as i32);
    if count > 1e6 {
        return Err(OracleError::TooManyPolicies { policies: count });
    }
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let total = count as usize;
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut actions = vec![0usize; n];
        for slot in actions.iter_mut() {
            *slot = code % na;
            code /= na;
        }
        out.push(Policy::from_actions(actions));
    }
    Ok(out)
}

/// Brute-force optimal gain: `max_pi min_s g_pi(s)` over all deterministic
/// policies. On weakly communicating MDPs this equals the constant optimal
/// gain; it is the independent check for [`exact_anchored_vi`].
pub fn brute_force_optimal_gain(mdp: &TabularMdp) -> Result<f64, OracleError> {
    let mut best = f64::NEG_INFINITY;
    for policy in all_policies(mdp)? {
        let g = policy_gain(mdp, &policy)?;
        let worst = g.values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        best = best.max(worst);
    }
    Ok(best)
}
