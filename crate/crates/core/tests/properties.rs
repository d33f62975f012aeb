//! Property tests for the operator and sampling invariants.

use proptest::prelude::*;

use savia_core::mdp::{DiscountedParams, QTable, TabularMdp, ValueVector};
use savia_core::norms;
use savia_core::sampling::GenerativeModel;

/// Vector entries drawn from a dyadic grid so additive shifts are exact in
/// floating point.
fn grid_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-40i32..=40).prop_map(|k| k as f64 / 8.0), len)
}

fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..12)
}

/// A random stochastic MDP with `ns` states and `na` actions; rows are
/// normalised positive weights.
fn arb_mdp(ns: usize, na: usize) -> impl Strategy<Value = TabularMdp> {
    let rows = prop::collection::vec(0.01f64..1.0, ns * na * ns);
    let rewards = prop::collection::vec(-2.0f64..2.0, ns * na);
    (rows, rewards).prop_map(move |(raw, rewards)| {
        let mut transitions = raw;
        for row in transitions.chunks_exact_mut(ns) {
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        TabularMdp::new(ns, na, transitions, rewards).unwrap()
    })
}

proptest! {
    #[test]
    fn span_is_a_seminorm(v in arb_vec(), w in arb_vec(), c in -50.0f64..50.0) {
        let n = v.len().min(w.len());
        let v = &v[..n];
        let w = &w[..n];
        let sum: Vec<f64> = v.iter().zip(w).map(|(a, b)| a + b).collect();
        let sp = |xs: &[f64]| norms::span(xs).unwrap();
        // Triangle inequality.
        prop_assert!(sp(&sum) <= sp(v) + sp(w) + 1e-12);
        // Absolute homogeneity.
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        prop_assert!((sp(&scaled) - c.abs() * sp(v)).abs() <= 1e-9);
        // Invariance under constant shifts.
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!((sp(&shifted) - sp(v)).abs() <= 1e-9);
        // sp(.) <= 2 ||.||_inf
        prop_assert!(sp(v) <= 2.0 * norms::inf_norm(v).unwrap());
    }

    #[test]
    fn bellman_is_span_nonexpansive(
        mdp in arb_mdp(4, 2),
        a in prop::collection::vec(-10.0f64..10.0, 8),
        b in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        let qa = QTable::from_values(4, 2, a);
        let qb = QTable::from_values(4, 2, b);
        let lhs = mdp.apply_bellman(&qa).sub(&mdp.apply_bellman(&qb)).span();
        let rhs = qa.sub(&qb).span();
        prop_assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
    }

    #[test]
    fn discounted_bellman_is_a_contraction(
        mdp in arb_mdp(3, 2),
        a in prop::collection::vec(-10.0f64..10.0, 6),
        b in prop::collection::vec(-10.0f64..10.0, 6),
        gamma in 0.05f64..0.99,
    ) {
        let p = DiscountedParams::new(gamma).unwrap();
        let qa = QTable::from_values(3, 2, a);
        let qb = QTable::from_values(3, 2, b);
        let lhs = mdp
            .apply_bellman_discounted(&qa, &p)
            .sub(&mdp.apply_bellman_discounted(&qb, &p))
            .inf_norm();
        let rhs = gamma * qa.sub(&qb).inf_norm();
        prop_assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
    }

    #[test]
    fn bellman_is_additively_homogeneous(
        mdp in arb_mdp(3, 2),
        q in grid_vec(6),
        c in (-40i32..=40).prop_map(|k| k as f64 / 8.0),
    ) {
        let q = QTable::from_values(3, 2, q);
        let lhs = mdp.apply_bellman(&q.shift(c));
        let rhs = mdp.apply_bellman(&q).shift(c);
        prop_assert!(lhs.sub(&rhs).inf_norm() <= 1e-10);
    }

    #[test]
    fn greedy_policy_ignores_constant_shifts(
        q in grid_vec(12),
        c in (-1000i32..=1000).prop_map(|k| k as f64 / 8.0),
    ) {
        // Dyadic grid keeps the shift exact, so invariance must be exact.
        let q = QTable::from_values(4, 3, q);
        prop_assert_eq!(q.greedy_policy(), q.shift(c).greedy_policy());
    }

    #[test]
    fn sampled_means_respect_span_and_inf_bounds(
        mdp in arb_mdp(4, 2),
        d in prop::collection::vec(-5.0f64..5.0, 4),
        m in 1u64..400,
        seed in 0u64..1000,
    ) {
        // Covers both the per-draw and the multinomial batch paths.
        let model = GenerativeModel::new(&mdp, seed);
        let d = ValueVector::from_values(d);
        let out = model.sample_matrix(&d, m, 0, 0).unwrap();
        prop_assert!(out.span() <= d.span());
        prop_assert!(out.inf_norm() <= d.inf_norm());
        prop_assert_eq!(model.total_samples(), 8 * m);
    }
}
