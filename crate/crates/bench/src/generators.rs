//! Benchmark MDP families: deterministic cycles, RiverSwim, and random
//! Garnet instances. Everything here is weakly communicating by
//! construction, so the average-reward solvers and oracles apply.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use savia_core::mdp::{MdpError, TabularMdp};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("cycle needs at least 1 state, got {0}")]
    CycleTooSmall(usize),
    #[error("riverswim needs at least 2 states, got {0}")]
    RiverSwimTooSmall(usize),
    #[error("branching must lie in 1..={max}, got {got}")]
    BadBranching { got: usize, max: usize },
    #[error(transparent)]
    Invalid(#[from] MdpError),
}

/// Single-action deterministic cycle `s -> s+1 mod n` with reward 1 on the
/// last state; optimal gain 1/n.
pub fn gen_cycle(n_states: usize) -> Result<TabularMdp, GenError> {
    if n_states == 0 {
        return Err(GenError::CycleTooSmall(n_states));
    }
    let n = n_states;
    let mut t = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for s in 0..n {
        t[s * n + (s + 1) % n] = 1.0;
    }
    r[n - 1] = 1.0;
    Ok(TabularMdp::new(n, 1, t, r)?)
}

/// RiverSwim chain: action 0 (left) moves one step left deterministically,
/// action 1 (right) advances with probability 0.3, stays with 0.6, and slips
/// left with 0.1, folding the impossible moves into "stay" at the banks.
/// Reward 0.005 for holding the left bank, 1 for pushing at the right bank.
pub fn gen_river_swim(n_states: usize) -> Result<TabularMdp, GenError> {
    if n_states < 2 {
        return Err(GenError::RiverSwimTooSmall(n_states));
    }
    let n = n_states;
    let na = 2;
    let mut t = vec![0.0; n * na * n];
    let mut r = vec![0.0; n * na];
    let mut set = |s: usize, a: usize, s2: usize, p: f64| {
        t[(s * na + a) * n + s2] += p;
    };
    for s in 0..n {
        // left
        set(s, 0, s.saturating_sub(1), 1.0);
        // right
        let up = if s + 1 < n { s + 1 } else { s };
        let down = s.saturating_sub(1);
        set(s, 1, up, 0.3);
        set(s, 1, s, 0.6);
        set(s, 1, down, 0.1);
    }
    r[0] = 0.005; // (leftmost, left)
    r[(n - 1) * na + 1] = 1.0; // (rightmost, right)
    Ok(TabularMdp::new(n, na, t, r)?)
}

/// Random Garnet instance: every `(s,a)` row puts normalised uniform weights
/// on `branching` distinct next states, blended with 5% probability mass on
/// the deterministic cycle edge `s -> s+1 mod n` so that every policy's
/// chain is irreducible (hence the MDP is weakly communicating). Rewards are
/// iid uniform on [0,1]. Identical seeds produce identical instances.
pub fn gen_garnet(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    seed: u64,
) -> Result<TabularMdp, GenError> {
    if n_states == 0 || n_actions == 0 {
        return Err(GenError::Invalid(MdpError::EmptySpace));
    }
    if branching == 0 || branching > n_states {
        return Err(GenError::BadBranching {
            got: branching,
            max: n_states,
        });
    }
    const CYCLE_MASS: f64 = 0.05;
    let n = n_states;
    let na = n_actions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = move || ((rng.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64);

    let mut t = vec![0.0; n * na * n];
    let mut r = vec![0.0; n * na];
    let mut pool: Vec<usize> = (0..n).collect();
    for s in 0..n {
        for a in 0..na {
            // Partial Fisher-Yates draw of `branching` distinct targets.
            for i in 0..branching {
                let j = i + ((uniform() * (n - i) as f64) as usize).min(n - i - 1);
                pool.swap(i, j);
            }
            let mut weights: Vec<f64> = (0..branching).map(|_| uniform()).collect();
            let sum: f64 = weights.iter().sum();
            if sum == 0.0 {
                weights = vec![1.0 / branching as f64; branching];
            } else {
                for w in weights.iter_mut() {
                    *w /= sum;
                }
            }
            let row = &mut t[(s * na + a) * n..(s * na + a + 1) * n];
            for (i, &target) in pool[..branching].iter().enumerate() {
                row[target] += (1.0 - CYCLE_MASS) * weights[i];
            }
            row[(s + 1) % n] += CYCLE_MASS;
            r[s * na + a] = uniform();
        }
    }
    Ok(TabularMdp::new(n, na, t, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use savia_core::mdp::{Policy, QTable};
    use savia_core::oracle::{brute_force_optimal_gain, exact_anchored_vi, policy_gain};

    #[test]
    fn cycle_gains_match_the_oracle() {
        for n in [1usize, 2, 4] {
            let mdp = gen_cycle(n).unwrap();
            let sol =
                exact_anchored_vi(&mdp, &QTable::zeros(n, 1), 1e-10, 1_000_000).unwrap();
            assert!((sol.gain - 1.0 / n as f64).abs() < 1e-9, "n = {n}");
        }
        assert!(gen_cycle(0).is_err());
    }

    #[test]
    fn riverswim_is_valid_and_left_policy_earns_the_small_reward() {
        let mdp = gen_river_swim(6).unwrap();
        assert!(mdp.validate().is_ok());

        // Always-left absorbs at the left bank from every start.
        let left = Policy::from_actions(vec![0; 6]);
        let g = policy_gain(&mdp, &left).unwrap();
        for s in 0..6 {
            assert!((g.get(s) - 0.005).abs() < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn riverswim_optimum_beats_the_left_bank() {
        let mdp = gen_river_swim(6).unwrap();
        let best = brute_force_optimal_gain(&mdp).unwrap();
        assert!(best > 0.005, "optimal gain {best}");
    }

    #[test]
    fn garnet_rows_are_valid_and_seed_deterministic() {
        for seed in 0..20u64 {
            let a = gen_garnet(8, 3, 2, seed).unwrap();
            assert!(a.validate().is_ok());
            let b = gen_garnet(8, 3, 2, seed).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(gen_garnet(8, 3, 2, 0).unwrap(), gen_garnet(8, 3, 2, 1).unwrap());
        assert!(gen_garnet(4, 2, 0, 0).is_err());
        assert!(gen_garnet(4, 2, 5, 0).is_err());
    }

    #[test]
    fn garnet_instances_are_weakly_communicating_in_practice() {
        // The blended cycle guarantees irreducibility; the gain oracle must
        // converge to a tight residual on every seed.
        for seed in 0..20u64 {
            let mdp = gen_garnet(8, 3, 2, seed).unwrap();
            let sol = exact_anchored_vi(&mdp, &QTable::zeros(8, 3), 1e-9, 10_000_000)
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(sol.residual_span <= 1e-9);
        }
    }
}
