//! Seeded generative-model access to a tabular MDP, with exact sample
//! accounting.
//!
//! Every draw comes from a counter-style substream derived from
//! `(master_seed, state, action, iteration, loop_index)`, so the output is a
//! pure function of the seed and the key: independent of thread scheduling,
//! and restart loops get fresh independent randomness by bumping the loop
//! index. The cumulative draw counter is exact.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::mdp::{QTable, TabularMdp, ValueVector};

/// Batch sizes up to this limit are averaged draw by draw; larger batches
/// draw the multinomial visit counts directly (binomial chain), which has
/// identical law and O(row support) cost instead of O(m).
const PER_DRAW_LIMIT: u64 = 128;

/// Domain separators for substream derivation.
const TAG_SAMPLE: u64 = 0x53414d504c45; // per-(s,a) estimation streams
const TAG_TRAJECTORY: u64 = 0x5452414a; // trajectory simulation streams

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("value vector has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// Addresses one sampling substream: the `(s,a)` pair being queried, the
/// solver iteration `k`, and the restart-loop index `i` (0 when unused).
/// Distinct keys yield statistically independent substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStreamKey {
    pub state: usize,
    pub action: usize,
    pub iteration: usize,
    pub loop_index: u64,
}

/// Sampling facade over a [`TabularMdp`]: next-state draws, batched increment
/// estimation, and an exact cumulative draw counter.
pub struct GenerativeModel<'a> {
    mdp: &'a TabularMdp,
    master_seed: u64,
    // Per-(s,a) compacted support: (cumulative probability, next state),
    // with the final cumulative forced to exactly 1.0.
    support: Vec<(f64, u32)>,
    offsets: Vec<u32>,
    draws: AtomicU64,
}

impl<'a> GenerativeModel<'a> {
    pub fn new(mdp: &'a TabularMdp, master_seed: u64) -> Self {
        let ns = mdp.n_states();
        let na = mdp.n_actions();
        let mut support = Vec::new();
        let mut offsets = Vec::with_capacity(ns * na + 1);
        offsets.push(0);
        for s in 0..ns {
            for a in 0..na {
                let mut cum = 0.0;
                for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        cum += p;
                        support.push((cum, s2 as u32));
                    }
                }
                // Row sums are 1 within tolerance; pin the last boundary so
                // every u in [0,1) lands inside the support.
                support
                    .last_mut()
                    .expect("stochastic row has nonempty support")
                    .0 = 1.0;
                offsets.push(support.len() as u32);
            }
        }
        GenerativeModel {
            mdp,
            master_seed,
            support,
            offsets,
            draws: AtomicU64::new(0),
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Exact number of next-state draws since construction or the last reset.
    pub fn total_samples(&self) -> u64 {
        self.draws.load(Ordering::Relaxed)
    }

    pub fn reset_samples(&self) {
        self.draws.store(0, Ordering::Relaxed);
    }

    fn count_draws(&self, n: u64) {
        let prev = self.draws.fetch_add(n, Ordering::Relaxed);
        assert!(
            prev.checked_add(n).is_some(),
            "sample counter overflowed 64 bits"
        );
    }

    fn row_support(&self, state: usize, action: usize) -> &[(f64, u32)] {
        let i = state * self.mdp.n_actions() + action;
        &self.support[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    fn substream(&self, key: &SampleStreamKey) -> ChaCha8Rng {
        stream_from(
            self.master_seed,
            TAG_SAMPLE,
            key.state as u64,
            key.action as u64,
            key.iteration as u64,
            key.loop_index,
        )
    }

    /// Draw `j` of the substream named by `key`: a next state distributed as
    /// `P(.|key.state, key.action)`. Deterministic in `(master_seed, key, j)`;
    /// draw `j` always reads words `2j, 2j+1` of the substream, which is also
    /// how the per-draw path of [`sample_matrix`] consumes it sequentially.
    ///
    /// # Panics
    /// If the key indexes an invalid state or action.
    ///
    /// [`sample_matrix`]: Self::sample_matrix
    pub fn next_state(&self, key: &SampleStreamKey, j: u64) -> usize {
        assert!(
            key.state < self.mdp.n_states() && key.action < self.mdp.n_actions(),
            "invalid (state, action) = ({}, {})",
            key.state,
            key.action
        );
        self.count_draws(1);
        let support = self.row_support(key.state, key.action);
        if support.len() == 1 {
            return support[0].1 as usize;
        }
        let mut rng = self.substream(key);
        rng.set_word_pos(2u128 * j as u128);
        pick(support, uniform_unit(&mut rng)) as usize
    }

    /// Estimates `(P d)(s,a)` for every pair by averaging `d` over `m`
    /// independent next-state draws per pair, drawing `|S||A| * m` samples in
    /// total. The output satisfies `sp(D) <= sp(d)` and
    /// `||D||_inf <= ||d||_inf` exactly: each entry is clamped to the range
    /// of `d` over the states actually visited, which is where the exact mean
    /// lies; the clamp only removes accumulation dust.
    pub fn sample_matrix(
        &self,
        d: &ValueVector,
        m: u64,
        iteration: usize,
        loop_index: u64,
    ) -> Result<QTable, SampleError> {
        if m == 0 {
            return Err(SampleError::ZeroBatch);
        }
        let ns = self.mdp.n_states();
        let na = self.mdp.n_actions();
        if d.len() != ns {
            return Err(SampleError::WrongLength {
                expected: ns,
                got: d.len(),
            });
        }
        let mut values = Vec::with_capacity(ns * na);
        for state in 0..ns {
            for action in 0..na {
                let key = SampleStreamKey {
                    state,
                    action,
                    iteration,
                    loop_index,
                };
                values.push(self.sample_mean(&key, d, m));
            }
        }
        let total = ((ns * na) as u64)
            .checked_mul(m)
            .expect("sample count overflowed 64 bits");
        self.count_draws(total);
        Ok(QTable::from_values(ns, na, values))
    }

    fn sample_mean(&self, key: &SampleStreamKey, d: &ValueVector, m: u64) -> f64 {
        let support = self.row_support(key.state, key.action);
        if support.len() == 1 {
            // Point-mass row: the mean of m identical draws, exactly.
            return d.get(support[0].1 as usize);
        }
        let mut rng = self.substream(key);
        let mut acc = 0.0f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        if m <= PER_DRAW_LIMIT {
            for _ in 0..m {
                let dv = d.get(pick(support, uniform_unit(&mut rng)) as usize);
                acc += dv;
                lo = lo.min(dv);
                hi = hi.max(dv);
            }
        } else {
            // Multinomial visit counts via a binomial chain: identical in law
            // to m sequential draws, O(support) instead of O(m).
            let mut remaining = m;
            let mut rem_p = 1.0f64;
            let mut prev_cum = 0.0f64;
            let last = support.len() - 1;
            for (idx, &(cum, state)) in support.iter().enumerate() {
                let p = cum - prev_cum;
                prev_cum = cum;
                let visits = if idx == last {
                    remaining
                } else if remaining == 0 {
                    0
                } else {
                    let q = (p / rem_p).clamp(0.0, 1.0);
                    Binomial::new(remaining, q)
                        .expect("binomial parameters are valid")
                        .sample(&mut rng)
                };
                rem_p -= p;
                if visits > 0 {
                    let dv = d.get(state as usize);
                    acc += visits as f64 * dv;
                    lo = lo.min(dv);
                    hi = hi.max(dv);
                    remaining -= visits;
                }
            }
        }
        (acc / m as f64).clamp(lo, hi)
    }

    /// A dedicated stream for simulating one trajectory; namespaced away from
    /// the estimation streams so oracle simulations never collide with solver
    /// sampling on the same model.
    pub fn trajectory_rng(&self, seed: u64, start_state: usize) -> ChaCha8Rng {
        stream_from(
            self.master_seed,
            TAG_TRAJECTORY,
            seed,
            start_state as u64,
            0,
            0,
        )
    }

    /// One sequential next-state draw from `rng`; counts one sample.
    pub fn sample_next(&self, rng: &mut ChaCha8Rng, state: usize, action: usize) -> usize {
        assert!(
            state < self.mdp.n_states() && action < self.mdp.n_actions(),
            "invalid (state, action) = ({state}, {action})"
        );
        self.count_draws(1);
        let support = self.row_support(state, action);
        if support.len() == 1 {
            return support[0].1 as usize;
        }
        pick(support, uniform_unit(rng)) as usize
    }
}

#[inline]
fn uniform_unit(rng: &mut ChaCha8Rng) -> f64 {
    // 53 mantissa bits -> uniform on [0, 1).
    ((rng.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn pick(support: &[(f64, u32)], u: f64) -> u32 {
    // State i owns [cum_{i-1}, cum_i); the final boundary is exactly 1.0, so
    // u in [0,1) always lands inside.
    let idx = support.partition_point(|&(c, _)| c <= u);
    support[idx.min(support.len() - 1)].1
}

/// SplitMix-style key mixing: derives a 256-bit ChaCha seed from the master
/// seed, a domain tag, and four key words.
fn stream_from(master: u64, tag: u64, a: u64, b: u64, c: u64, d: u64) -> ChaCha8Rng {
    const PHI: u64 = 0x9E3779B97F4A7C15;
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    let mut state = mix(master.wrapping_add(PHI));
    for v in [tag, a, b, c, d] {
        state = mix(state ^ mix(v.wrapping_add(PHI)));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        state = state.wrapping_add(PHI.wrapping_mul(i as u64 + 1));
        chunk.copy_from_slice(&mix(state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
