//! Tabular-MDP solvers built on anchored (Halpern) value iteration with
//! recursive sampling, for both average-reward and discounted objectives,
//! together with the exact dynamic-programming oracles used to verify them.
//!
//! The crate is organised around a dense [`mdp::TabularMdp`] model:
//!
//! * [`mdp`]: core types ([`mdp::QTable`], [`mdp::ValueVector`],
//!   [`mdp::Policy`]) and the exact Bellman operators.
//! * [`norms`]: span seminorm and infinity norm.
//! * [`io`]: a line-oriented text format for MDPs.
//! * [`sampling`]: a seeded generative model with exact sample accounting.
//! * [`schedule`]: the anchoring/batch-size schedules shared by all solvers.
//! * [`average`]: SAVIA and SAVIA+ for weakly communicating average-reward
//!   MDPs, plus the exact-operator anchored iteration.
//! * [`discounted`]: SAVID and SAVID+ for discounted MDPs.
//! * [`oracle`]: ground-truth solvers (optimal gain/bias, discounted fixed
//!   points, chain decomposition, policy evaluation, Monte-Carlo gains).

pub mod average;
pub mod discounted;
pub mod io;
pub mod mdp;
pub mod norms;
pub mod oracle;
pub mod sampling;
pub mod schedule;
pub mod trace;

pub use mdp::{DiscountedParams, Policy, QTable, TabularMdp, ValueVector};
pub use sampling::{GenerativeModel, SampleStreamKey};
pub use schedule::Schedule;
