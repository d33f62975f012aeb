//! Multi-trial experiment runner: resolves an MDP source, runs independent
//! seeded trials (optionally verified against the exact oracles), and emits
//! the per-trial CSV plus a summary file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use savia_core::average::{savia_plus_with, savia_with, RunOptions, SaviaParams, DEFAULT_MAX_LOOPS};
use savia_core::discounted::{savid_plus_with, savid_with, SavidParams};
use savia_core::io;
use savia_core::mdp::{DiscountedParams, Policy, QTable, TabularMdp};
use savia_core::oracle::{
    discounted_policy_q, discounted_vi, exact_anchored_vi, policy_gain, GainBiasSolution,
};
use savia_core::sampling::GenerativeModel;
use savia_core::schedule::Schedule;
use savia_core::average::exact_savia;

use crate::csvio::{self, CsvRow};
use crate::generators;

use savia_core::oracle::{DEFAULT_MAX_ITER as ORACLE_MAX_ITER, DEFAULT_TOL_SPAN as ORACLE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Savia,
    SaviaPlus,
    Savid,
    SavidPlus,
    ExactAncVi,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Savia => "savia",
            SolverKind::SaviaPlus => "savia_plus",
            SolverKind::Savid => "savid",
            SolverKind::SavidPlus => "savid_plus",
            SolverKind::ExactAncVi => "exact_anc_vi",
        }
    }

    pub fn is_discounted(&self) -> bool {
        matches!(self, SolverKind::Savid | SolverKind::SavidPlus)
    }

    pub fn needs_n(&self) -> bool {
        matches!(self, SolverKind::Savia | SolverKind::Savid | SolverKind::ExactAncVi)
    }
}

impl std::str::FromStr for SolverKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "savia" => Ok(SolverKind::Savia),
            "savia_plus" | "savia-plus" => Ok(SolverKind::SaviaPlus),
            "savid" => Ok(SolverKind::Savid),
            "savid_plus" | "savid-plus" => Ok(SolverKind::SavidPlus),
            "exact_anc_vi" | "exact" => Ok(SolverKind::ExactAncVi),
            other => Err(HarnessError::BadValue {
                key: "solver",
                value: other.to_string(),
            }),
        }
    }
}

/// Where the benchmark MDP comes from: a file or a generator string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MdpSource {
    File(PathBuf),
    Cycle(usize),
    RiverSwim(usize),
    Garnet {
        states: usize,
        actions: usize,
        branching: usize,
        seed: u64,
    },
}

impl fmt::Display for MdpSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpSource::File(p) => write!(f, "file:{}", p.display()),
            MdpSource::Cycle(n) => write!(f, "cycle:{n}"),
            MdpSource::RiverSwim(n) => write!(f, "riverswim:{n}"),
            MdpSource::Garnet {
                states,
                actions,
                branching,
                seed,
            } => write!(f, "garnet:{states},{actions},{branching},{seed}"),
        }
    }
}

impl std::str::FromStr for MdpSource {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        let bad = || HarnessError::BadValue {
            key: "mdp",
            value: s.to_string(),
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "file" => Ok(MdpSource::File(PathBuf::from(rest))),
            "cycle" => Ok(MdpSource::Cycle(rest.parse().map_err(|_| bad())?)),
            "riverswim" => Ok(MdpSource::RiverSwim(rest.parse().map_err(|_| bad())?)),
            "garnet" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 4 {
                    return Err(bad());
                }
                Ok(MdpSource::Garnet {
                    states: parts[0].parse().map_err(|_| bad())?,
                    actions: parts[1].parse().map_err(|_| bad())?,
                    branching: parts[2].parse().map_err(|_| bad())?,
                    seed: parts[3].parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("missing config key `{0}`")]
    MissingKey(&'static str),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: &'static str, value: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {0} is not `key = value`")]
    BadLine(usize),
    #[error("solver {0} requires `n`")]
    NeedsN(&'static str),
    #[error("solver {0} requires `gamma`")]
    NeedsGamma(&'static str),
    #[error(transparent)]
    Gen(#[from] generators::GenError),
    #[error(transparent)]
    MdpFile(#[from] io::MdpFileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("oracle failed: {0}")]
    Oracle(String),
}

/// Full description of one experiment: solver, instance, accuracy knobs,
/// trial count and seeding, oracle verification, and output paths.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub solver: SolverKind,
    pub mdp: MdpSource,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    pub n: Option<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub oracle_mode: bool,
    pub output: Option<PathBuf>,
    pub max_loops: usize,
}

impl ExperimentConfig {
    /// Parses the line-oriented `key = value` format (# starts a comment).
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut solver = None;
        let mut mdp = None;
        let mut epsilon = None;
        let mut delta = None;
        let mut gamma = None;
        let mut n = None;
        let mut trials = 1usize;
        let mut master_seed = 0u64;
        let mut oracle_mode = false;
        let mut output = None;
        let mut max_loops = DEFAULT_MAX_LOOPS;

        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(HarnessError::BadLine(idx + 1))?;
            let key = key.trim();
            let value = value.trim();
            fn num<T: std::str::FromStr>(
                key: &'static str,
                value: &str,
            ) -> Result<T, HarnessError> {
                value.parse().map_err(|_| HarnessError::BadValue {
                    key,
                    value: value.to_string(),
                })
            }
            match key {
                "solver" => solver = Some(value.parse::<SolverKind>()?),
                "mdp" => mdp = Some(value.parse::<MdpSource>()?),
                "epsilon" => epsilon = Some(num::<f64>("epsilon", value)?),
                "delta" => delta = Some(num::<f64>("delta", value)?),
                "gamma" => gamma = Some(num::<f64>("gamma", value)?),
                "n" => n = Some(num::<usize>("n", value)?),
                "trials" => trials = num::<usize>("trials", value)?,
                "master_seed" => master_seed = num::<u64>("master_seed", value)?,
                "oracle_mode" => {
                    oracle_mode = match value {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => {
                            return Err(HarnessError::BadValue {
                                key: "oracle_mode",
                                value: value.to_string(),
                            })
                        }
                    }
                }
                "output" => output = Some(PathBuf::from(value)),
                "max_loops" => max_loops = num::<usize>("max_loops", value)?,
                other => return Err(HarnessError::UnknownKey(other.to_string())),
            }
        }

        let config = ExperimentConfig {
            solver: solver.ok_or(HarnessError::MissingKey("solver"))?,
            mdp: mdp.ok_or(HarnessError::MissingKey("mdp"))?,
            epsilon: epsilon.ok_or(HarnessError::MissingKey("epsilon"))?,
            delta: delta.ok_or(HarnessError::MissingKey("delta"))?,
            gamma,
            n,
            trials,
            master_seed,
            oracle_mode,
            output,
            max_loops,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::BadValue {
                key: "trials",
                value: "0".into(),
            });
        }
        if self.solver.needs_n() && self.n.is_none() {
            return Err(HarnessError::NeedsN(self.solver.as_str()));
        }
        if self.solver.is_discounted() && self.gamma.is_none() {
            return Err(HarnessError::NeedsGamma(self.solver.as_str()));
        }
        Ok(())
    }
}

pub fn resolve_mdp(source: &MdpSource) -> Result<TabularMdp, HarnessError> {
    Ok(match source {
        MdpSource::File(path) => io::read_mdp(path)?,
        MdpSource::Cycle(n) => generators::gen_cycle(*n)?,
        MdpSource::RiverSwim(n) => generators::gen_river_swim(*n)?,
        MdpSource::Garnet {
            states,
            actions,
            branching,
            seed,
        } => generators::gen_garnet(*states, *actions, *branching, *seed)?,
    })
}

/// Ground truth computed once per experiment in oracle mode.
enum OracleRef {
    Average(GainBiasSolution),
    Discounted { q_star: QTable },
}

pub struct ExperimentOutcome {
    pub rows: Vec<CsvRow>,
    /// `(trial index, error message)` for trials that failed.
    pub errors: Vec<(usize, String)>,
    pub summary: csvio::Summary,
}

/// Runs `trials` independent seeded trials (trial `t` is seeded with
/// `master_seed + t`) in a work pool; rows come back ordered by trial index
/// regardless of completion order. Per-trial failures are recorded and the
/// remaining trials continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let mdp = resolve_mdp(&config.mdp)?;
    let oracle = if config.oracle_mode {
        Some(compute_oracle(&mdp, config)?)
    } else {
        None
    };

    let outcomes: Vec<Result<CsvRow, String>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(&mdp, config, oracle.as_ref(), trial).map_err(|e| e.to_string()))
        .collect();

    let mut rows = Vec::with_capacity(config.trials);
    let mut errors = Vec::new();
    for (trial, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(row) => rows.push(row),
            Err(msg) => errors.push((trial, msg)),
        }
    }
    let summary = csvio::summarize(&rows);

    if let Some(path) = &config.output {
        std::fs::write(path, csvio::format_rows(&rows))?;
        let summary_text = csvio::format_summary(
            config.solver.as_str(),
            config.epsilon,
            config.delta,
            config.gamma,
            &summary,
        );
        std::fs::write(summary_path(path), summary_text)?;
    }

    Ok(ExperimentOutcome {
        rows,
        errors,
        summary,
    })
}

pub fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".summary.csv");
    csv_path.with_file_name(name)
}

fn compute_oracle(mdp: &TabularMdp, config: &ExperimentConfig) -> Result<OracleRef, HarnessError> {
    if config.solver.is_discounted() {
        let gamma = config.gamma.expect("validated");
        Ok(OracleRef::Discounted {
            q_star: discounted_vi(mdp, gamma, ORACLE_TOL),
        })
    } else {
        let q0 = QTable::zeros(mdp.n_states(), mdp.n_actions());
        let solution = exact_anchored_vi(mdp, &q0, ORACLE_TOL, ORACLE_MAX_ITER)
            .map_err(|e| HarnessError::Oracle(e.to_string()))?;
        Ok(OracleRef::Average(solution))
    }
}

fn run_trial(
    mdp: &TabularMdp,
    config: &ExperimentConfig,
    oracle: Option<&OracleRef>,
    trial: usize,
) -> Result<CsvRow, String> {
    let seed = config.master_seed.wrapping_add(trial as u64);
    let model = GenerativeModel::new(mdp, seed);
    let schedule = Schedule;
    let q0 = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let exact_reference = if config.oracle_mode { Some(mdp) } else { None };
    let opts = RunOptions {
        loop_index: 0,
        exact_reference,
    };
    let start = Instant::now();

    let (q, policy, n_or_n, loops_i, total_samples, empirical_residual) = match config.solver {
        SolverKind::Savia => {
            let params = SaviaParams {
                q0,
                n: config.n.expect("validated"),
                epsilon: config.epsilon,
                delta: config.delta,
            };
            let out = savia_with(&model, &params, &schedule, &opts).map_err(|e| e.to_string())?;
            let emp = out.trace.last().empirical_residual;
            (
                out.q,
                out.policy,
                params.n as u64,
                0u64,
                model.total_samples(),
                emp,
            )
        }
        SolverKind::SaviaPlus => {
            let out = savia_plus_with(
                &model,
                &q0,
                config.epsilon,
                config.delta,
                &schedule,
                config.max_loops,
                exact_reference,
            )
            .map_err(|e| e.to_string())?;
            let emp = out.output.trace.last().empirical_residual;
            (
                out.output.q,
                out.output.policy,
                out.n_final,
                out.stop_loop as u64,
                out.total_samples,
                emp,
            )
        }
        SolverKind::Savid => {
            let params = SavidParams {
                q0,
                n: config.n.expect("validated"),
                epsilon: config.epsilon,
                delta: config.delta,
                gamma: config.gamma.expect("validated"),
            };
            let out = savid_with(&model, &params, &schedule, &opts).map_err(|e| e.to_string())?;
            let emp = out.trace.last().empirical_residual;
            (
                out.q,
                out.policy,
                params.n as u64,
                0u64,
                model.total_samples(),
                emp,
            )
        }
        SolverKind::SavidPlus => {
            let out = savid_plus_with(
                &model,
                &q0,
                config.epsilon,
                config.delta,
                config.gamma.expect("validated"),
                &schedule,
                config.max_loops,
                exact_reference,
            )
            .map_err(|e| e.to_string())?;
            let emp = out.output.trace.last().empirical_residual;
            (
                out.output.q,
                out.output.policy,
                out.n_final,
                out.stop_loop as u64,
                out.total_samples,
                emp,
            )
        }
        SolverKind::ExactAncVi => {
            let n = config.n.expect("validated");
            let out = exact_savia(mdp, &q0, n, &schedule);
            let emp = *out.residuals.last().expect("nonempty residuals");
            (out.q, out.policy, n as u64, 0u64, 0u64, emp)
        }
    };

    let (true_residual, policy_gap) = match oracle {
        None => (None, None),
        Some(OracleRef::Average(solution)) => {
            let residual = mdp.apply_bellman(&q).sub(&q).span();
            let gap = average_policy_gap(mdp, &policy, solution.gain)?;
            (Some(residual), Some(gap))
        }
        Some(OracleRef::Discounted { q_star }) => {
            let gamma = config.gamma.expect("validated");
            let params = DiscountedParams::new(gamma).map_err(|e| e.to_string())?;
            let residual = mdp.apply_bellman_discounted(&q, &params).sub(&q).inf_norm();
            let q_pi = discounted_policy_q(mdp, &policy, gamma).map_err(|e| e.to_string())?;
            (Some(residual), Some(q_star.sub(&q_pi).inf_norm()))
        }
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    Ok(CsvRow {
        schema_version: csvio::SCHEMA_VERSION,
        trial: trial as u64,
        seed,
        algo: config.solver.as_str().to_string(),
        epsilon: config.epsilon,
        delta: config.delta,
        gamma: config.gamma,
        n_or_n,
        loops_i,
        total_samples,
        empirical_residual,
        true_residual,
        policy_gap,
        wall_time_ms,
    })
}

fn average_policy_gap(mdp: &TabularMdp, policy: &Policy, gain: f64) -> Result<f64, String> {
    let g = policy_gain(mdp, policy).map_err(|e| e.to_string())?;
    let gap = g
        .values()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(gain - v));
    // The true gap is nonnegative; sub-tolerance negatives are oracle noise.
    Ok(gap.max(0.0))
}
