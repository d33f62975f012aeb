use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use savia_bench::experiment::{run_experiment, ExperimentConfig, MdpSource, SolverKind};
use savia_bench::generators;
use savia_core::io;
use savia_core::mdp::QTable;
use savia_core::oracle::{discounted_vi, exact_anchored_vi};

#[derive(Parser)]
#[command(
    name = "savia-bench",
    about = "Generate benchmark MDPs, run anchored stochastic value iteration solvers, \
             and verify them against exact oracles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark MDP and write it as a text file.
    Gen {
        /// Instance family: cycle | riverswim | garnet
        #[arg(long)]
        family: String,
        #[arg(long)]
        states: usize,
        /// Garnet only: number of actions.
        #[arg(long)]
        actions: Option<usize>,
        /// Garnet only: nonzero next-states per row before blending.
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an average-reward MDP (single seeded run).
    SolveAvg {
        #[arg(long)]
        mdp: PathBuf,
        /// savia | savia-plus | exact
        #[arg(long)]
        algo: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Iteration count for the fixed-length solvers.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute true residuals and policy gaps from the exact oracle.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve a discounted MDP (single seeded run).
    SolveDisc {
        #[arg(long)]
        mdp: PathBuf,
        /// savid | savid-plus
        #[arg(long)]
        algo: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a multi-trial experiment described by a `key = value` config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print ground-truth values for an MDP file.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        /// Solve the discounted problem instead of the average-reward one.
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn main() -> ExitCode {
    // Die quietly when the output pipe closes (e.g. `savia-bench oracle | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            family,
            states,
            actions,
            branching,
            seed,
            out,
        } => {
            let mdp = match family.as_str() {
                "cycle" => generators::gen_cycle(states)?,
                "riverswim" => generators::gen_river_swim(states)?,
                "garnet" => {
                    let actions =
                        actions.context("garnet needs --actions")?;
                    let branching =
                        branching.context("garnet needs --branching")?;
                    generators::gen_garnet(states, actions, branching, seed)?
                }
                other => bail!("unknown family `{other}` (expected cycle|riverswim|garnet)"),
            };
            io::write_mdp(&out, &mdp)?;
            println!(
                "wrote {} ({} states, {} actions)",
                out.display(),
                mdp.n_states(),
                mdp.n_actions()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::SolveAvg {
            mdp,
            algo,
            epsilon,
            delta,
            n,
            seed,
            oracle,
            csv,
        } => {
            let solver: SolverKind = algo.parse()?;
            if solver.is_discounted() {
                bail!("`{algo}` is a discounted solver; use solve-disc");
            }
            run_single(ExperimentConfig {
                solver,
                mdp: MdpSource::File(mdp),
                epsilon,
                delta,
                gamma: None,
                n,
                trials: 1,
                master_seed: seed,
                oracle_mode: oracle,
                output: csv,
                max_loops: savia_core::average::DEFAULT_MAX_LOOPS,
            })
        }
        Command::SolveDisc {
            mdp,
            algo,
            gamma,
            epsilon,
            delta,
            n,
            seed,
            oracle,
            csv,
        } => {
            let solver: SolverKind = algo.parse()?;
            if !solver.is_discounted() {
                bail!("`{algo}` is an average-reward solver; use solve-avg");
            }
            run_single(ExperimentConfig {
                solver,
                mdp: MdpSource::File(mdp),
                epsilon,
                delta,
                gamma: Some(gamma),
                n,
                trials: 1,
                master_seed: seed,
                oracle_mode: oracle,
                output: csv,
                max_loops: savia_core::average::DEFAULT_MAX_LOOPS,
            })
        }
        Command::Bench { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config = ExperimentConfig::parse(&text)?;
            let outcome = run_experiment(&config)?;
            for (trial, msg) in &outcome.errors {
                eprintln!("trial {trial} failed: {msg}");
            }
            let s = &outcome.summary;
            println!(
                "{} trials ok, {} failed | n_or_N mean {} median {} q90 {} | samples mean {} median {} q90 {}",
                outcome.rows.len(),
                outcome.errors.len(),
                s.mean_n,
                s.median_n,
                s.q90_n,
                s.mean_samples,
                s.median_samples,
                s.q90_samples,
            );
            if outcome.errors.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Oracle { mdp, gamma } => {
            let instance = io::read_mdp(&mdp)?;
            let q0 = QTable::zeros(instance.n_states(), instance.n_actions());
            match gamma {
                Some(gamma) => {
                    let q_star = discounted_vi(&instance, gamma, 1e-9);
                    let v = q_star.max_over_actions();
                    println!(
                        "discounted oracle: gamma = {gamma}, ||Q*||_inf = {}",
                        q_star.inf_norm()
                    );
                    for s in 0..instance.n_states() {
                        println!("  V*({s}) = {}", v.get(s));
                    }
                }
                None => {
                    let sol = exact_anchored_vi(&instance, &q0, 1e-9, 10_000_000)?;
                    println!(
                        "average-reward oracle: g* = {}, sp(h*) = {}, residual = {}, iterations = {}",
                        sol.gain,
                        sol.h_star.span(),
                        sol.residual_span,
                        sol.iterations
                    );
                    for s in 0..instance.n_states() {
                        println!("  h*({s}) = {}", sol.h_star.get(s));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_single(config: ExperimentConfig) -> Result<ExitCode> {
    let outcome = run_experiment(&config)?;
    if let Some((_, msg)) = outcome.errors.first() {
        eprintln!("run failed: {msg}");
        return Ok(ExitCode::FAILURE);
    }
    let row = &outcome.rows[0];
    print!(
        "algo={} seed={} n_or_N={} loops_I={} total_samples={} empirical_residual={}",
        row.algo, row.seed, row.n_or_n, row.loops_i, row.total_samples, row.empirical_residual
    );
    if let Some(t) = row.true_residual {
        print!(" true_residual={t}");
    }
    if let Some(g) = row.policy_gap {
        print!(" policy_gap={g}");
    }
    println!(" wall_time_ms={}", row.wall_time_ms);
    Ok(ExitCode::SUCCESS)
}
