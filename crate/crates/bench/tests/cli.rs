//! End-to-end tests of the command-line interface, driving the built binary.

use std::path::Path;
use std::process::{Command, Output};

use savia_bench::csvio;
use savia_core::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_savia-bench"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn strip_wall_column(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_writes_valid_mdp_files() {
    let dir = tempfile::tempdir().unwrap();
    for (family, extra) in [
        ("cycle", vec![]),
        ("riverswim", vec![]),
        ("garnet", vec!["--actions", "3", "--branching", "2"]),
    ] {
        let path = dir.path().join(format!("{family}.mdp"));
        let mut cmd = bin();
        cmd.args(["gen", "--family", family, "--states", "6", "--seed", "5"])
            .args(extra)
            .arg("--out")
            .arg(&path);
        run_ok(&mut cmd);
        let mdp = io::read_mdp(&path).expect("generated file parses");
        assert_eq!(mdp.n_states(), 6);
        assert!(mdp.validate().is_ok());
    }
}

#[test]
fn solve_avg_writes_csv_and_reruns_reproduce_it() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("cycle.mdp");
    run_ok(bin().args(["gen", "--family", "cycle", "--states", "4"]).arg("--out").arg(&mdp_path));

    let solve = |csv: &Path| {
        let mut cmd = bin();
        cmd.args([
            "solve-avg",
            "--algo",
            "savia-plus",
            "--epsilon",
            "0.1",
            "--delta",
            "0.1",
            "--seed",
            "9",
            "--oracle",
        ])
        .arg("--mdp")
        .arg(&mdp_path)
        .arg("--csv")
        .arg(csv);
        run_ok(&mut cmd);
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    solve(&a);
    solve(&b);

    let text_a = std::fs::read_to_string(&a).unwrap();
    let rows = csvio::parse_rows(&text_a).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].algo, "savia_plus");
    assert_eq!(rows[0].seed, 9);
    assert!(rows[0].true_residual.is_some());

    let text_b = std::fs::read_to_string(&b).unwrap();
    assert_eq!(strip_wall_column(&text_a), strip_wall_column(&text_b));
}

#[test]
fn solve_disc_runs_fixed_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("garnet.mdp");
    run_ok(
        bin()
            .args([
                "gen", "--family", "garnet", "--states", "5", "--actions", "2", "--branching",
                "2", "--seed", "3",
            ])
            .arg("--out")
            .arg(&mdp_path),
    );
    let csv = dir.path().join("disc.csv");
    let mut cmd = bin();
    cmd.args([
        "solve-disc",
        "--algo",
        "savid",
        "--gamma",
        "0.9",
        "--epsilon",
        "0.5",
        "--delta",
        "0.1",
        "--n",
        "32",
        "--seed",
        "4",
    ])
    .arg("--mdp")
    .arg(&mdp_path)
    .arg("--csv")
    .arg(&csv);
    run_ok(&mut cmd);
    let rows = csvio::parse_rows(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows[0].n_or_n, 32);
    assert_eq!(rows[0].gamma, Some(0.9));
    assert!(rows[0].total_samples > 0);
}

#[test]
fn bench_runs_config_files_and_writes_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp.csv");
    let config = format!(
        "solver = savia_plus\nmdp = cycle:4\nepsilon = 0.1\ndelta = 0.1\n\
         trials = 4\nmaster_seed = 2\noracle_mode = true\noutput = {}\n",
        out.display()
    );
    let cfg_path = dir.path().join("exp.cfg");
    std::fs::write(&cfg_path, config).unwrap();
    run_ok(bin().args(["bench", "--config"]).arg(&cfg_path));

    let rows = csvio::parse_rows(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.trial, i as u64);
        assert_eq!(row.seed, 2 + i as u64);
    }
    let summary = std::fs::read_to_string(dir.path().join("exp.summary.csv")).unwrap();
    assert!(summary.starts_with(csvio::SUMMARY_HEADER));
}

#[test]
fn oracle_prints_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("cycle.mdp");
    run_ok(bin().args(["gen", "--family", "cycle", "--states", "2"]).arg("--out").arg(&mdp_path));
    let out = run_ok(bin().args(["oracle", "--mdp"]).arg(&mdp_path));
    let text = String::from_utf8(out.stdout).unwrap();
    let gain: f64 = text
        .split("g* = ")
        .nth(1)
        .and_then(|rest| rest.split(',').next())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| panic!("no gain in: {text}"));
    assert!((gain - 0.5).abs() < 1e-8, "got: {text}");
}

#[test]
fn misuse_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let mdp_path = dir.path().join("cycle.mdp");
    run_ok(bin().args(["gen", "--family", "cycle", "--states", "2"]).arg("--out").arg(&mdp_path));

    // Discounted algo through the average entry point.
    let out = bin()
        .args([
            "solve-avg", "--algo", "savid", "--epsilon", "0.1", "--delta", "0.1",
        ])
        .arg("--mdp")
        .arg(&mdp_path)
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Unknown generator family.
    let out = bin()
        .args(["gen", "--family", "maze", "--states", "3", "--out", "x.mdp"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Fixed-n solver without --n.
    let out = bin()
        .args([
            "solve-avg", "--algo", "savia", "--epsilon", "0.1", "--delta", "0.1",
        ])
        .arg("--mdp")
        .arg(&mdp_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
}
