//! Fixed-schema CSV output for experiment runs, plus a parser so summaries
//! can be recomputed bit-exactly from the written files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::stats;

pub const SCHEMA_VERSION: u32 = 1;
pub const HEADER: &str = "schema_version,trial,seed,algo,epsilon,delta,gamma,n_or_N,loops_I,\
                          total_samples,empirical_residual,true_residual,policy_gap,wall_time_ms";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: expected {expected} fields, got {got}")]
    FieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: cannot parse field `{field}`: `{value}`")]
    Field {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("missing header line")]
    MissingHeader,
    #[error("unexpected header: {0}")]
    BadHeader(String),
}

/// One per-trial record, mirroring the file schema exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub schema_version: u32,
    pub trial: u64,
    pub seed: u64,
    pub algo: String,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: Option<f64>,
    pub n_or_n: u64,
    pub loops_i: u64,
    pub total_samples: u64,
    pub empirical_residual: f64,
    pub true_residual: Option<f64>,
    pub policy_gap: Option<f64>,
    pub wall_time_ms: f64,
}

/// 17 significant digits, enough for exact f64 round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn format_rows(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 + rows.len() * 128);
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.schema_version,
            r.trial,
            r.seed,
            r.algo,
            fmt_f64(r.epsilon),
            fmt_f64(r.delta),
            fmt_opt(r.gamma),
            r.n_or_n,
            r.loops_i,
            r.total_samples,
            fmt_f64(r.empirical_residual),
            fmt_opt(r.true_residual),
            fmt_opt(r.policy_gap),
            fmt_f64(r.wall_time_ms),
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn parse_rows(text: &str) -> Result<Vec<CsvRow>, CsvError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CsvError::MissingHeader)?;
    if header != HEADER {
        return Err(CsvError::BadHeader(header.to_string()));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(CsvError::FieldCount {
                line: lineno,
                expected: 14,
                got: fields.len(),
            });
        }
        fn req<T: std::str::FromStr>(
            line: usize,
            field: &'static str,
            value: &str,
        ) -> Result<T, CsvError> {
            value.parse().map_err(|_| CsvError::Field {
                line,
                field,
                value: value.to_string(),
            })
        }
        fn opt(line: usize, field: &'static str, value: &str) -> Result<Option<f64>, CsvError> {
            if value.is_empty() {
                Ok(None)
            } else {
                req(line, field, value).map(Some)
            }
        }
        rows.push(CsvRow {
            schema_version: req(lineno, "schema_version", fields[0])?,
            trial: req(lineno, "trial", fields[1])?,
            seed: req(lineno, "seed", fields[2])?,
            algo: fields[3].to_string(),
            epsilon: req(lineno, "epsilon", fields[4])?,
            delta: req(lineno, "delta", fields[5])?,
            gamma: opt(lineno, "gamma", fields[6])?,
            n_or_n: req(lineno, "n_or_N", fields[7])?,
            loops_i: req(lineno, "loops_I", fields[8])?,
            total_samples: req(lineno, "total_samples", fields[9])?,
            empirical_residual: req(lineno, "empirical_residual", fields[10])?,
            true_residual: opt(lineno, "true_residual", fields[11])?,
            policy_gap: opt(lineno, "policy_gap", fields[12])?,
            wall_time_ms: req(lineno, "wall_time_ms", fields[13])?,
        });
    }
    Ok(rows)
}

/// Summary statistics over the per-trial rows of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub mean_n: f64,
    pub median_n: f64,
    pub q90_n: f64,
    pub mean_samples: f64,
    pub median_samples: f64,
    pub q90_samples: f64,
}

pub fn summarize(rows: &[CsvRow]) -> Summary {
    let ns: Vec<f64> = rows.iter().map(|r| r.n_or_n as f64).collect();
    let samples: Vec<f64> = rows.iter().map(|r| r.total_samples as f64).collect();
    Summary {
        trials: rows.len(),
        mean_n: stats::mean(&ns),
        median_n: stats::median(&ns),
        q90_n: stats::quantile(&ns, 0.9),
        mean_samples: stats::mean(&samples),
        median_samples: stats::median(&samples),
        q90_samples: stats::quantile(&samples, 0.9),
    }
}

pub const SUMMARY_HEADER: &str =
    "schema_version,algo,epsilon,delta,gamma,trials,mean_n,median_n,q90_n,\
     mean_samples,median_samples,q90_samples";

pub fn format_summary(
    algo: &str,
    epsilon: f64,
    delta: f64,
    gamma: Option<f64>,
    summary: &Summary,
) -> String {
    format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
        SCHEMA_VERSION,
        algo,
        fmt_f64(epsilon),
        fmt_f64(delta),
        fmt_opt(gamma),
        summary.trials,
        fmt_f64(summary.mean_n),
        fmt_f64(summary.median_n),
        fmt_f64(summary.q90_n),
        fmt_f64(summary.mean_samples),
        fmt_f64(summary.median_samples),
        fmt_f64(summary.q90_samples),
    )
}
