//! Line-oriented text format for tabular MDPs.
//!
//! ```text
//! # comment
//! mdp <n_states> <n_actions>
//! r <s> <a> <value>          one line per (s,a); missing rewards default to 0
//! p <s> <a> <s'> <prob>      one line per nonzero transition
//! ```
//!
//! Unlisted transitions default to 0, so every (s,a) needs enough `p` lines
//! to form a stochastic row; validation rejects anything else.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::mdp::{MdpError, TabularMdp};

#[derive(Debug, Error)]
pub enum MdpFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] MdpError),
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp, MdpFileError> {
    parse_mdp(&fs::read_to_string(path)?)
}

pub fn write_mdp(path: &Path, mdp: &TabularMdp) -> std::io::Result<()> {
    fs::write(path, format_mdp(mdp))
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp, MdpFileError> {
    let mut header: Option<(usize, usize)> = None;
    let mut transitions: Vec<f64> = Vec::new();
    let mut rewards: Vec<f64> = Vec::new();
    let mut seen_r: Vec<bool> = Vec::new();
    let mut seen_p: Vec<bool> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| MdpFileError::Parse { line: lineno, msg };

        match fields[0] {
            "mdp" => {
                if header.is_some() {
                    return Err(err("duplicate mdp header".into()));
                }
                if fields.len() != 3 {
                    return Err(err("expected `mdp <n_states> <n_actions>`".into()));
                }
                let ns: usize = parse_field(fields[1], lineno, "n_states")?;
                let na: usize = parse_field(fields[2], lineno, "n_actions")?;
                if ns == 0 || na == 0 {
                    return Err(err("state and action counts must be positive".into()));
                }
                header = Some((ns, na));
                transitions = vec![0.0; ns * na * ns];
                rewards = vec![0.0; ns * na];
                seen_r = vec![false; ns * na];
                seen_p = vec![false; ns * na * ns];
            }
            "r" => {
                let (ns, na) = header.ok_or_else(|| MdpFileError::Parse {
                    line: lineno,
                    msg: "`r` line before mdp header".into(),
                })?;
                if fields.len() != 4 {
                    return Err(err("expected `r <s> <a> <value>`".into()));
                }
                let s: usize = parse_field(fields[1], lineno, "state")?;
                let a: usize = parse_field(fields[2], lineno, "action")?;
                let v: f64 = parse_field(fields[3], lineno, "reward")?;
                if s >= ns || a >= na {
                    return Err(err(format!("reward index ({s},{a}) out of range")));
                }
                let i = s * na + a;
                if seen_r[i] {
                    return Err(err(format!("duplicate reward line for ({s},{a})")));
                }
                seen_r[i] = true;
                rewards[i] = v;
            }
            "p" => {
                let (ns, na) = header.ok_or_else(|| MdpFileError::Parse {
                    line: lineno,
                    msg: "`p` line before mdp header".into(),
                })?;
                if fields.len() != 5 {
                    return Err(err("expected `p <s> <a> <s'> <prob>`".into()));
                }
                let s: usize = parse_field(fields[1], lineno, "state")?;
                let a: usize = parse_field(fields[2], lineno, "action")?;
                let s2: usize = parse_field(fields[3], lineno, "next state")?;
                let v: f64 = parse_field(fields[4], lineno, "probability")?;
                if s >= ns || a >= na || s2 >= ns {
                    return Err(err(format!("transition index ({s},{a},{s2}) out of range")));
                }
                let i = (s * na + a) * ns + s2;
                if seen_p[i] {
                    return Err(err(format!("duplicate transition line for ({s},{a},{s2})")));
                }
                seen_p[i] = true;
                transitions[i] = v;
            }
            other => {
                return Err(err(format!("unknown directive `{other}`")));
            }
        }
    }

    let (ns, na) = header.ok_or(MdpFileError::Parse {
        line: 0,
        msg: "missing mdp header".into(),
    })?;
    Ok(TabularMdp::new(ns, na, transitions, rewards)?)
}

pub fn format_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    out.push_str(&format!("mdp {} {}\n", mdp.n_states(), mdp.n_actions()));
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            out.push_str(&format!("r {s} {a} {}\n", mdp.reward(s, a)));
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    out.push_str(&format!("p {s} {a} {s2} {p}\n"));
                }
            }
        }
    }
    out
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    line: usize,
    what: &str,
) -> Result<T, MdpFileError> {
    field.parse().map_err(|_| MdpFileError::Parse {
        line,
        msg: format!("cannot parse {what} from `{field}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWAP: &str = "\
# two-state deterministic swap
mdp 2 1
r 0 0 0
r 1 0 1
p 0 0 1 1.0
p 1 0 0 1.0
";

    #[test]
    fn parses_comments_and_defaults() {
        let mdp = parse_mdp(SWAP).unwrap();
        assert_eq!(mdp.n_states(), 2);
        assert_eq!(mdp.reward(1, 0), 1.0);
        assert_eq!(mdp.prob(0, 0, 1), 1.0);
        assert_eq!(mdp.prob(0, 0, 0), 0.0);
    }

    #[test]
    fn round_trips_exactly() {
        let mdp = parse_mdp(SWAP).unwrap();
        let text = format_mdp(&mdp);
        let back = parse_mdp(&text).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let text = "mdp 2 1\np 0 0 1 0.9\np 1 0 0 1.0\n";
        match parse_mdp(text) {
            Err(MdpFileError::Invalid(MdpError::Invalid(_))) => {}
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_unknown_directives() {
        assert!(parse_mdp("mdp 1 1\np 0 0 0 1\nr 0 0 1\nr 0 0 2\n").is_err());
        assert!(parse_mdp("mdp 1 1\nq 0 0 0 1\n").is_err());
        assert!(parse_mdp("p 0 0 0 1\n").is_err());
    }
}
