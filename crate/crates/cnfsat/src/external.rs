//! Pipe mode: hand a formula to an external DIMACS solver and read its verdict.
//!
//! The command is split on whitespace; the path of a temporary `.cnf` file is
//! appended as the final argument. Output must follow the SAT-competition
//! convention: an `s SATISFIABLE` / `s UNSATISFIABLE` / `s UNKNOWN` status
//! line and, for satisfiable results, `v ` value lines terminated by 0.

use std::io::Write;
use std::process::Command;
use std::time::Duration;

use thiserror::Error;

use crate::dimacs::write_dimacs;
use crate::formula::{check_model, CnfFormula};
use crate::solver::SolveResult;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("empty solver command")]
    EmptyCommand,
    #[error("failed to run solver command {command:?}: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("could not write temporary CNF file: {0}")]
    TempFile(std::io::Error),
    #[error("solver output has no `s` status line")]
    MissingStatus,
    #[error("malformed value line token: {0:?}")]
    BadValueToken(String),
    #[error("solver reported SAT but printed no model")]
    MissingModel,
    #[error("solver model does not satisfy the formula")]
    BadModel,
}

/// Parse SAT-competition style solver output into a [`SolveResult`].
pub fn parse_solver_output(text: &str, num_vars: u32) -> Result<SolveResult, ExternalError> {
    let mut status: Option<&str> = None;
    let mut values: Vec<i32> = Vec::new();
    let mut saw_values = false;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("s ") {
            status = Some(rest.trim());
        } else if let Some(rest) = line.strip_prefix("v ") {
            saw_values = true;
            for token in rest.split_whitespace() {
                let lit: i32 = token
                    .parse()
                    .map_err(|_| ExternalError::BadValueToken(token.to_string()))?;
                if lit != 0 {
                    values.push(lit);
                }
            }
        } else if line == "v" {
            saw_values = true;
        }
    }
    match status {
        Some("SATISFIABLE") => {
            if !saw_values {
                return Err(ExternalError::MissingModel);
            }
            let mut model = vec![false; num_vars as usize];
            for lit in values {
                let var = lit.unsigned_abs() as usize;
                if var >= 1 && var <= num_vars as usize {
                    model[var - 1] = lit > 0;
                }
            }
            Ok(SolveResult::Sat(model))
        }
        Some("UNSATISFIABLE") => Ok(SolveResult::Unsat),
        Some(_) => Ok(SolveResult::BudgetExceeded {
            elapsed: Duration::ZERO,
            conflicts: 0,
        }),
        None => Err(ExternalError::MissingStatus),
    }
}

/// Solve `cnf` by invoking `command`. Satisfying models are re-checked
/// against the formula before being reported.
pub fn solve_with_command(cnf: &CnfFormula, command: &str) -> Result<SolveResult, ExternalError> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or(ExternalError::EmptyCommand)?;
    let args: Vec<&str> = parts.collect();

    let mut file = tempfile::Builder::new()
        .prefix("cnfsat-")
        .suffix(".cnf")
        .tempfile()
        .map_err(ExternalError::TempFile)?;
    file.write_all(write_dimacs(cnf).as_bytes())
        .map_err(ExternalError::TempFile)?;
    file.flush().map_err(ExternalError::TempFile)?;

    let output = Command::new(program)
        .args(&args)
        .arg(file.path())
        .output()
        .map_err(|source| ExternalError::Spawn {
            command: command.to_string(),
            source,
        })?;
    let stdout = String::from_utf8_lossy(&output.stdout);
    let result = parse_solver_output(&stdout, cnf.num_vars())?;
    if let SolveResult::Sat(model) = &result {
        if !check_model(cnf, model) {
            return Err(ExternalError::BadModel);
        }
    }
    Ok(result)
}
