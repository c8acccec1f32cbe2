//! Command-line surface: `map`, `schedule`, `encode`, and `validate`
//! subcommands over JSON DFG/architecture documents.
//!
//! Exit codes are a stable contract:
//! 0 success (for `map`: a mapping was found), 1 validation violations,
//! 2 no mapping up to the II cap / trivially unsatisfiable encode,
//! 3 timed out, 64 usage error, 65 input data error, 70 internal error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::driver::{map_loop, MapStatus, MapperOptions, SolverMode};
use crate::encoder::{build_formula, Mapping};
use crate::model::{parse_arch, parse_dfg, CgraArch};
use crate::regalloc::Coloring;
use crate::report::ReportFile;
use crate::schedule::{build_kms, mobility_schedule, render_kms_table, render_schedule_tables};
use crate::validator::validate_mapping;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATIONS: i32 = 1;
pub const EXIT_NO_MAPPING: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_INTERNAL: i32 = 70;

/// Environment variable holding a default external solver command.
pub const SOLVER_ENV: &str = "CGRA_MAPPER_SOLVER";

#[derive(Debug, Parser)]
#[command(
    name = "cgra-mapper",
    about = "Map loop data-flow graphs onto CGRA meshes via SAT-based modulo scheduling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for a legal mapping, iterating the initiation interval upward.
    Map(MapArgs),
    /// Print the ASAP/ALAP/mobility tables (and the KMS for a given II).
    Schedule(ScheduleArgs),
    /// Export the CNF encoding for one II in DIMACS form.
    Encode(EncodeArgs),
    /// Re-check a mapping report against its DFG and architecture.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct MapArgs {
    /// DFG document (JSON).
    #[arg(long)]
    dfg: PathBuf,
    /// Architecture document (JSON).
    #[arg(long)]
    arch: PathBuf,
    /// First II to try (default: max of the resource and recurrence bounds).
    #[arg(long)]
    ii_start: Option<u32>,
    /// Largest II to try.
    #[arg(long, default_value_t = 50)]
    ii_max: u32,
    /// Solver time budget per II attempt, in seconds.
    #[arg(long, default_value_t = 4000.0)]
    timeout: f64,
    /// Wall-clock budget for the whole search, in seconds.
    #[arg(long)]
    total_timeout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `internal` or `cmd:<executable and args>`.
    #[arg(long)]
    solver: Option<String>,
    /// Write the mapping report (JSON) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    dfg: PathBuf,
    /// Also print the kernel mobility schedule folded at this II.
    #[arg(long)]
    ii: Option<u32>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    dfg: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    #[arg(long)]
    ii: u32,
    /// Output DIMACS file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Mapping report produced by `map --out`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    dfg: PathBuf,
    #[arg(long)]
    arch: PathBuf,
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    match cli.command {
        Command::Map(args) => cmd_map(args),
        Command::Schedule(args) => cmd_schedule(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Validate(args) => cmd_validate(args),
    }
}

fn read_file(path: &PathBuf) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_DATA
    })
}

fn load_dfg(path: &PathBuf) -> Result<crate::model::Dfg, i32> {
    parse_dfg(&read_file(path)?).map_err(|e| {
        eprintln!("error: invalid DFG {}: {e}", path.display());
        EXIT_DATA
    })
}

fn load_arch(path: &PathBuf) -> Result<CgraArch, i32> {
    parse_arch(&read_file(path)?).map_err(|e| {
        eprintln!("error: invalid architecture {}: {e}", path.display());
        EXIT_DATA
    })
}

fn parse_solver_flag(flag: Option<String>) -> Result<SolverMode, i32> {
    let value = match flag.or_else(|| std::env::var(SOLVER_ENV).ok()) {
        None => return Ok(SolverMode::Internal),
        Some(v) => v,
    };
    if value == "internal" {
        Ok(SolverMode::Internal)
    } else if let Some(command) = value.strip_prefix("cmd:") {
        if command.trim().is_empty() {
            eprintln!("error: empty solver command");
            Err(EXIT_USAGE)
        } else {
            Ok(SolverMode::External(command.to_string()))
        }
    } else {
        eprintln!("error: --solver must be `internal` or `cmd:<executable>`");
        Err(EXIT_USAGE)
    }
}

fn cmd_map(args: MapArgs) -> i32 {
    let (dfg, arch) = match (load_dfg(&args.dfg), load_arch(&args.arch)) {
        (Ok(dfg), Ok(arch)) => (dfg, arch),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    let solver = match parse_solver_flag(args.solver) {
        Ok(solver) => solver,
        Err(code) => return code,
    };
    let opts = MapperOptions {
        ii_start: args.ii_start,
        ii_max: args.ii_max,
        time_budget_per_ii: Duration::from_secs_f64(args.timeout),
        total_budget: args.total_timeout.map(Duration::from_secs_f64),
        conflict_budget: None,
        seed: args.seed,
        solver,
    };
    let report = match map_loop(&dfg, &arch, &opts) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INTERNAL;
        }
    };

    for attempt in &report.log {
        println!(
            "II {:>3}: {} ({} vars, {} clauses, {:.3} s)",
            attempt.ii,
            attempt.verdict.as_str(),
            attempt.num_vars,
            attempt.num_clauses,
            attempt.solve_seconds
        );
    }
    if let (Some(mapping), Some(coloring)) = (&report.mapping, &report.registers) {
        println!();
        print!("{}", render_kernel_table(mapping, &arch, coloring));
    }
    if let Some(out) = &args.out {
        let file = ReportFile::from(&report);
        if let Err(e) = fs::write(out, file.to_json()) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return EXIT_DATA;
        }
    }
    match report.status {
        MapStatus::Mapped => EXIT_OK,
        MapStatus::NoMappingUpToCap => {
            eprintln!("no mapping up to II {}", opts.ii_max);
            EXIT_NO_MAPPING
        }
        MapStatus::TimedOut => {
            eprintln!("timed out");
            EXIT_TIMEOUT
        }
    }
}

fn cmd_schedule(args: ScheduleArgs) -> i32 {
    let dfg = match load_dfg(&args.dfg) {
        Ok(dfg) => dfg,
        Err(code) => return code,
    };
    let ms = mobility_schedule(&dfg);
    print!("{}", render_schedule_tables(&ms));
    if let Some(ii) = args.ii {
        if ii == 0 {
            eprintln!("error: --ii must be positive");
            return EXIT_USAGE;
        }
        println!();
        print!("{}", render_kms_table(&build_kms(&ms, ii)));
    }
    EXIT_OK
}

fn cmd_encode(args: EncodeArgs) -> i32 {
    let (dfg, arch) = match (load_dfg(&args.dfg), load_arch(&args.arch)) {
        (Ok(dfg), Ok(arch)) => (dfg, arch),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    if args.ii == 0 {
        eprintln!("error: --ii must be positive");
        return EXIT_USAGE;
    }
    let kms = build_kms(&mobility_schedule(&dfg), args.ii);
    let (cnf, table) = match build_formula(&dfg, &kms, &arch) {
        Ok(built) => built,
        Err(infeasible) => {
            eprintln!("trivially unsatisfiable at II {}: {infeasible}", args.ii);
            return EXIT_NO_MAPPING;
        }
    };
    let text = cnfsat::write_dimacs_with_comments(&cnf, &table.dimacs_comments());
    match &args.out {
        Some(path) => {
            if let Err(e) = fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_DATA;
            }
        }
        None => print!("{text}"),
    }
    println!("vars: {}  clauses: {}", cnf.num_vars(), cnf.num_clauses());
    EXIT_OK
}

fn cmd_validate(args: ValidateArgs) -> i32 {
    let (dfg, arch) = match (load_dfg(&args.dfg), load_arch(&args.arch)) {
        (Ok(dfg), Ok(arch)) => (dfg, arch),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    let text = match read_file(&args.report) {
        Ok(text) => text,
        Err(code) => return code,
    };
    let file = match ReportFile::from_json(&text) {
        Ok(file) => file,
        Err(e) => {
            eprintln!("error: invalid report {}: {e}", args.report.display());
            return EXIT_DATA;
        }
    };
    let mapping = match file.to_mapping() {
        Ok(mapping) => mapping,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_DATA;
        }
    };
    let result = validate_mapping(&mapping, &dfg, &arch);
    if result.is_ok() {
        println!("ok: mapping at II {} passes all checks", mapping.ii);
        EXIT_OK
    } else {
        for violation in &result.violations {
            println!("{} {}", violation.code(), violation);
        }
        EXIT_VIOLATIONS
    }
}

/// Kernel layout, one row per slot and one column per PE; cells carry
/// `node^iteration` entries plus the register assigned to the node's value
/// (when it lives in the register file).
pub fn render_kernel_table(mapping: &Mapping, arch: &CgraArch, coloring: &Coloring) -> String {
    let ii = mapping.ii;
    let mut cells = vec![vec![String::from("-"); arch.num_pes()]; ii as usize];
    for (&node, p) in &mapping.placements {
        let mut cell = format!("{node}^{}", p.iter);
        if let Some(reg) = coloring.register_of(node) {
            let _ = write!(cell, " r{reg}");
        }
        cells[p.slot as usize][p.pe.0] = cell;
    }
    let width = cells
        .iter()
        .flatten()
        .map(String::len)
        .max()
        .unwrap_or(1)
        .max(format!("PE{}", arch.num_pes() - 1).len());

    let mut out = String::new();
    let _ = writeln!(
        out,
        "kernel at II={} on {}x{} mesh ({} regs/PE)",
        ii, arch.rows, arch.cols, arch.regs_per_pe
    );
    let header: Vec<String> = (0..arch.num_pes())
        .map(|p| format!("{:<width$}", format!("PE{p}")))
        .collect();
    let _ = writeln!(out, "slot | {}", header.join(" | "));
    for (slot, row) in cells.iter().enumerate() {
        let rendered: Vec<String> = row.iter().map(|c| format!("{c:<width$}")).collect();
        let _ = writeln!(out, "{:>4} | {}", slot, rendered.join(" | "));
    }
    out
}
