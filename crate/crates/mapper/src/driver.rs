//! The iterative mapping loop: for increasing II, fold the schedule, encode,
//! solve, decode, and register-allocate, until a legal mapping appears or the
//! II cap / time budget is exhausted.

use std::time::{Duration, Instant};

use cnfsat::{check_model, solve_with_command, Budget, SolveResult, Solver, SolverConfig};
use thiserror::Error;

use crate::encoder::{build_formula, decode_model, Mapping};
use crate::model::{CgraArch, Dfg};
use crate::regalloc::{allocate, Coloring};
use crate::schedule::{build_kms, compute_mii, mobility_schedule};
use crate::validator::{validate_mapping, Violation};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverMode {
    Internal,
    /// External DIMACS solver command; the CNF file path is appended.
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapperOptions {
    /// First II to try; defaults to max(ResMII, RecMII).
    pub ii_start: Option<u32>,
    pub ii_max: u32,
    pub time_budget_per_ii: Duration,
    /// Optional wall-clock cap over the whole loop.
    pub total_budget: Option<Duration>,
    pub conflict_budget: Option<u64>,
    pub seed: u64,
    pub solver: SolverMode,
}

impl Default for MapperOptions {
    fn default() -> Self {
        MapperOptions {
            ii_start: None,
            ii_max: 50,
            time_budget_per_ii: Duration::from_secs(4000),
            total_budget: None,
            conflict_budget: None,
            seed: 0,
            solver: SolverMode::Internal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IiVerdict {
    /// Structural infeasibility detected before solving.
    TriviallyUnsat,
    Unsat,
    ColoringFailed,
    Mapped,
    TimedOut,
}

impl IiVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            IiVerdict::TriviallyUnsat => "trivially_unsat",
            IiVerdict::Unsat => "unsat",
            IiVerdict::ColoringFailed => "coloring_failed",
            IiVerdict::Mapped => "mapped",
            IiVerdict::TimedOut => "timed_out",
        }
    }
}

/// One line of the per-II log.
#[derive(Debug, Clone, PartialEq)]
pub struct IiAttempt {
    pub ii: u32,
    pub verdict: IiVerdict,
    pub solve_seconds: f64,
    pub num_vars: u32,
    pub num_clauses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapStatus {
    Mapped,
    NoMappingUpToCap,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    pub status: MapStatus,
    pub ii: Option<u32>,
    pub mapping: Option<Mapping>,
    pub registers: Option<Coloring>,
    pub log: Vec<IiAttempt>,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("ii_start {start} exceeds ii_max {max}")]
    BadIiRange { start: u32, max: u32 },
    #[error("external solver failed: {0}")]
    External(#[from] cnfsat::ExternalError),
    #[error("solver returned a model that fails check_model at II {ii}")]
    ModelCheckFailed { ii: u32 },
    #[error("decoded mapping failed validation at II {ii}: {violations:?}")]
    ValidationFailed { ii: u32, violations: Vec<Violation> },
    #[error("decode error at II {ii}: {source}")]
    Decode {
        ii: u32,
        source: crate::encoder::DecodeError,
    },
}

/// Run the mapping loop. Every attempted II contributes one log entry; the
/// first II that solves, colors, and validates wins.
pub fn map_loop(
    dfg: &Dfg,
    arch: &CgraArch,
    opts: &MapperOptions,
) -> Result<MappingReport, DriverError> {
    let start_time = Instant::now();
    let ms = mobility_schedule(dfg);
    let ii_start = opts.ii_start.unwrap_or_else(|| compute_mii(dfg, arch));
    if let Some(start) = opts.ii_start {
        if start > opts.ii_max {
            return Err(DriverError::BadIiRange {
                start,
                max: opts.ii_max,
            });
        }
    }

    let mut log: Vec<IiAttempt> = Vec::new();
    for ii in ii_start..=opts.ii_max {
        let remaining_total = opts
            .total_budget
            .map(|total| total.saturating_sub(start_time.elapsed()));
        if remaining_total == Some(Duration::ZERO) {
            return Ok(MappingReport {
                status: MapStatus::TimedOut,
                ii: None,
                mapping: None,
                registers: None,
                log,
            });
        }

        let kms = build_kms(&ms, ii);
        let (cnf, table) = match build_formula(dfg, &kms, arch) {
            Ok(built) => built,
            Err(_) => {
                log.push(IiAttempt {
                    ii,
                    verdict: IiVerdict::TriviallyUnsat,
                    solve_seconds: 0.0,
                    num_vars: 0,
                    num_clauses: 0,
                });
                continue;
            }
        };

        let per_ii = match remaining_total {
            Some(left) => opts.time_budget_per_ii.min(left),
            None => opts.time_budget_per_ii,
        };
        let solve_start = Instant::now();
        let result = match &opts.solver {
            SolverMode::Internal => {
                let budget = Budget {
                    time: Some(per_ii),
                    conflicts: opts.conflict_budget,
                };
                Solver::new(&cnf, SolverConfig { seed: opts.seed }).solve(budget)
            }
            SolverMode::External(command) => solve_with_command(&cnf, command)?,
        };
        let solve_seconds = solve_start.elapsed().as_secs_f64();
        let mut attempt = IiAttempt {
            ii,
            verdict: IiVerdict::Unsat,
            solve_seconds,
            num_vars: cnf.num_vars(),
            num_clauses: cnf.num_clauses(),
        };

        match result {
            SolveResult::Unsat => {
                log.push(attempt);
            }
            SolveResult::BudgetExceeded { .. } => {
                attempt.verdict = IiVerdict::TimedOut;
                log.push(attempt);
                return Ok(MappingReport {
                    status: MapStatus::TimedOut,
                    ii: None,
                    mapping: None,
                    registers: None,
                    log,
                });
            }
            SolveResult::Sat(model) => {
                if !check_model(&cnf, &model) {
                    return Err(DriverError::ModelCheckFailed { ii });
                }
                let mapping = decode_model(&model, &table, dfg)
                    .map_err(|source| DriverError::Decode { ii, source })?;
                match allocate(&mapping, arch.regs_per_pe, ii) {
                    Err(_) => {
                        attempt.verdict = IiVerdict::ColoringFailed;
                        log.push(attempt);
                    }
                    Ok(coloring) => {
                        let report = validate_mapping(&mapping, dfg, arch);
                        if !report.is_ok() {
                            return Err(DriverError::ValidationFailed {
                                ii,
                                violations: report.violations,
                            });
                        }
                        attempt.verdict = IiVerdict::Mapped;
                        log.push(attempt);
                        return Ok(MappingReport {
                            status: MapStatus::Mapped,
                            ii: Some(ii),
                            mapping: Some(mapping),
                            registers: Some(coloring),
                            log,
                        });
                    }
                }
            }
        }
    }
    Ok(MappingReport {
        status: MapStatus::NoMappingUpToCap,
        ii: None,
        mapping: None,
        registers: None,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DfgEdge, DfgNode, NodeId};

    fn dfg_from(nodes: &[NodeId], edges: &[(NodeId, NodeId, u32)]) -> Dfg {
        Dfg::new(
            nodes
                .iter()
                .map(|&id| DfgNode {
                    id,
                    opcode: "op".into(),
                    needs_memory: false,
                })
                .collect(),
            edges
                .iter()
                .map(|&(src, dst, distance)| DfgEdge { src, dst, distance })
                .collect(),
        )
        .unwrap()
    }

    fn running_example() -> Dfg {
        dfg_from(
            &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
            &[
                (1, 10, 0),
                (2, 9, 0),
                (3, 5, 0),
                (4, 7, 0),
                (5, 6, 0),
                (6, 8, 0),
                (7, 8, 0),
                (8, 9, 0),
                (10, 11, 0),
            ],
        )
    }

    fn fast_opts() -> MapperOptions {
        MapperOptions {
            time_budget_per_ii: Duration::from_secs(30),
            ..MapperOptions::default()
        }
    }

    #[test]
    fn defaults_match_the_documented_limits() {
        let opts = MapperOptions::default();
        assert_eq!(opts.ii_max, 50);
        assert_eq!(opts.time_budget_per_ii, Duration::from_secs(4000));
        assert!(opts.ii_start.is_none());
        assert_eq!(opts.solver, SolverMode::Internal);
    }

    #[test]
    fn running_example_maps_at_ii3_on_2x2() {
        let dfg = running_example();
        let arch = CgraArch::mesh(2, 2).unwrap();
        let report = map_loop(&dfg, &arch, &fast_opts()).unwrap();
        assert_eq!(report.status, MapStatus::Mapped);
        assert_eq!(report.ii, Some(3));
        // Defaulted start: no II below MII = 3 is attempted.
        assert_eq!(report.log.first().map(|a| a.ii), Some(3));
        let mapping = report.mapping.unwrap();
        assert_eq!(mapping.placements.len(), 11);
        assert!(validate_mapping(&mapping, &dfg, &arch).is_ok());
    }

    #[test]
    fn log_iis_increase_strictly() {
        // Two zero-mobility colliding nodes on one PE: unsatisfiable at
        // every II; cap the loop low to keep the log small.
        let dfg = dfg_from(&[1, 2, 3, 4], &[(1, 2, 0), (1, 3, 0), (2, 4, 0), (3, 4, 0)]);
        let arch = CgraArch::mesh(1, 1).unwrap();
        let opts = MapperOptions {
            ii_start: Some(1),
            ii_max: 6,
            ..fast_opts()
        };
        let report = map_loop(&dfg, &arch, &opts).unwrap();
        assert_eq!(report.status, MapStatus::NoMappingUpToCap);
        let iis: Vec<u32> = report.log.iter().map(|a| a.ii).collect();
        assert_eq!(iis, vec![1, 2, 3, 4, 5, 6]);
        assert!(report.log.windows(2).all(|w| w[0].ii < w[1].ii));
    }

    #[test]
    fn deterministic_reports_for_fixed_seed() {
        let dfg = running_example();
        let arch = CgraArch::mesh(2, 2).unwrap();
        let opts = MapperOptions {
            seed: 9,
            ..fast_opts()
        };
        let a = map_loop(&dfg, &arch, &opts).unwrap();
        let b = map_loop(&dfg, &arch, &opts).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.ii, b.ii);
        assert_eq!(a.mapping, b.mapping);
        assert_eq!(a.registers, b.registers);
        let verdicts = |r: &MappingReport| r.log.iter().map(|x| x.verdict).collect::<Vec<_>>();
        assert_eq!(verdicts(&a), verdicts(&b));
    }

    #[test]
    fn conflict_budget_exhaustion_reports_timeout() {
        let dfg = running_example();
        let arch = CgraArch::mesh(2, 2).unwrap();
        let opts = MapperOptions {
            conflict_budget: Some(1),
            ..fast_opts()
        };
        let report = map_loop(&dfg, &arch, &opts).unwrap();
        // The II=3 formula needs more than one conflict, so the budget trips.
        assert_eq!(report.status, MapStatus::TimedOut);
        assert_eq!(
            report.log.last().map(|a| a.verdict),
            Some(IiVerdict::TimedOut)
        );
    }

    #[test]
    fn zero_total_budget_times_out_before_solving() {
        let dfg = running_example();
        let arch = CgraArch::mesh(2, 2).unwrap();
        let opts = MapperOptions {
            total_budget: Some(Duration::ZERO),
            ..fast_opts()
        };
        let report = map_loop(&dfg, &arch, &opts).unwrap();
        assert_eq!(report.status, MapStatus::TimedOut);
        assert!(report.log.is_empty());
    }

    #[test]
    fn bad_ii_range_is_rejected() {
        let dfg = running_example();
        let arch = CgraArch::mesh(2, 2).unwrap();
        let opts = MapperOptions {
            ii_start: Some(9),
            ii_max: 5,
            ..fast_opts()
        };
        assert!(matches!(
            map_loop(&dfg, &arch, &opts),
            Err(DriverError::BadIiRange { start: 9, max: 5 })
        ));
    }

    #[test]
    fn independent_pair_on_one_pe_never_maps() {
        // Both nodes have a rigid window at cycle 0, so they collide at
        // every II on a 1x1 mesh; the folding rule pins the windows.
        let dfg = dfg_from(&[1, 2], &[]);
        let arch = CgraArch::mesh(1, 1).unwrap();
        let opts = MapperOptions {
            ii_start: Some(1),
            ii_max: 4,
            ..fast_opts()
        };
        let report = map_loop(&dfg, &arch, &opts).unwrap();
        assert_eq!(report.status, MapStatus::NoMappingUpToCap);
        assert_eq!(report.log[0].verdict, IiVerdict::TriviallyUnsat);
        for attempt in &report.log[1..] {
            assert_eq!(attempt.verdict, IiVerdict::Unsat, "ii {}", attempt.ii);
        }
    }
}
