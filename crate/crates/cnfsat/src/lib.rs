//! A small, self-contained CNF satisfiability engine.
//!
//! The crate provides a clause container ([`CnfFormula`]), a CDCL solver
//! ([`Solver`]), DIMACS interchange, and a pipe mode for delegating to any
//! external DIMACS-conformant solver.

pub mod dimacs;
pub mod external;
pub mod formula;
pub mod solver;

pub use dimacs::{read_dimacs, write_dimacs, write_dimacs_with_comments, DimacsError};
pub use external::{parse_solver_output, solve_with_command, ExternalError};
pub use formula::{check_model, CnfFormula, FormulaError};
pub use solver::{solve, Budget, SolveResult, Solver, SolverConfig};
