//! CNF formula container shared by the encoder, the solver, and DIMACS I/O.

use thiserror::Error;

/// A propositional formula in conjunctive normal form.
///
/// Variables are `1..=num_vars`; a literal is a non-zero signed integer whose
/// sign selects the polarity, exactly as in DIMACS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: u32,
    clauses: Vec<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    /// An empty clause makes the formula unsatisfiable by construction;
    /// callers are expected to short-circuit instead of adding one.
    #[error("empty clause")]
    EmptyClause,
    #[error("literal {lit} out of range for {num_vars} variables")]
    LiteralOutOfRange { lit: i32, num_vars: u32 },
}

impl CnfFormula {
    pub fn new(num_vars: u32) -> Self {
        CnfFormula {
            num_vars,
            clauses: Vec::new(),
        }
    }

    pub fn add_clause(&mut self, lits: &[i32]) -> Result<(), FormulaError> {
        if lits.is_empty() {
            return Err(FormulaError::EmptyClause);
        }
        for &lit in lits {
            if lit == 0 || lit.unsigned_abs() > self.num_vars {
                return Err(FormulaError::LiteralOutOfRange {
                    lit,
                    num_vars: self.num_vars,
                });
            }
        }
        self.clauses.push(lits.to_vec());
        Ok(())
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    /// True iff `lit` holds under `model` (index `var - 1`).
    pub fn lit_value(model: &[bool], lit: i32) -> bool {
        let v = model[(lit.unsigned_abs() - 1) as usize];
        if lit > 0 {
            v
        } else {
            !v
        }
    }
}

/// True iff every clause contains a literal satisfied by `model`.
///
/// `model` must be total: one boolean per variable, index `var - 1`.
pub fn check_model(cnf: &CnfFormula, model: &[bool]) -> bool {
    if model.len() != cnf.num_vars() as usize {
        return false;
    }
    cnf.clauses()
        .iter()
        .all(|clause| clause.iter().any(|&lit| CnfFormula::lit_value(model, lit)))
}
