//! DIMACS CNF reading and writing.

use thiserror::Error;

use crate::formula::{CnfFormula, FormulaError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimacsError {
    #[error("missing `p cnf` header")]
    MissingHeader,
    #[error("malformed header line: {0:?}")]
    BadHeader(String),
    #[error("malformed literal token: {0:?}")]
    BadLiteral(String),
    #[error("clause not terminated by 0")]
    UnterminatedClause,
    #[error("header declares {declared} clauses but {found} were read")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("clause rejected: {0}")]
    BadClause(#[from] FormulaError),
}

/// Render `cnf` in DIMACS form: `p cnf V C` then one zero-terminated clause
/// per line.
pub fn write_dimacs(cnf: &CnfFormula) -> String {
    write_dimacs_with_comments(cnf, &[])
}

/// Like [`write_dimacs`], with one `c `-prefixed comment line per entry
/// emitted ahead of the header.
pub fn write_dimacs_with_comments(cnf: &CnfFormula, comments: &[String]) -> String {
    let mut out = String::new();
    for comment in comments {
        out.push_str("c ");
        out.push_str(comment);
        out.push('\n');
    }
    out.push_str(&format!("p cnf {} {}\n", cnf.num_vars(), cnf.num_clauses()));
    for clause in cnf.clauses() {
        for lit in clause {
            out.push_str(&lit.to_string());
            out.push(' ');
        }
        out.push_str("0\n");
    }
    out
}

/// Parse DIMACS text. Comments are allowed anywhere; clauses may span lines.
/// The declared variable and clause counts are enforced.
pub fn read_dimacs(text: &str) -> Result<CnfFormula, DimacsError> {
    let mut header: Option<(u32, usize)> = None;
    let mut cnf = CnfFormula::new(0);
    let mut declared_clauses = 0usize;
    let mut found = 0usize;
    let mut current: Vec<i32> = Vec::new();

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(DimacsError::BadHeader(line.to_string()));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                ["p", "cnf", vars, clauses] => {
                    vars.parse::<u32>().ok().zip(clauses.parse::<usize>().ok())
                }
                _ => None,
            };
            let (num_vars, num_clauses) =
                parsed.ok_or_else(|| DimacsError::BadHeader(line.to_string()))?;
            header = Some((num_vars, num_clauses));
            declared_clauses = num_clauses;
            cnf = CnfFormula::new(num_vars);
            continue;
        }
        if header.is_none() {
            return Err(DimacsError::MissingHeader);
        }
        for token in line.split_whitespace() {
            let lit: i32 = token
                .parse()
                .map_err(|_| DimacsError::BadLiteral(token.to_string()))?;
            if lit == 0 {
                cnf.add_clause(&current)?;
                current.clear();
                found += 1;
            } else {
                current.push(lit);
            }
        }
    }
    if header.is_none() {
        return Err(DimacsError::MissingHeader);
    }
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause);
    }
    if found != declared_clauses {
        return Err(DimacsError::ClauseCountMismatch {
            declared: declared_clauses,
            found,
        });
    }
    Ok(cnf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_the_documented_form() {
        let mut cnf = CnfFormula::new(2);
        cnf.add_clause(&[1, -2]).unwrap();
        assert_eq!(write_dimacs(&cnf), "p cnf 2 1\n1 -2 0\n");
    }

    #[test]
    fn round_trip_structural_equality() {
        let mut cnf = CnfFormula::new(4);
        cnf.add_clause(&[1, -2, 3]).unwrap();
        cnf.add_clause(&[-4]).unwrap();
        cnf.add_clause(&[2, 4]).unwrap();
        let text = write_dimacs(&cnf);
        assert_eq!(read_dimacs(&text).unwrap(), cnf);
    }

    #[test]
    fn clause_count_mismatch_is_an_error() {
        let text = "p cnf 2 2\n1 -2 0\n";
        assert_eq!(
            read_dimacs(text),
            Err(DimacsError::ClauseCountMismatch {
                declared: 2,
                found: 1
            })
        );
    }

    #[test]
    fn bad_header_is_an_error() {
        assert!(matches!(
            read_dimacs("p cnf x 1\n1 0\n"),
            Err(DimacsError::BadHeader(_))
        ));
        assert!(matches!(
            read_dimacs("1 0\n"),
            Err(DimacsError::MissingHeader)
        ));
    }

    #[test]
    fn bad_literal_is_an_error() {
        assert!(matches!(
            read_dimacs("p cnf 2 1\n1 -x 0\n"),
            Err(DimacsError::BadLiteral(_))
        ));
    }

    #[test]
    fn clauses_may_span_lines_and_comments_interleave() {
        let text = "c preamble\np cnf 3 1\nc middle\n1 -2\n3 0\n";
        let cnf = read_dimacs(text).unwrap();
        assert_eq!(cnf.clauses(), &[vec![1, -2, 3]]);
    }

    #[test]
    fn literal_out_of_declared_range_is_an_error() {
        assert!(matches!(
            read_dimacs("p cnf 2 1\n3 0\n"),
            Err(DimacsError::BadClause(_))
        ));
    }
}
