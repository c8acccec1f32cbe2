//! Versioned JSON serialization of mapping reports.
//!
//! The on-disk schema is strict: unknown fields and foreign versions are
//! rejected on re-read so stale tooling fails loudly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{IiAttempt, IiVerdict, MapStatus, MappingReport};
use crate::encoder::{Mapping, Placement, Route, RouteKind};
use crate::model::{NodeId, PeId};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub version: u32,
    pub status: StatusField,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ii: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mapping: Option<MappingFile>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub registers: Vec<RegisterEntry>,
    pub log: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusField {
    Mapped,
    NoMappingUpToCap,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingFile {
    pub ii: u32,
    pub placements: Vec<PlacementEntry>,
    pub routes: Vec<RouteEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementEntry {
    pub node: NodeId,
    pub pe: usize,
    pub slot: u32,
    pub iter: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEntry {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(default)]
    pub distance: u32,
    pub kind: RouteKindField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKindField {
    RegisterFile,
    OutputRegister,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterEntry {
    /// Producer of the value held in the register.
    pub node: NodeId,
    /// PE owning the register file (the producer's PE).
    pub pe: usize,
    pub reg: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub ii: u32,
    pub verdict: String,
    pub solve_seconds: f64,
    pub vars: u32,
    pub clauses: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    Malformed(String),
    #[error("unsupported report version {found}; this tool reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("report has no mapping section")]
    NoMapping,
}

impl From<&MappingReport> for ReportFile {
    fn from(report: &MappingReport) -> Self {
        ReportFile {
            version: REPORT_VERSION,
            status: match report.status {
                MapStatus::Mapped => StatusField::Mapped,
                MapStatus::NoMappingUpToCap => StatusField::NoMappingUpToCap,
                MapStatus::TimedOut => StatusField::TimedOut,
            },
            ii: report.ii,
            mapping: report.mapping.as_ref().map(mapping_to_file),
            registers: report
                .registers
                .as_ref()
                .map(|coloring| {
                    coloring
                        .assignments()
                        .iter()
                        .map(|(&node, &reg)| RegisterEntry {
                            node,
                            pe: report
                                .mapping
                                .as_ref()
                                .map(|m| m.placements[&node].pe.0)
                                .unwrap_or_default(),
                            reg,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            log: report
                .log
                .iter()
                .map(|a| LogEntry {
                    ii: a.ii,
                    verdict: a.verdict.as_str().to_string(),
                    solve_seconds: a.solve_seconds,
                    vars: a.num_vars,
                    clauses: a.num_clauses,
                })
                .collect(),
        }
    }
}

fn mapping_to_file(mapping: &Mapping) -> MappingFile {
    MappingFile {
        ii: mapping.ii,
        placements: mapping
            .placements
            .iter()
            .map(|(&node, p)| PlacementEntry {
                node,
                pe: p.pe.0,
                slot: p.slot,
                iter: p.iter,
            })
            .collect(),
        routes: mapping
            .routes
            .iter()
            .map(|r| RouteEntry {
                src: r.src,
                dst: r.dst,
                distance: r.distance,
                kind: match r.kind {
                    RouteKind::RegisterFile => RouteKindField::RegisterFile,
                    RouteKind::OutputRegister => RouteKindField::OutputRegister,
                },
            })
            .collect(),
    }
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report files always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let file: ReportFile =
            serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
        if file.version != REPORT_VERSION {
            return Err(ReportError::Version {
                found: file.version,
                expected: REPORT_VERSION,
            });
        }
        Ok(file)
    }

    /// Reconstruct the in-memory mapping for validation.
    pub fn to_mapping(&self) -> Result<Mapping, ReportError> {
        let mapping = self.mapping.as_ref().ok_or(ReportError::NoMapping)?;
        Ok(Mapping {
            ii: mapping.ii,
            placements: mapping
                .placements
                .iter()
                .map(|p| {
                    (
                        p.node,
                        Placement {
                            pe: PeId(p.pe),
                            slot: p.slot,
                            iter: p.iter,
                        },
                    )
                })
                .collect(),
            routes: mapping
                .routes
                .iter()
                .map(|r| Route {
                    src: r.src,
                    dst: r.dst,
                    distance: r.distance,
                    kind: match r.kind {
                        RouteKindField::RegisterFile => RouteKind::RegisterFile,
                        RouteKindField::OutputRegister => RouteKind::OutputRegister,
                    },
                })
                .collect(),
        })
    }
}

/// Round-trip helper used by the driver-facing callers.
pub fn attempt_from_log_entry(entry: &LogEntry) -> IiAttempt {
    let verdict = match entry.verdict.as_str() {
        "trivially_unsat" => IiVerdict::TriviallyUnsat,
        "unsat" => IiVerdict::Unsat,
        "coloring_failed" => IiVerdict::ColoringFailed,
        "mapped" => IiVerdict::Mapped,
        _ => IiVerdict::TimedOut,
    };
    IiAttempt {
        ii: entry.ii,
        verdict,
        solve_seconds: entry.solve_seconds,
        num_vars: entry.vars,
        num_clauses: entry.clauses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ReportFile {
        ReportFile {
            version: REPORT_VERSION,
            status: StatusField::Mapped,
            ii: Some(3),
            mapping: Some(MappingFile {
                ii: 3,
                placements: vec![PlacementEntry {
                    node: 1,
                    pe: 0,
                    slot: 0,
                    iter: 0,
                }],
                routes: vec![RouteEntry {
                    src: 1,
                    dst: 1,
                    distance: 1,
                    kind: RouteKindField::RegisterFile,
                }],
            }),
            registers: vec![RegisterEntry { node: 1, pe: 0, reg: 0 }],
            log: vec![LogEntry {
                ii: 3,
                verdict: "mapped".into(),
                solve_seconds: 0.01,
                vars: 10,
                clauses: 20,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let report = sample();
        let text = report.to_json();
        assert_eq!(ReportFile::from_json(&text).unwrap(), report);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        value["surprise"] = serde_json::json!(true);
        let text = value.to_string();
        assert!(matches!(
            ReportFile::from_json(&text),
            Err(ReportError::Malformed(_))
        ));
    }

    #[test]
    fn foreign_versions_are_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        value["version"] = serde_json::json!(2);
        let text = value.to_string();
        assert_eq!(
            ReportFile::from_json(&text),
            Err(ReportError::Version {
                found: 2,
                expected: REPORT_VERSION
            })
        );
    }

    #[test]
    fn mapping_reconstruction() {
        let mapping = sample().to_mapping().unwrap();
        assert_eq!(mapping.ii, 3);
        assert_eq!(mapping.placements[&1].pe, PeId(0));
        assert_eq!(mapping.routes[0].kind, RouteKind::RegisterFile);
    }
}
