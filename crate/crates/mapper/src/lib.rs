//! SAT-based modulo-scheduling mapper for CGRA meshes.
//!
//! The pipeline: build ASAP/ALAP schedules and fold them into a kernel
//! mobility schedule for a candidate II, encode placement/timing/routing
//! legality as CNF, solve with the embedded CDCL engine, decode the model,
//! and verify register-file pressure per PE by interference-graph coloring.
//! The driver iterates the II upward until a legal mapping appears.

pub mod cli;
pub mod driver;
pub mod encoder;
pub mod model;
pub mod regalloc;
pub mod report;
pub mod schedule;
pub mod validator;

pub use model::{CgraArch, Dfg, DfgEdge, DfgNode, NodeId, PeId};
