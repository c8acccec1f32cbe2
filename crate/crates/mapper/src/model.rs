//! CGRA architecture and data-flow graph model: ingestion, validation,
//! mesh geometry.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// A processing element, addressed row-major: `index = row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeId(pub usize);

impl fmt::Display for PeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mesh geometry plus per-PE register count and the optional set of PEs
/// allowed to execute memory operations (empty = no restriction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CgraArch {
    pub rows: usize,
    pub cols: usize,
    pub torus: bool,
    pub regs_per_pe: usize,
    pub memory_pes: BTreeSet<PeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("mesh dimensions must be at least 1x1, got {rows}x{cols}")]
    BadMeshDims { rows: usize, cols: usize },
    #[error("regs_per_pe must be at least 1, got {0}")]
    BadRegCount(usize),
    #[error("memory PE {pe} out of range for a mesh of {num_pes} PEs")]
    MemoryPeOutOfRange { pe: usize, num_pes: usize },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge {src}->{dst} references unknown node {missing}")]
    DanglingEdge {
        src: NodeId,
        dst: NodeId,
        missing: NodeId,
    },
    #[error("duplicate edge {src}->{dst} (distance {distance})")]
    DuplicateEdge {
        src: NodeId,
        dst: NodeId,
        distance: u32,
    },
    #[error("edge {src}->{dst} has distance {distance}; only distances 0 and 1 are supported")]
    DistanceTooLarge {
        src: NodeId,
        dst: NodeId,
        distance: u32,
    },
    #[error("zero-distance cycle: {}", format_cycle(.0))]
    ZeroDistanceCycle(Vec<NodeId>),
    #[error("a DFG must contain at least one node")]
    EmptyDfg,
}

fn format_cycle(cycle: &[NodeId]) -> String {
    let mut parts: Vec<String> = cycle.iter().map(|n| n.to_string()).collect();
    if let Some(first) = cycle.first() {
        parts.push(first.to_string());
    }
    parts.join(" -> ")
}

impl CgraArch {
    pub fn new(
        rows: usize,
        cols: usize,
        torus: bool,
        regs_per_pe: usize,
        memory_pes: BTreeSet<PeId>,
    ) -> Result<Self, ModelError> {
        if rows < 1 || cols < 1 {
            return Err(ModelError::BadMeshDims { rows, cols });
        }
        if regs_per_pe < 1 {
            return Err(ModelError::BadRegCount(regs_per_pe));
        }
        let num_pes = rows * cols;
        if let Some(pe) = memory_pes.iter().find(|pe| pe.0 >= num_pes) {
            return Err(ModelError::MemoryPeOutOfRange { pe: pe.0, num_pes });
        }
        Ok(CgraArch {
            rows,
            cols,
            torus,
            regs_per_pe,
            memory_pes,
        })
    }

    /// Plain mesh with the defaults: no torus, 4 registers, no memory restriction.
    pub fn mesh(rows: usize, cols: usize) -> Result<Self, ModelError> {
        CgraArch::new(rows, cols, false, 4, BTreeSet::new())
    }

    pub fn num_pes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pes(&self) -> impl Iterator<Item = PeId> {
        (0..self.num_pes()).map(PeId)
    }

    pub fn coords(&self, pe: PeId) -> (usize, usize) {
        (pe.0 / self.cols, pe.0 % self.cols)
    }

    pub fn pe_at(&self, row: usize, col: usize) -> PeId {
        PeId(row * self.cols + col)
    }

    /// The PE itself plus its mesh neighbors, clipped at borders
    /// (or wrapped when `torus`), sorted and deduplicated.
    pub fn neighbors(&self, pe: PeId) -> Vec<PeId> {
        let (r, c) = self.coords(pe);
        let mut out = BTreeSet::new();
        out.insert(pe);
        let steps: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        for (dr, dc) in steps {
            let nr = r as isize + dr;
            let nc = c as isize + dc;
            if self.torus {
                let nr = nr.rem_euclid(self.rows as isize) as usize;
                let nc = nc.rem_euclid(self.cols as isize) as usize;
                out.insert(self.pe_at(nr, nc));
            } else if nr >= 0 && nr < self.rows as isize && nc >= 0 && nc < self.cols as isize {
                out.insert(self.pe_at(nr as usize, nc as usize));
            }
        }
        out.into_iter().collect()
    }

    pub fn are_neighbors(&self, a: PeId, b: PeId) -> bool {
        self.neighbors(a).contains(&b)
    }

    /// PEs on which `node` may execute. Memory operations are restricted to
    /// `memory_pes` when that set is non-empty.
    pub fn admissible_pes(&self, node: &DfgNode) -> Vec<PeId> {
        if node.needs_memory && !self.memory_pes.is_empty() {
            self.memory_pes.iter().copied().collect()
        } else {
            self.pes().collect()
        }
    }
}

/// One loop-body instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfgNode {
    pub id: NodeId,
    pub opcode: String,
    pub needs_memory: bool,
}

/// A value dependency. `distance` 0 is an intra-iteration edge; 1 is a
/// loop-carried back-edge to the next iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub distance: u32,
}

/// A validated data-flow graph: the distance-0 subgraph is acyclic, ids are
/// unique, edges are deduplicated and reference existing nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfg {
    nodes: Vec<DfgNode>,
    edges: Vec<DfgEdge>,
}

impl Dfg {
    pub fn new(nodes: Vec<DfgNode>, edges: Vec<DfgEdge>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::EmptyDfg);
        }
        let mut ids = BTreeSet::new();
        for node in &nodes {
            if !ids.insert(node.id) {
                return Err(ModelError::DuplicateNode(node.id));
            }
        }
        let mut seen_edges = BTreeSet::new();
        for edge in &edges {
            for endpoint in [edge.src, edge.dst] {
                if !ids.contains(&endpoint) {
                    return Err(ModelError::DanglingEdge {
                        src: edge.src,
                        dst: edge.dst,
                        missing: endpoint,
                    });
                }
            }
            if edge.distance > 1 {
                return Err(ModelError::DistanceTooLarge {
                    src: edge.src,
                    dst: edge.dst,
                    distance: edge.distance,
                });
            }
            if !seen_edges.insert((edge.src, edge.dst, edge.distance)) {
                return Err(ModelError::DuplicateEdge {
                    src: edge.src,
                    dst: edge.dst,
                    distance: edge.distance,
                });
            }
        }
        let dfg = Dfg { nodes, edges };
        if let Some(cycle) = dfg.find_zero_distance_cycle() {
            return Err(ModelError::ZeroDistanceCycle(cycle));
        }
        Ok(dfg)
    }

    pub fn nodes(&self) -> &[DfgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[DfgEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&DfgNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Distance-0 predecessors of `id`.
    pub fn preds0(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.distance == 0 && e.dst == id)
            .map(|e| e.src)
    }

    /// Distance-0 successors of `id`.
    pub fn succs0(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.distance == 0 && e.src == id)
            .map(|e| e.dst)
    }

    fn find_zero_distance_cycle(&self) -> Option<Vec<NodeId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let ids = self.node_ids();
        let idx_of = |id: NodeId| ids.binary_search(&id).unwrap();
        let mut marks = vec![Mark::White; ids.len()];
        let mut stack: Vec<NodeId> = Vec::new();

        fn visit(
            dfg: &Dfg,
            idx_of: &dyn Fn(NodeId) -> usize,
            marks: &mut [Mark],
            stack: &mut Vec<NodeId>,
            id: NodeId,
        ) -> Option<Vec<NodeId>> {
            marks[idx_of(id)] = Mark::Grey;
            stack.push(id);
            for succ in dfg.succs0(id) {
                match marks[idx_of(succ)] {
                    Mark::Grey => {
                        let pos = stack.iter().position(|&n| n == succ).unwrap();
                        return Some(stack[pos..].to_vec());
                    }
                    Mark::White => {
                        if let Some(c) = visit(dfg, idx_of, marks, stack, succ) {
                            return Some(c);
                        }
                    }
                    Mark::Black => {}
                }
            }
            stack.pop();
            marks[idx_of(id)] = Mark::Black;
            None
        }

        for &id in &ids {
            if marks[idx_of(id)] == Mark::White {
                if let Some(c) = visit(self, &idx_of, &mut marks, &mut stack, id) {
                    return Some(c);
                }
            }
        }
        None
    }
}

// -- document formats ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DfgDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    opcode: String,
    #[serde(default, skip_serializing_if = "is_false")]
    needs_memory: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: NodeId,
    dst: NodeId,
    #[serde(default, skip_serializing_if = "is_zero")]
    distance: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDoc {
    rows: usize,
    cols: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    torus: bool,
    #[serde(default = "default_regs")]
    regs_per_pe: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    memory_pes: Vec<usize>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(d: &u32) -> bool {
    *d == 0
}

fn default_regs() -> usize {
    4
}

pub fn parse_dfg(text: &str) -> Result<Dfg, ModelError> {
    let doc: DfgDoc =
        serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| DfgNode {
            id: n.id,
            opcode: n.opcode,
            needs_memory: n.needs_memory,
        })
        .collect();
    let edges = doc
        .edges
        .into_iter()
        .map(|e| DfgEdge {
            src: e.src,
            dst: e.dst,
            distance: e.distance,
        })
        .collect();
    Dfg::new(nodes, edges)
}

pub fn serialize_dfg(dfg: &Dfg) -> String {
    let doc = DfgDoc {
        nodes: dfg
            .nodes
            .iter()
            .map(|n| NodeDoc {
                id: n.id,
                opcode: n.opcode.clone(),
                needs_memory: n.needs_memory,
            })
            .collect(),
        edges: dfg
            .edges
            .iter()
            .map(|e| EdgeDoc {
                src: e.src,
                dst: e.dst,
                distance: e.distance,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("DFG documents always serialize")
}

pub fn parse_arch(text: &str) -> Result<CgraArch, ModelError> {
    let doc: ArchDoc =
        serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let memory_pes = doc.memory_pes.into_iter().map(PeId).collect();
    CgraArch::new(doc.rows, doc.cols, doc.torus, doc.regs_per_pe, memory_pes)
}

pub fn serialize_arch(arch: &CgraArch) -> String {
    let doc = ArchDoc {
        rows: arch.rows,
        cols: arch.cols,
        torus: arch.torus,
        regs_per_pe: arch.regs_per_pe,
        memory_pes: arch.memory_pes.iter().map(|pe| pe.0).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("architecture documents always serialize")
}
