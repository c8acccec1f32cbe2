//! CNF encoding of the mapping problem and decoding of satisfying models.
//!
//! Constraint families:
//! - C1: every node picks exactly one placement variable (at-least-one plus
//!   pairwise at-most-one over its literal set).
//! - C2: two nodes never share a (PE, slot) kernel cell.
//! - C3: per dependency, a disjunction of routing candidates realized with
//!   fresh selector variables. A register-file candidate requires producer
//!   and consumer on the same PE; an output-register candidate allows
//!   neighbor-or-same PE but blocks every intervening write to the producer
//!   PE's output register.
//!
//! A dependency candidate pair is admissible when the effective iteration
//! gap g = distance + iter_dst - iter_src is 0 with slot_dst > slot_src, or
//! 1 with slot_dst <= slot_src: the value is consumed either within the same
//! kernel round or in the immediately following one.

use std::collections::BTreeMap;
use std::fmt;

use cnfsat::CnfFormula;
use thiserror::Error;

use crate::model::{CgraArch, Dfg, DfgEdge, NodeId, PeId};
use crate::schedule::Kms;

/// One placement literal: node `n` on PE `p` at kernel slot `c`, iteration `it`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarKey {
    pub node: NodeId,
    pub pe: PeId,
    pub slot: u32,
    pub iter: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RouteKind {
    /// Value delivered through the producer PE's register file (same PE only);
    /// feasibility is settled later by register allocation.
    RegisterFile,
    /// Value read from the producer PE's output register; no other node may
    /// write that register between production and consumption.
    OutputRegister,
}

impl fmt::Display for RouteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteKind::RegisterFile => write!(f, "register_file"),
            RouteKind::OutputRegister => write!(f, "output_register"),
        }
    }
}

/// A routing candidate for one dependency, tied to a selector variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selector {
    pub edge_index: usize,
    pub candidate: usize,
    pub kind: RouteKind,
    pub src: VarKey,
    pub dst: VarKey,
}

/// Bijection between SAT variables and placement keys / selectors.
/// Placement variables come first (ordered by node, slot, iter, PE); selector
/// variables occupy the range above them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarTable {
    ii: u32,
    keys: Vec<VarKey>,
    by_node: BTreeMap<NodeId, Vec<i32>>,
    by_pe_slot: BTreeMap<(PeId, u32), Vec<i32>>,
    selectors: Vec<Selector>,
}

impl VarTable {
    /// The initiation interval this table was enumerated for.
    pub fn ii(&self) -> u32 {
        self.ii
    }

    pub fn num_placement_vars(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn num_vars(&self) -> u32 {
        (self.keys.len() + self.selectors.len()) as u32
    }

    /// Literal set L(n): the placement variables of node `n`.
    pub fn literals_of(&self, n: NodeId) -> &[i32] {
        self.by_node.get(&n).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Placement variables occupying kernel cell (pe, slot), any iteration.
    pub fn literals_at(&self, pe: PeId, slot: u32) -> &[i32] {
        self.by_pe_slot
            .get(&(pe, slot))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn key_of(&self, var: i32) -> Option<&VarKey> {
        let idx = var.checked_sub(1)? as usize;
        self.keys.get(idx)
    }

    pub fn var_of(&self, key: &VarKey) -> Option<i32> {
        self.literals_of(key.node)
            .iter()
            .copied()
            .find(|&v| self.key_of(v) == Some(key))
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    pub fn selector_var(&self, selector_index: usize) -> i32 {
        (self.keys.len() + selector_index + 1) as i32
    }

    fn alloc_selector(&mut self, selector: Selector) -> i32 {
        self.selectors.push(selector);
        self.selector_var(self.selectors.len() - 1)
    }

    /// Human-readable meaning of every variable, for DIMACS comments.
    pub fn dimacs_comments(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.keys.len() + self.selectors.len());
        for (i, key) in self.keys.iter().enumerate() {
            out.push(format!(
                "var {} = node {} pe {} slot {} iter {}",
                i + 1,
                key.node,
                key.pe,
                key.slot,
                key.iter
            ));
        }
        for (i, sel) in self.selectors.iter().enumerate() {
            out.push(format!(
                "sel {} = edge {}->{} cand {}",
                self.selector_var(i),
                sel.src.node,
                sel.dst.node,
                sel.candidate
            ));
        }
        out
    }
}

/// The mapping problem is unsatisfiable at this II for a structural reason;
/// no formula needs solving.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Infeasibility {
    #[error("no candidate placements: {nodes} nodes exceed {cells} kernel cells (II x PEs)")]
    InsufficientCells { nodes: usize, cells: usize },
    #[error(
        "no candidate placements: {nodes} memory nodes exceed {cells} kernel cells on memory PEs"
    )]
    InsufficientMemoryCells { nodes: usize, cells: usize },
    #[error("node {node} has no admissible placement")]
    NodeUnplaceable { node: NodeId },
    #[error("dependency {src}->{dst} (distance {distance}) has no routing candidate")]
    EdgeUnroutable {
        src: NodeId,
        dst: NodeId,
        distance: u32,
    },
}

/// Decoded model: where every node runs and how every dependency is delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub pe: PeId,
    pub slot: u32,
    pub iter: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub src: NodeId,
    pub dst: NodeId,
    pub distance: u32,
    pub kind: RouteKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub ii: u32,
    pub placements: BTreeMap<NodeId, Placement>,
    pub routes: Vec<Route>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("node {node} has {count} true placement variables; the encoding guarantees one")]
    NotExactlyOne { node: NodeId, count: usize },
    #[error("dependency {src}->{dst} has no true selector")]
    NoRouteSelected { src: NodeId, dst: NodeId },
    #[error("selector endpoints disagree with decoded placements for edge {src}->{dst}")]
    InconsistentSelector { src: NodeId, dst: NodeId },
}

/// Enumerate placement variables: one per (node, occurrence, admissible PE),
/// ordered by node, then slot, then iter, then PE.
pub fn enumerate_vars(kms: &Kms, arch: &CgraArch, dfg: &Dfg) -> Result<VarTable, Infeasibility> {
    let mut table = VarTable {
        ii: kms.ii(),
        keys: Vec::new(),
        by_node: BTreeMap::new(),
        by_pe_slot: BTreeMap::new(),
        selectors: Vec::new(),
    };
    for id in dfg.node_ids() {
        let node = dfg.node(id).expect("node_ids come from the DFG");
        let pes = arch.admissible_pes(node);
        let mut lits = Vec::new();
        for &(slot, iter) in kms.occ(id) {
            for &pe in &pes {
                let key = VarKey {
                    node: id,
                    pe,
                    slot,
                    iter,
                };
                table.keys.push(key);
                let var = table.keys.len() as i32;
                lits.push(var);
                table.by_pe_slot.entry((pe, slot)).or_default().push(var);
            }
        }
        if lits.is_empty() {
            return Err(Infeasibility::NodeUnplaceable { node: id });
        }
        table.by_node.insert(id, lits);
    }
    Ok(table)
}

/// C1 for one node: at-least-one over L(n) plus pairwise at-most-one.
pub fn encode_c1(node: NodeId, table: &VarTable) -> Vec<Vec<i32>> {
    let lits = table.literals_of(node);
    let mut clauses = Vec::with_capacity(1 + lits.len() * (lits.len() - 1) / 2);
    clauses.push(lits.to_vec());
    for i in 0..lits.len() {
        for j in (i + 1)..lits.len() {
            clauses.push(vec![-lits[i], -lits[j]]);
        }
    }
    clauses
}

/// C2: for every kernel cell, forbid co-location of distinct nodes.
pub fn encode_c2(table: &VarTable) -> Vec<Vec<i32>> {
    let mut clauses = Vec::new();
    for lits in table.by_pe_slot.values() {
        for i in 0..lits.len() {
            for j in (i + 1)..lits.len() {
                let a = table.key_of(lits[i]).unwrap();
                let b = table.key_of(lits[j]).unwrap();
                if a.node != b.node {
                    clauses.push(vec![-lits[i], -lits[j]]);
                }
            }
        }
    }
    clauses
}

/// Effective iteration gap of a candidate pair: how many kernel rounds lie
/// between production and consumption. Admissible gaps are 0 (same round,
/// strictly later slot) and 1 (next round, slot at or before the producer's).
fn effective_gap(edge: &DfgEdge, src: &VarKey, dst: &VarKey) -> i64 {
    edge.distance as i64 + dst.iter as i64 - src.iter as i64
}

fn pair_admissible(edge: &DfgEdge, src: &VarKey, dst: &VarKey, arch: &CgraArch) -> bool {
    if !arch.are_neighbors(src.pe, dst.pe) {
        return false;
    }
    if (dst.iter as i64 - src.iter as i64).abs() > 1 {
        return false;
    }
    match effective_gap(edge, src, dst) {
        0 => dst.slot > src.slot,
        1 => dst.slot <= src.slot,
        _ => false,
    }
}

/// All admissible (producer literal, consumer literal) pairs for one
/// dependency, in deterministic L(src) x L(dst) order. Only literals that
/// exist for the endpoints participate, so memory restrictions carry over.
pub fn candidate_pairs(
    edge: &DfgEdge,
    kms: &Kms,
    arch: &CgraArch,
    dfg: &Dfg,
) -> Vec<(VarKey, VarKey)> {
    let src_pes = arch.admissible_pes(dfg.node(edge.src).expect("edge endpoints exist"));
    let dst_pes = arch.admissible_pes(dfg.node(edge.dst).expect("edge endpoints exist"));
    let mut pairs = Vec::new();
    for &(s_slot, s_iter) in kms.occ(edge.src) {
        for &s_pe in &src_pes {
            let src = VarKey {
                node: edge.src,
                pe: s_pe,
                slot: s_slot,
                iter: s_iter,
            };
            for &(d_slot, d_iter) in kms.occ(edge.dst) {
                for &d_pe in &dst_pes {
                    let dst = VarKey {
                        node: edge.dst,
                        pe: d_pe,
                        slot: d_slot,
                        iter: d_iter,
                    };
                    if pair_admissible(edge, &src, &dst, arch) {
                        pairs.push((src, dst));
                    }
                }
            }
        }
    }
    pairs
}

/// Kernel slots strictly between production and consumption, in execution
/// order, wrapped at the kernel boundary for gap-1 pairs.
pub fn blocking_slots(src: &VarKey, dst: &VarKey, gap: i64, ii: u32) -> Vec<u32> {
    match gap {
        0 => (src.slot + 1..dst.slot).collect(),
        1 => (src.slot + 1..ii).chain(0..dst.slot).collect(),
        _ => unreachable!("only gaps 0 and 1 are admissible"),
    }
}

/// C3 for one dependency: allocate one selector per candidate; emit the
/// at-least-one clause, selector-to-endpoint links, and, for output-register
/// candidates, one blocking clause per potentially clobbering literal.
pub fn encode_c3_dep(
    edge_index: usize,
    edge: &DfgEdge,
    pairs: &[(VarKey, VarKey)],
    kms: &Kms,
    table: &mut VarTable,
) -> Vec<Vec<i32>> {
    assert!(
        !pairs.is_empty(),
        "caller guarantees a non-empty candidate list"
    );
    let mut selector_vars = Vec::new();
    let mut link_clauses: Vec<Vec<i32>> = Vec::new();
    let mut candidate = 0usize;
    for &(src, dst) in pairs {
        let src_var = table
            .var_of(&src)
            .expect("candidate endpoints are enumerated");
        let dst_var = table
            .var_of(&dst)
            .expect("candidate endpoints are enumerated");
        let gap = effective_gap(edge, &src, &dst);
        let mut kinds = Vec::with_capacity(2);
        if src.pe == dst.pe {
            kinds.push(RouteKind::RegisterFile);
        }
        kinds.push(RouteKind::OutputRegister);
        for kind in kinds {
            let s = table.alloc_selector(Selector {
                edge_index,
                candidate,
                kind,
                src,
                dst,
            });
            candidate += 1;
            selector_vars.push(s);
            link_clauses.push(vec![-s, src_var]);
            link_clauses.push(vec![-s, dst_var]);
            if kind == RouteKind::OutputRegister {
                for slot in blocking_slots(&src, &dst, gap, kms.ii()) {
                    for &z in table.literals_at(src.pe, slot) {
                        let z_key = table.key_of(z).unwrap();
                        if z_key.node != edge.dst {
                            link_clauses.push(vec![-s, -z]);
                        }
                    }
                }
            }
        }
    }
    let mut clauses = Vec::with_capacity(1 + link_clauses.len());
    clauses.push(selector_vars);
    clauses.extend(link_clauses);
    clauses
}

/// Build the full formula: C1 over all nodes, C2, then C3 per dependency in
/// document order. Structural infeasibilities short-circuit as typed results.
pub fn build_formula(
    dfg: &Dfg,
    kms: &Kms,
    arch: &CgraArch,
) -> Result<(CnfFormula, VarTable), Infeasibility> {
    let cells = kms.ii() as usize * arch.num_pes();
    if dfg.nodes().len() > cells {
        return Err(Infeasibility::InsufficientCells {
            nodes: dfg.nodes().len(),
            cells,
        });
    }
    if !arch.memory_pes.is_empty() {
        let mem_nodes = dfg.nodes().iter().filter(|n| n.needs_memory).count();
        let mem_cells = kms.ii() as usize * arch.memory_pes.len();
        if mem_nodes > mem_cells {
            return Err(Infeasibility::InsufficientMemoryCells {
                nodes: mem_nodes,
                cells: mem_cells,
            });
        }
    }

    let mut table = enumerate_vars(kms, arch, dfg)?;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    for node in dfg.node_ids() {
        clauses.extend(encode_c1(node, &table));
    }
    clauses.extend(encode_c2(&table));
    for (edge_index, edge) in dfg.edges().iter().enumerate() {
        let pairs = candidate_pairs(edge, kms, arch, dfg);
        if pairs.is_empty() {
            return Err(Infeasibility::EdgeUnroutable {
                src: edge.src,
                dst: edge.dst,
                distance: edge.distance,
            });
        }
        clauses.extend(encode_c3_dep(edge_index, edge, &pairs, kms, &mut table));
    }

    let mut cnf = CnfFormula::new(table.num_vars());
    for clause in clauses {
        cnf.add_clause(&clause)
            .expect("encoder emits well-formed clauses");
    }
    Ok((cnf, table))
}

/// Invert a satisfying assignment into a [`Mapping`].
pub fn decode_model(model: &[bool], table: &VarTable, dfg: &Dfg) -> Result<Mapping, DecodeError> {
    let mut placements = BTreeMap::new();
    for id in dfg.node_ids() {
        let true_vars: Vec<i32> = table
            .literals_of(id)
            .iter()
            .copied()
            .filter(|&v| model[(v - 1) as usize])
            .collect();
        if true_vars.len() != 1 {
            return Err(DecodeError::NotExactlyOne {
                node: id,
                count: true_vars.len(),
            });
        }
        let key = table.key_of(true_vars[0]).unwrap();
        placements.insert(
            id,
            Placement {
                pe: key.pe,
                slot: key.slot,
                iter: key.iter,
            },
        );
    }

    let mut routes = Vec::with_capacity(dfg.edges().len());
    for (edge_index, edge) in dfg.edges().iter().enumerate() {
        let chosen = table
            .selectors()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.edge_index == edge_index)
            .find(|(i, _)| model[(table.selector_var(*i) - 1) as usize]);
        let (_, selector) = chosen.ok_or(DecodeError::NoRouteSelected {
            src: edge.src,
            dst: edge.dst,
        })?;
        let src_place = &placements[&edge.src];
        let dst_place = &placements[&edge.dst];
        let consistent = selector.src.pe == src_place.pe
            && selector.src.slot == src_place.slot
            && selector.src.iter == src_place.iter
            && selector.dst.pe == dst_place.pe
            && selector.dst.slot == dst_place.slot
            && selector.dst.iter == dst_place.iter;
        if !consistent {
            return Err(DecodeError::InconsistentSelector {
                src: edge.src,
                dst: edge.dst,
            });
        }
        routes.push(Route {
            src: edge.src,
            dst: edge.dst,
            distance: edge.distance,
            kind: selector.kind,
        });
    }
    Ok(Mapping {
        ii: table.ii(),
        placements,
        routes,
    })
}


#[cfg(test)]
mod blocking_tests {
    use super::*;

    #[test]
    fn window_slots_follow_the_kernel_order() {
        let key = |slot: u32, iter: u32| VarKey {
            node: 1,
            pe: PeId(0),
            slot,
            iter,
        };
        // Same round: strictly between.
        assert_eq!(blocking_slots(&key(0, 0), &key(3, 0), 0, 5), vec![1, 2]);
        assert_eq!(
            blocking_slots(&key(0, 0), &key(1, 0), 0, 5),
            Vec::<u32>::new()
        );
        // Next round: wraps across the kernel boundary.
        assert_eq!(blocking_slots(&key(2, 0), &key(1, 1), 1, 4), vec![3, 0]);
        assert_eq!(
            blocking_slots(&key(3, 0), &key(0, 1), 1, 4),
            Vec::<u32>::new()
        );
        // Consumer at the producer's slot one round later: everything else.
        assert_eq!(blocking_slots(&key(1, 0), &key(1, 1), 1, 4), vec![2, 3, 0]);
    }
}
