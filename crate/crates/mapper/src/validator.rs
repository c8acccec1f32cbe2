//! Independent legality checking for mappings, plus a brute-force mapping
//! oracle. Both re-derive the legality predicate from the constraint
//! definitions and deliberately share no code with the encoder.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::encoder::{Mapping, Placement, Route, RouteKind};
use crate::model::{CgraArch, Dfg, NodeId, PeId};
use crate::regalloc;
use crate::schedule::{build_kms, mobility_schedule};

/// A single legality violation, with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingPlacement {
        node: NodeId,
    },
    UnknownNode {
        node: NodeId,
    },
    OutsideWindow {
        node: NodeId,
        pe: PeId,
        slot: u32,
        iter: u32,
    },
    Collision {
        pe: PeId,
        slot: u32,
        first: NodeId,
        second: NodeId,
    },
    NotAdjacent {
        src: NodeId,
        dst: NodeId,
        src_pe: PeId,
        dst_pe: PeId,
    },
    BadTiming {
        src: NodeId,
        dst: NodeId,
        distance: u32,
        gap: i64,
    },
    RouteNotSamePe {
        src: NodeId,
        dst: NodeId,
    },
    OutputRegisterClobbered {
        src: NodeId,
        dst: NodeId,
        blocker: NodeId,
        slot: u32,
    },
    RegisterPressure {
        pe: PeId,
        producer: NodeId,
        live: usize,
    },
    MissingRoute {
        src: NodeId,
        dst: NodeId,
        distance: u32,
    },
    SpuriousRoute {
        src: NodeId,
        dst: NodeId,
        distance: u32,
    },
    StaleRead {
        src: NodeId,
        dst: NodeId,
        cycle: u32,
        found: Option<NodeId>,
    },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::MissingPlacement { .. } => "E_PLACE_MISSING",
            Violation::UnknownNode { .. } => "E_NODE_UNKNOWN",
            Violation::OutsideWindow { .. } => "E_WINDOW",
            Violation::Collision { .. } => "E_COLLISION",
            Violation::NotAdjacent { .. } => "E_ADJACENCY",
            Violation::BadTiming { .. } => "E_TIMING",
            Violation::RouteNotSamePe { .. } => "E_ROUTE_PE",
            Violation::OutputRegisterClobbered { .. } => "E_OUTPUT_CLOBBER",
            Violation::RegisterPressure { .. } => "E_REG_PRESSURE",
            Violation::MissingRoute { .. } => "E_ROUTE_MISSING",
            Violation::SpuriousRoute { .. } => "E_ROUTE_SPURIOUS",
            Violation::StaleRead { .. } => "E_STALE_READ",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::MissingPlacement { node } => write!(f, "node {node} is not placed"),
            Violation::UnknownNode { node } => write!(f, "placement for unknown node {node}"),
            Violation::OutsideWindow {
                node,
                pe,
                slot,
                iter,
            } => {
                write!(
                    f,
                    "node {node} at (pe {pe}, slot {slot}, iter {iter}) is outside its window"
                )
            }
            Violation::Collision {
                pe,
                slot,
                first,
                second,
            } => {
                write!(
                    f,
                    "nodes {first} and {second} collide on pe {pe} slot {slot}"
                )
            }
            Violation::NotAdjacent {
                src,
                dst,
                src_pe,
                dst_pe,
            } => {
                write!(
                    f,
                    "edge {src}->{dst} spans non-adjacent PEs {src_pe} and {dst_pe}"
                )
            }
            Violation::BadTiming {
                src,
                dst,
                distance,
                gap,
            } => {
                write!(
                    f,
                    "edge {src}->{dst} (distance {distance}) has illegal timing (gap {gap})"
                )
            }
            Violation::RouteNotSamePe { src, dst } => {
                write!(
                    f,
                    "register-file route {src}->{dst} endpoints are on different PEs"
                )
            }
            Violation::OutputRegisterClobbered {
                src,
                dst,
                blocker,
                slot,
            } => {
                write!(
                    f,
                    "output register of {src}->{dst} overwritten by {blocker} at slot {slot}"
                )
            }
            Violation::RegisterPressure { pe, producer, live } => {
                write!(
                    f,
                    "pe {pe} needs more registers: value of {producer} among {live} live"
                )
            }
            Violation::MissingRoute { src, dst, distance } => {
                write!(f, "edge {src}->{dst} (distance {distance}) has no route")
            }
            Violation::SpuriousRoute { src, dst, distance } => {
                write!(
                    f,
                    "route {src}->{dst} (distance {distance}) matches no DFG edge"
                )
            }
            Violation::StaleRead {
                src,
                dst,
                cycle,
                found,
            } => match found {
                Some(n) => write!(
                    f,
                    "consumer {dst} reads value of {n} instead of {src} at cycle {cycle}"
                ),
                None => write!(
                    f,
                    "consumer {dst} reads uninitialized storage for {src} at cycle {cycle}"
                ),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Effective iteration gap of a routed dependency.
fn gap_of(distance: u32, src: &Placement, dst: &Placement) -> i64 {
    distance as i64 + dst.iter as i64 - src.iter as i64
}

fn timing_ok(gap: i64, src: &Placement, dst: &Placement) -> bool {
    match gap {
        0 => dst.slot > src.slot,
        1 => dst.slot <= src.slot,
        _ => false,
    }
}

/// Kernel slots strictly between production and consumption.
fn window_slots(src_slot: u32, dst_slot: u32, gap: i64, ii: u32) -> Vec<u32> {
    match gap {
        0 => (src_slot + 1..dst_slot).collect(),
        1 => (src_slot + 1..ii).chain(0..dst_slot).collect(),
        _ => Vec::new(),
    }
}

/// Check a structurally complete mapping, in constraint order: placement
/// windows, cell collisions, adjacency, timing, output-register blocking,
/// register pressure, and finally a 3-period unrolled read simulation.
pub fn validate_mapping(mapping: &Mapping, dfg: &Dfg, arch: &CgraArch) -> ValidationReport {
    let mut report = ValidationReport::default();
    let ii = mapping.ii;
    let ms = mobility_schedule(dfg);
    let kms = build_kms(&ms, ii);

    // (a) every node placed exactly once, inside its folded window.
    let ids = dfg.node_ids();
    for &id in &ids {
        match mapping.placements.get(&id) {
            None => report
                .violations
                .push(Violation::MissingPlacement { node: id }),
            Some(p) => {
                let admissible = arch.admissible_pes(dfg.node(id).unwrap()).contains(&p.pe);
                if !kms.contains(id, p.slot, p.iter) || !admissible {
                    report.violations.push(Violation::OutsideWindow {
                        node: id,
                        pe: p.pe,
                        slot: p.slot,
                        iter: p.iter,
                    });
                }
            }
        }
    }
    for &id in mapping.placements.keys() {
        if dfg.node(id).is_none() {
            report.violations.push(Violation::UnknownNode { node: id });
        }
    }
    if !report.is_ok() {
        return report;
    }

    // (b) at most one node per kernel cell.
    let mut cells: BTreeMap<(PeId, u32), NodeId> = BTreeMap::new();
    for (&id, p) in &mapping.placements {
        if let Some(&first) = cells.get(&(p.pe, p.slot)) {
            report.violations.push(Violation::Collision {
                pe: p.pe,
                slot: p.slot,
                first,
                second: id,
            });
        } else {
            cells.insert((p.pe, p.slot), id);
        }
    }

    // Route bookkeeping: exactly one route per DFG edge.
    let mut routes: BTreeMap<(NodeId, NodeId, u32), &Route> = BTreeMap::new();
    for route in &mapping.routes {
        routes.insert((route.src, route.dst, route.distance), route);
    }
    for route in &mapping.routes {
        let known = dfg
            .edges()
            .iter()
            .any(|e| (e.src, e.dst, e.distance) == (route.src, route.dst, route.distance));
        if !known {
            report.violations.push(Violation::SpuriousRoute {
                src: route.src,
                dst: route.dst,
                distance: route.distance,
            });
        }
    }

    for edge in dfg.edges() {
        let Some(route) = routes.get(&(edge.src, edge.dst, edge.distance)) else {
            report.violations.push(Violation::MissingRoute {
                src: edge.src,
                dst: edge.dst,
                distance: edge.distance,
            });
            continue;
        };
        let src = &mapping.placements[&edge.src];
        let dst = &mapping.placements[&edge.dst];

        // (c) endpoints on neighboring (or identical) PEs.
        if !arch.are_neighbors(src.pe, dst.pe) {
            report.violations.push(Violation::NotAdjacent {
                src: edge.src,
                dst: edge.dst,
                src_pe: src.pe,
                dst_pe: dst.pe,
            });
            continue;
        }

        // (d) slot/iteration timing relation.
        let gap = gap_of(edge.distance, src, dst);
        if !timing_ok(gap, src, dst) {
            report.violations.push(Violation::BadTiming {
                src: edge.src,
                dst: edge.dst,
                distance: edge.distance,
                gap,
            });
            continue;
        }

        match route.kind {
            RouteKind::RegisterFile => {
                if src.pe != dst.pe {
                    report.violations.push(Violation::RouteNotSamePe {
                        src: edge.src,
                        dst: edge.dst,
                    });
                }
            }
            RouteKind::OutputRegister => {
                // (e) nobody else writes the producer PE's output register
                // inside the open window.
                for slot in window_slots(src.slot, dst.slot, gap, ii) {
                    if let Some(&occupant) = cells.get(&(src.pe, slot)) {
                        if occupant != edge.dst {
                            report.violations.push(Violation::OutputRegisterClobbered {
                                src: edge.src,
                                dst: edge.dst,
                                blocker: occupant,
                                slot,
                            });
                        }
                    }
                }
            }
        }
    }
    if !report.is_ok() {
        return report;
    }

    // (f) register pressure per PE.
    let coloring = match regalloc::allocate(mapping, arch.regs_per_pe, ii) {
        Ok(coloring) => Some(coloring),
        Err(failure) => {
            report.violations.push(Violation::RegisterPressure {
                pe: failure.pe,
                producer: failure.producer,
                live: failure.conflicting.len(),
            });
            None
        }
    };

    // Unrolled simulation: over several kernel periods, every consumer must
    // read exactly its producer's most recent value.
    simulate_reads(mapping, &coloring, &mut report, ii);
    report
}

/// Cycle-accurate replay over 4 kernel rounds. Writes land at the end of a
/// cycle, reads happen at the start, so "most recent" means strictly before
/// the reading cycle.
fn simulate_reads(
    mapping: &Mapping,
    coloring: &Option<regalloc::Coloring>,
    report: &mut ValidationReport,
    ii: u32,
) {
    const ROUNDS: u32 = 4;
    let horizon = ROUNDS * ii;

    // Output-register write log per PE: every node writes its own PE's
    // output register whenever it executes.
    let mut out_writes: BTreeMap<PeId, Vec<(u32, NodeId)>> = BTreeMap::new();
    for (&id, p) in &mapping.placements {
        for round in 0..ROUNDS {
            out_writes
                .entry(p.pe)
                .or_default()
                .push((round * ii + p.slot, id));
        }
    }
    for log in out_writes.values_mut() {
        log.sort_unstable();
    }

    for route in &mapping.routes {
        let src = &mapping.placements[&route.src];
        let dst = &mapping.placements[&route.dst];
        let gap = gap_of(route.distance, src, dst);
        let span = (gap * ii as i64 + dst.slot as i64 - src.slot as i64) as u32;

        match route.kind {
            RouteKind::OutputRegister => {
                let log = &out_writes[&src.pe];
                for read in (0..horizon).filter(|t| t % ii == dst.slot && *t >= span) {
                    let last = log.iter().rev().find(|(t, _)| *t < read);
                    let expected = read - span;
                    match last {
                        Some(&(t, n)) if t == expected && n == route.src => {}
                        Some(&(_, n)) => report.violations.push(Violation::StaleRead {
                            src: route.src,
                            dst: route.dst,
                            cycle: read,
                            found: Some(n),
                        }),
                        None => report.violations.push(Violation::StaleRead {
                            src: route.src,
                            dst: route.dst,
                            cycle: read,
                            found: None,
                        }),
                    }
                }
            }
            RouteKind::RegisterFile => {
                let Some(coloring) = coloring else { continue };
                let Some(reg) = coloring.register_of(route.src) else {
                    continue;
                };
                // Writers of this physical register: every producer sharing
                // the same (pe, register).
                let mut log: Vec<(u32, NodeId)> = Vec::new();
                for (&other, p) in &mapping.placements {
                    if p.pe == src.pe && coloring.register_of(other) == Some(reg) {
                        for round in 0..ROUNDS {
                            log.push((round * ii + p.slot, other));
                        }
                    }
                }
                log.sort_unstable();
                for read in (0..horizon).filter(|t| t % ii == dst.slot && *t >= span) {
                    let last = log.iter().rev().find(|(t, _)| *t < read);
                    let expected = read - span;
                    match last {
                        Some(&(t, n)) if t == expected && n == route.src => {}
                        Some(&(_, n)) => report.violations.push(Violation::StaleRead {
                            src: route.src,
                            dst: route.dst,
                            cycle: read,
                            found: Some(n),
                        }),
                        None => report.violations.push(Violation::StaleRead {
                            src: route.src,
                            dst: route.dst,
                            cycle: read,
                            found: None,
                        }),
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("instance beyond oracle caps: {nodes} nodes (cap {node_cap}), {pes} PEs (cap 4), II {ii} (cap 4)")]
    LimitsExceeded {
        nodes: usize,
        node_cap: usize,
        pes: usize,
        ii: u32,
    },
}

/// Exhaustive backtracking search for a legal mapping. Returns the
/// lexicographically first one (node-major, then slot, iter, PE) or `None`.
///
/// The search enumerates the same space the formula describes: folded
/// placement windows, cell exclusivity, neighbor adjacency, the timing gap
/// rule, and per-edge route availability (register-file on the same PE, or
/// output-register with a clean window).
pub fn brute_force_map(
    dfg: &Dfg,
    arch: &CgraArch,
    ii: u32,
    limit: Option<usize>,
) -> Result<Option<Mapping>, OracleError> {
    let node_cap = limit.unwrap_or(5);
    if dfg.nodes().len() > node_cap || arch.num_pes() > 4 || ii > 4 {
        return Err(OracleError::LimitsExceeded {
            nodes: dfg.nodes().len(),
            node_cap,
            pes: arch.num_pes(),
            ii,
        });
    }

    let ms = mobility_schedule(dfg);
    let kms = build_kms(&ms, ii);
    let ids = dfg.node_ids();

    // Choice list per node: (slot, iter, pe) in lexicographic order.
    let choices: Vec<Vec<Placement>> = ids
        .iter()
        .map(|&id| {
            let node = dfg.node(id).unwrap();
            let mut list = Vec::new();
            for &(slot, iter) in kms.occ(id) {
                for pe in arch.admissible_pes(node) {
                    list.push(Placement { pe, slot, iter });
                }
            }
            list
        })
        .collect();

    fn edges_ok(dfg: &Dfg, arch: &CgraArch, placed: &BTreeMap<NodeId, Placement>) -> bool {
        for edge in dfg.edges() {
            let (Some(src), Some(dst)) = (placed.get(&edge.src), placed.get(&edge.dst)) else {
                continue;
            };
            if !arch.are_neighbors(src.pe, dst.pe) {
                return false;
            }
            if !timing_ok(gap_of(edge.distance, src, dst), src, dst) {
                return false;
            }
        }
        true
    }

    fn route_for(
        edge_src: NodeId,
        edge_dst: NodeId,
        distance: u32,
        placed: &BTreeMap<NodeId, Placement>,
        ii: u32,
    ) -> Option<RouteKind> {
        let src = &placed[&edge_src];
        let dst = &placed[&edge_dst];
        if src.pe == dst.pe {
            return Some(RouteKind::RegisterFile);
        }
        let gap = gap_of(distance, src, dst);
        let clear = window_slots(src.slot, dst.slot, gap, ii)
            .into_iter()
            .all(|slot| {
                !placed
                    .iter()
                    .any(|(&n, p)| n != edge_dst && p.pe == src.pe && p.slot == slot)
            });
        clear.then_some(RouteKind::OutputRegister)
    }

    fn search(
        dfg: &Dfg,
        arch: &CgraArch,
        ids: &[NodeId],
        choices: &[Vec<Placement>],
        depth: usize,
        placed: &mut BTreeMap<NodeId, Placement>,
        ii: u32,
    ) -> Option<BTreeMap<NodeId, Placement>> {
        if depth == ids.len() {
            let all_routable = dfg
                .edges()
                .iter()
                .all(|e| route_for(e.src, e.dst, e.distance, placed, ii).is_some());
            return all_routable.then(|| placed.clone());
        }
        let id = ids[depth];
        for candidate in &choices[depth] {
            let collision = placed
                .values()
                .any(|p| p.pe == candidate.pe && p.slot == candidate.slot);
            if collision {
                continue;
            }
            placed.insert(id, candidate.clone());
            if edges_ok(dfg, arch, placed) {
                if let Some(done) = search(dfg, arch, ids, choices, depth + 1, placed, ii) {
                    return Some(done);
                }
            }
            placed.remove(&id);
        }
        None
    }

    let mut placed = BTreeMap::new();
    let Some(placements) = search(dfg, arch, &ids, &choices, 0, &mut placed, ii) else {
        return Ok(None);
    };
    let routes = dfg
        .edges()
        .iter()
        .map(|e| Route {
            src: e.src,
            dst: e.dst,
            distance: e.distance,
            kind: route_for(e.src, e.dst, e.distance, &placements, ii)
                .expect("checked during search"),
        })
        .collect();
    Ok(Some(Mapping {
        ii,
        placements,
        routes,
    }))
}
