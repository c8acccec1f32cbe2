//! Register-file pressure validation by liveness analysis and
//! interference-graph coloring.
//!
//! Only register-file routes occupy registers; output-register delivery is
//! policed by the encoder's blocking clauses. Each producer defines exactly
//! one value, so intervals are grouped per producer and stretched to the
//! last register-file consumer. A value written at the end of cycle `t` and
//! read at the start of cycle `t + span` occupies the cycle boundaries
//! `t+1 ..= t+span`, taken modulo II as a circular slot set.

use std::collections::{BTreeMap, BTreeSet};

use crate::encoder::{Mapping, RouteKind};
use crate::model::{NodeId, PeId};

/// Liveness of one SSA value inside the kernel, on its producer's PE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveInterval {
    pub producer: NodeId,
    pub pe: PeId,
    /// Absolute production cycle (slot + iter * II).
    pub start: u32,
    /// Absolute consumption cycles, one per register-file consumer.
    pub ends: Vec<u32>,
    /// Longest production-to-consumption span in cycles, within [1, II].
    pub span: u32,
    /// True when the liveness crosses the kernel boundary modulo II.
    pub wraps: bool,
}

impl LiveInterval {
    /// Kernel-slot boundaries at which the value must still reside in its
    /// register.
    pub fn occupied_slots(&self, ii: u32) -> BTreeSet<u32> {
        let slot = self.start % ii;
        (1..=self.span).map(|j| (slot + j) % ii).collect()
    }

    pub fn overlaps(&self, other: &LiveInterval, ii: u32) -> bool {
        !self
            .occupied_slots(ii)
            .is_disjoint(&other.occupied_slots(ii))
    }
}

/// Intervals of one PE plus their pairwise circular-overlap edges.
#[derive(Debug, Clone)]
pub struct InterferenceGraph {
    pub pe: PeId,
    pub intervals: Vec<LiveInterval>,
    adjacency: Vec<Vec<usize>>,
}

impl InterferenceGraph {
    pub fn new(pe: PeId, intervals: Vec<LiveInterval>, ii: u32) -> Self {
        let n = intervals.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if intervals[i].overlaps(&intervals[j], ii) {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        InterferenceGraph {
            pe,
            intervals,
            adjacency,
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }
}

/// Register indices per producer, combined over all PEs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coloring {
    assignments: BTreeMap<NodeId, u32>,
}

impl Coloring {
    pub fn register_of(&self, producer: NodeId) -> Option<u32> {
        self.assignments.get(&producer).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<NodeId, u32> {
        &self.assignments
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Coloring ran out of registers: `producer`'s interval clashed with
/// `conflicting` already-colored intervals (itself included in the count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoringFailure {
    pub pe: PeId,
    pub producer: NodeId,
    pub conflicting: Vec<NodeId>,
}

impl std::fmt::Display for ColoringFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "register pressure on PE {}: value of node {} clashes with {} live values",
            self.pe,
            self.producer,
            self.conflicting.len()
        )
    }
}

/// Group register-file routes per producer into intervals, keyed by PE.
pub fn build_live_intervals(mapping: &Mapping, ii: u32) -> BTreeMap<PeId, Vec<LiveInterval>> {
    let mut per_producer: BTreeMap<NodeId, Vec<u32>> = BTreeMap::new();
    for route in &mapping.routes {
        if route.kind != RouteKind::RegisterFile {
            continue;
        }
        let src = &mapping.placements[&route.src];
        let dst = &mapping.placements[&route.dst];
        let gap = route.distance as i64 + dst.iter as i64 - src.iter as i64;
        debug_assert!(
            gap == 0 || gap == 1,
            "validated mappings only carry gaps 0 and 1"
        );
        let span = (gap * ii as i64 + dst.slot as i64 - src.slot as i64) as u32;
        per_producer.entry(route.src).or_default().push(span);
    }

    let mut per_pe: BTreeMap<PeId, Vec<LiveInterval>> = BTreeMap::new();
    for (producer, spans) in per_producer {
        let place = &mapping.placements[&producer];
        let start = place.slot + place.iter * ii;
        let span = spans.iter().copied().max().expect("group is non-empty");
        let ends = spans.iter().map(|s| start + s).collect();
        let wraps = place.slot + span >= ii;
        per_pe.entry(place.pe).or_default().push(LiveInterval {
            producer,
            pe: place.pe,
            start,
            ends,
            span,
            wraps,
        });
    }
    per_pe
}

/// Greedy coloring along a maximum-cardinality-search order. Optimal on
/// chordal graphs (all non-wrapping instances); failures are always sound
/// grounds to retry at a larger II.
pub fn color(
    graph: &InterferenceGraph,
    k: usize,
) -> Result<BTreeMap<NodeId, u32>, ColoringFailure> {
    assert!(k >= 1, "at least one register per PE");
    let n = graph.intervals.len();
    // Maximum cardinality search: repeatedly take the vertex with the most
    // already-selected neighbors, breaking ties by vertex order.
    let mut weight = vec![0usize; n];
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !selected[v])
            .max_by_key(|&v| (weight[v], std::cmp::Reverse(v)))
            .unwrap();
        selected[v] = true;
        order.push(v);
        for &u in graph.neighbors(v) {
            if !selected[u] {
                weight[u] += 1;
            }
        }
    }

    let mut colors: Vec<Option<u32>> = vec![None; n];
    for &v in &order {
        let used: BTreeSet<u32> = graph
            .neighbors(v)
            .iter()
            .filter_map(|&u| colors[u])
            .collect();
        match (0..k as u32).find(|c| !used.contains(c)) {
            Some(c) => colors[v] = Some(c),
            None => {
                let mut conflicting: Vec<NodeId> = graph
                    .neighbors(v)
                    .iter()
                    .filter(|&&u| colors[u].is_some())
                    .map(|&u| graph.intervals[u].producer)
                    .collect();
                conflicting.push(graph.intervals[v].producer);
                conflicting.sort_unstable();
                return Err(ColoringFailure {
                    pe: graph.pe,
                    producer: graph.intervals[v].producer,
                    conflicting,
                });
            }
        }
    }
    Ok(graph
        .intervals
        .iter()
        .zip(colors)
        .map(|(interval, c)| (interval.producer, c.unwrap()))
        .collect())
}

/// Color every PE's interference graph with `regs_per_pe` registers.
pub fn allocate(
    mapping: &Mapping,
    regs_per_pe: usize,
    ii: u32,
) -> Result<Coloring, ColoringFailure> {
    let mut coloring = Coloring::default();
    for (pe, intervals) in build_live_intervals(mapping, ii) {
        let graph = InterferenceGraph::new(pe, intervals, ii);
        let assigned = color(&graph, regs_per_pe)?;
        coloring.assignments.extend(assigned);
    }
    Ok(coloring)
}
