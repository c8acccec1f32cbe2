//! ASAP/ALAP schedules, the mobility schedule, II lower bounds, and the
//! folded kernel mobility schedule.
//!
//! All schedules are computed over the distance-0 subgraph; loop-carried
//! back-edges only influence the recurrence bound and the encoder's timing
//! constraints. Every node takes one cycle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{CgraArch, Dfg, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("schedule length {given} is below the critical path length {required}")]
    LengthTooSmall { required: u32, given: u32 },
}

/// Per-node earliest/latest start times at the critical-path schedule length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilitySchedule {
    asap: BTreeMap<NodeId, u32>,
    alap: BTreeMap<NodeId, u32>,
    length: u32,
}

impl MobilitySchedule {
    pub fn asap(&self, n: NodeId) -> u32 {
        self.asap[&n]
    }

    pub fn alap(&self, n: NodeId) -> u32 {
        self.alap[&n]
    }

    pub fn asap_map(&self) -> &BTreeMap<NodeId, u32> {
        &self.asap
    }

    pub fn alap_map(&self) -> &BTreeMap<NodeId, u32> {
        &self.alap
    }

    /// Schedule length L = 1 + max ALAP.
    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn mobility(&self, n: NodeId) -> u32 {
        self.alap[&n] - self.asap[&n]
    }

    /// Row `t` lists every node whose mobility window covers time `t`.
    pub fn rows(&self) -> Vec<Vec<NodeId>> {
        (0..self.length)
            .map(|t| {
                self.asap
                    .iter()
                    .filter(|(n, &early)| early <= t && t <= self.alap[n])
                    .map(|(&n, _)| n)
                    .collect()
            })
            .collect()
    }
}

/// Earliest start per node: 0 without distance-0 predecessors, otherwise one
/// past the latest predecessor.
pub fn compute_asap(dfg: &Dfg) -> BTreeMap<NodeId, u32> {
    let order = topo_order(dfg);
    let mut asap: BTreeMap<NodeId, u32> = BTreeMap::new();
    for id in order {
        let t = dfg.preds0(id).map(|p| asap[&p] + 1).max().unwrap_or(0);
        asap.insert(id, t);
    }
    asap
}

/// Latest start per node for a schedule of `length` cycles: `length - 1`
/// without distance-0 successors, otherwise one before the earliest successor.
pub fn compute_alap(dfg: &Dfg, length: u32) -> Result<BTreeMap<NodeId, u32>, ScheduleError> {
    let required = critical_path_length(dfg);
    if length < required {
        return Err(ScheduleError::LengthTooSmall {
            required,
            given: length,
        });
    }
    let order = topo_order(dfg);
    let mut alap: BTreeMap<NodeId, u32> = BTreeMap::new();
    for &id in order.iter().rev() {
        let t = dfg
            .succs0(id)
            .map(|s| alap[&s] - 1)
            .min()
            .unwrap_or(length - 1);
        alap.insert(id, t);
    }
    Ok(alap)
}

/// Critical path length of the distance-0 DAG (in cycles).
pub fn critical_path_length(dfg: &Dfg) -> u32 {
    1 + compute_asap(dfg).values().copied().max().unwrap_or(0)
}

/// ASAP and ALAP at the smallest legal schedule length.
pub fn mobility_schedule(dfg: &Dfg) -> MobilitySchedule {
    let asap = compute_asap(dfg);
    let length = 1 + asap.values().copied().max().unwrap_or(0);
    let alap = compute_alap(dfg, length).expect("critical path length is always legal");
    MobilitySchedule { asap, alap, length }
}

fn topo_order(dfg: &Dfg) -> Vec<NodeId> {
    let ids = dfg.node_ids();
    let mut indegree: BTreeMap<NodeId, usize> = ids.iter().map(|&id| (id, 0)).collect();
    for edge in dfg.edges().iter().filter(|e| e.distance == 0) {
        *indegree.get_mut(&edge.dst).unwrap() += 1;
    }
    let mut ready: Vec<NodeId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(id) = ready.pop() {
        order.push(id);
        for succ in dfg.succs0(id) {
            let d = indegree.get_mut(&succ).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(succ);
            }
        }
    }
    debug_assert_eq!(
        order.len(),
        ids.len(),
        "DFG validation guarantees acyclicity"
    );
    order
}

/// Resource-bound II: enough kernel cells for every node.
pub fn res_mii(dfg: &Dfg, arch: &CgraArch) -> u32 {
    let nodes = dfg.nodes().len() as u32;
    let pes = arch.num_pes() as u32;
    nodes.div_ceil(pes)
}

/// Recurrence-bound II: the smallest II admitting no positive cycle under
/// edge weights `1 - II * distance`. Equals the maximum over elementary
/// cycles of ceil(latency / distance); 1 for acyclic graphs.
pub fn rec_mii(dfg: &Dfg) -> u32 {
    let upper = dfg.nodes().len() as u32;
    for ii in 1..=upper {
        if !has_positive_cycle(dfg, ii as i64) {
            return ii;
        }
    }
    upper.max(1)
}

fn has_positive_cycle(dfg: &Dfg, ii: i64) -> bool {
    // Bellman-Ford longest-path relaxation from an implicit super-source.
    let ids = dfg.node_ids();
    let idx_of = |id: NodeId| ids.binary_search(&id).unwrap();
    let mut dist = vec![0i64; ids.len()];
    for round in 0..=ids.len() {
        let mut changed = false;
        for edge in dfg.edges() {
            let w = 1 - ii * edge.distance as i64;
            let src = idx_of(edge.src);
            let dst = idx_of(edge.dst);
            if dist[src] + w > dist[dst] {
                dist[dst] = dist[src] + w;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
        if round == ids.len() {
            return true;
        }
    }
    false
}

/// Lower bound for the II search: max of the resource and recurrence bounds.
pub fn compute_mii(dfg: &Dfg, arch: &CgraArch) -> u32 {
    res_mii(dfg, arch).max(rec_mii(dfg))
}

/// The mobility schedule folded modulo II. Each node occurrence carries the
/// kernel slot and the iteration label of the fold it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kms {
    ii: u32,
    folds: u32,
    occ: BTreeMap<NodeId, Vec<(u32, u32)>>,
}

impl Kms {
    pub fn ii(&self) -> u32 {
        self.ii
    }

    pub fn folds(&self) -> u32 {
        self.folds
    }

    /// Occurrences of `n`, sorted by (slot, iter).
    pub fn occ(&self, n: NodeId) -> &[(u32, u32)] {
        &self.occ[&n]
    }

    pub fn occ_map(&self) -> &BTreeMap<NodeId, Vec<(u32, u32)>> {
        &self.occ
    }

    pub fn contains(&self, n: NodeId, slot: u32, iter: u32) -> bool {
        self.occ
            .get(&n)
            .is_some_and(|occ| occ.binary_search(&(slot, iter)).is_ok())
    }
}

/// Fold the mobility schedule by `ii`: cycle c maps to slot `c % ii` with
/// iteration label `c / ii`.
pub fn build_kms(ms: &MobilitySchedule, ii: u32) -> Kms {
    assert!(ii >= 1, "II must be positive");
    let folds = ms.length().div_ceil(ii);
    let mut occ = BTreeMap::new();
    for (&n, &early) in ms.asap_map() {
        let late = ms.alap(n);
        let mut cells: Vec<(u32, u32)> = (early..=late).map(|c| (c % ii, c / ii)).collect();
        cells.sort_unstable();
        occ.insert(n, cells);
    }
    Kms { ii, folds, occ }
}

// -- table rendering ----------------------------------------------------------

fn join_nodes(nodes: &[NodeId]) -> String {
    nodes
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// One row per time step with the ASAP, ALAP, and mobility-schedule cells.
pub fn render_schedule_tables(ms: &MobilitySchedule) -> String {
    let length = ms.length();
    let mut asap_rows: Vec<Vec<NodeId>> = vec![Vec::new(); length as usize];
    let mut alap_rows: Vec<Vec<NodeId>> = vec![Vec::new(); length as usize];
    for (&n, &t) in ms.asap_map() {
        asap_rows[t as usize].push(n);
    }
    for (&n, &t) in ms.alap_map() {
        alap_rows[t as usize].push(n);
    }
    let ms_rows = ms.rows();

    let cell = |nodes: &[NodeId]| join_nodes(nodes);
    let asap_cells: Vec<String> = asap_rows.iter().map(|r| cell(r)).collect();
    let alap_cells: Vec<String> = alap_rows.iter().map(|r| cell(r)).collect();
    let ms_cells: Vec<String> = ms_rows.iter().map(|r| cell(r)).collect();
    let w_asap = asap_cells
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("ASAP".len());
    let w_alap = alap_cells
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("ALAP".len());

    let mut out = String::new();
    let _ = writeln!(out, "time | {:<w_asap$} | {:<w_alap$} | MS", "ASAP", "ALAP");
    for t in 0..length as usize {
        let _ = writeln!(
            out,
            "{:>4} | {:<w_asap$} | {:<w_alap$} | {}",
            t, asap_cells[t], alap_cells[t], ms_cells[t]
        );
    }
    out
}

/// Kernel mobility schedule, one row per slot; cells carry `node^iteration`
/// entries ordered by iteration then node.
pub fn render_kms_table(kms: &Kms) -> String {
    let mut rows: Vec<Vec<(u32, NodeId)>> = vec![Vec::new(); kms.ii() as usize];
    for (&n, occ) in kms.occ_map() {
        for &(slot, iter) in occ {
            rows[slot as usize].push((iter, n));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "KMS (II={}, iterations={})", kms.ii(), kms.folds());
    let _ = writeln!(out, "slot | nodes");
    for (slot, row) in rows.iter_mut().enumerate() {
        row.sort_unstable();
        let cells: Vec<String> = row.iter().map(|(it, n)| format!("{n}^{it}")).collect();
        let _ = writeln!(out, "{:>4} | {}", slot, cells.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_dfg, Dfg, DfgEdge, DfgNode};

    pub(crate) fn dfg_from(nodes: &[NodeId], edges: &[(NodeId, NodeId, u32)]) -> Dfg {
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

    /// The loop DFG used throughout: 11 nodes whose schedules fill the
    /// reference tables.
    pub(crate) fn running_example() -> Dfg {
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

    fn to_map(pairs: &[(NodeId, u32)]) -> BTreeMap<NodeId, u32> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn running_example_asap() {
        let asap = compute_asap(&running_example());
        let expected = to_map(&[
            (1, 0),
            (2, 0),
            (3, 0),
            (4, 0),
            (5, 1),
            (7, 1),
            (10, 1),
            (6, 2),
            (11, 2),
            (8, 3),
            (9, 4),
        ]);
        assert_eq!(asap, expected);
    }

    #[test]
    fn running_example_alap() {
        let alap = compute_alap(&running_example(), 5).unwrap();
        let expected = to_map(&[
            (3, 0),
            (4, 1),
            (5, 1),
            (1, 2),
            (6, 2),
            (7, 2),
            (2, 3),
            (8, 3),
            (10, 3),
            (9, 4),
            (11, 4),
        ]);
        assert_eq!(alap, expected);
    }

    #[test]
    fn running_example_ms_rows() {
        let ms = mobility_schedule(&running_example());
        assert_eq!(ms.length(), 5);
        let rows = ms.rows();
        assert_eq!(rows[0], vec![1, 2, 3, 4]);
        assert_eq!(rows[1], vec![1, 2, 4, 5, 7, 10]);
        assert_eq!(rows[2], vec![1, 2, 6, 7, 10, 11]);
        assert_eq!(rows[3], vec![2, 8, 10, 11]);
        assert_eq!(rows[4], vec![9, 11]);
    }

    #[test]
    fn single_node_schedules_at_zero() {
        let dfg = dfg_from(&[7], &[]);
        assert_eq!(compute_asap(&dfg), to_map(&[(7, 0)]));
        assert_eq!(compute_alap(&dfg, 1).unwrap(), to_map(&[(7, 0)]));
        let ms = mobility_schedule(&dfg);
        assert_eq!(ms.rows(), vec![vec![7]]);
    }

    #[test]
    fn chain_asap_is_path_length() {
        let dfg = dfg_from(&[1, 2, 3], &[(1, 2, 0), (2, 3, 0)]);
        assert_eq!(compute_asap(&dfg), to_map(&[(1, 0), (2, 1), (3, 2)]));
    }

    #[test]
    fn chain_alap_with_slack() {
        let dfg = dfg_from(&[1, 2], &[(1, 2, 0)]);
        assert_eq!(compute_alap(&dfg, 3).unwrap(), to_map(&[(1, 1), (2, 2)]));
    }

    #[test]
    fn alap_rejects_short_lengths() {
        let dfg = dfg_from(&[1, 2, 3], &[(1, 2, 0), (2, 3, 0)]);
        assert_eq!(
            compute_alap(&dfg, 2),
            Err(ScheduleError::LengthTooSmall {
                required: 3,
                given: 2
            })
        );
    }

    #[test]
    fn diamond_midpoints_have_zero_mobility() {
        let dfg = dfg_from(&[1, 2, 3, 4], &[(1, 2, 0), (1, 3, 0), (2, 4, 0), (3, 4, 0)]);
        let ms = mobility_schedule(&dfg);
        assert_eq!(ms.mobility(2), 0);
        assert_eq!(ms.mobility(3), 0);
        assert_eq!(ms.rows()[1], vec![2, 3]);
    }

    #[test]
    fn back_edges_do_not_constrain_asap_alap() {
        let dfg = dfg_from(&[1, 2], &[(1, 2, 0), (2, 1, 1)]);
        assert_eq!(compute_asap(&dfg), to_map(&[(1, 0), (2, 1)]));
        assert_eq!(compute_alap(&dfg, 2).unwrap(), to_map(&[(1, 0), (2, 1)]));
    }

    #[test]
    fn res_mii_matches_pigeonhole() {
        let dfg = running_example();
        let arch = crate::model::CgraArch::mesh(2, 2).unwrap();
        assert_eq!(res_mii(&dfg, &arch), 3); // ceil(11 / 4): 11 nodes cannot fit 4 PEs x 2 slots
    }

    #[test]
    fn rec_mii_of_acyclic_graph_is_one() {
        assert_eq!(rec_mii(&running_example()), 1);
    }

    #[test]
    fn rec_mii_of_four_cycle_is_four() {
        let dfg = dfg_from(&[1, 2, 3, 4], &[(1, 2, 0), (2, 3, 0), (3, 4, 0), (4, 1, 1)]);
        assert_eq!(rec_mii(&dfg), 4);
    }

    /// Independent oracle: enumerate elementary cycles by DFS and take the
    /// max of ceil(length / distance).
    fn rec_mii_oracle(dfg: &Dfg) -> u32 {
        fn dfs(
            dfg: &Dfg,
            start: NodeId,
            current: NodeId,
            visited: &mut Vec<NodeId>,
            len: u32,
            dist: u32,
            best: &mut u32,
        ) {
            for edge in dfg.edges() {
                if edge.src != current {
                    continue;
                }
                if edge.dst == start {
                    let total_dist = dist + edge.distance;
                    if total_dist > 0 {
                        *best = (*best).max((len + 1).div_ceil(total_dist));
                    }
                } else if edge.dst > start && !visited.contains(&edge.dst) {
                    visited.push(edge.dst);
                    dfs(
                        dfg,
                        start,
                        edge.dst,
                        visited,
                        len + 1,
                        dist + edge.distance,
                        best,
                    );
                    visited.pop();
                }
            }
        }
        let mut best = 1;
        for start in dfg.node_ids() {
            dfs(dfg, start, start, &mut vec![], 0, 0, &mut best);
        }
        best
    }

    #[test]
    fn rec_mii_agrees_with_cycle_enumeration() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(1..=5u32);
            let mut edges = Vec::new();
            for a in 1..=n {
                for b in 1..=n {
                    if a < b && rng.gen_bool(0.4) {
                        edges.push((a, b, 0));
                    }
                    if a >= b && rng.gen_bool(0.25) {
                        edges.push((a, b, 1));
                    }
                }
            }
            let dfg = dfg_from(&(1..=n).collect::<Vec<_>>(), &edges);
            assert_eq!(
                rec_mii(&dfg),
                rec_mii_oracle(&dfg),
                "edges: {:?}",
                dfg.edges()
            );
        }
    }

    #[test]
    fn kms_folds_running_example_twice_at_ii3() {
        let ms = mobility_schedule(&running_example());
        let kms = build_kms(&ms, 3);
        assert_eq!(kms.folds(), 2);
        assert_eq!(kms.occ(9), &[(1, 1)]);
        assert_eq!(kms.occ(3), &[(0, 0)]);
        assert_eq!(kms.occ(10), &[(0, 1), (1, 0), (2, 0)]);
    }

    #[test]
    fn kms_identity_fold_at_large_ii() {
        let ms = mobility_schedule(&running_example());
        for ii in [5, 6, 9] {
            let kms = build_kms(&ms, ii);
            assert_eq!(kms.folds(), 1);
            for n in running_example().node_ids() {
                let expected: Vec<(u32, u32)> = (ms.asap(n)..=ms.alap(n)).map(|c| (c, 0)).collect();
                assert_eq!(kms.occ(n), expected.as_slice(), "node {n} ii {ii}");
            }
        }
    }

    #[test]
    fn folding_preserves_occurrence_counts() {
        let dfg = running_example();
        let ms = mobility_schedule(&dfg);
        for ii in 1..=6 {
            let kms = build_kms(&ms, ii);
            for n in dfg.node_ids() {
                assert_eq!(
                    kms.occ(n).len() as u32,
                    ms.alap(n) - ms.asap(n) + 1,
                    "node {n} at ii {ii}"
                );
            }
        }
    }

    #[test]
    fn ms_row_sizes_sum_to_window_sizes() {
        let dfg = running_example();
        let ms = mobility_schedule(&dfg);
        let row_total: usize = ms.rows().iter().map(Vec::len).sum();
        let window_total: u32 = dfg.node_ids().iter().map(|&n| ms.mobility(n) + 1).sum();
        assert_eq!(row_total as u32, window_total);
    }

    /// Brute-force longest-path oracle over all simple paths.
    fn longest_path_to(dfg: &Dfg, target: NodeId) -> u32 {
        fn walk(dfg: &Dfg, current: NodeId, seen: &mut Vec<NodeId>) -> u32 {
            dfg.preds0(current)
                .map(|p| {
                    assert!(!seen.contains(&p), "cycle in supposedly acyclic DFG");
                    seen.push(p);
                    let d = 1 + walk(dfg, p, seen);
                    seen.pop();
                    d
                })
                .max()
                .unwrap_or(0)
        }
        walk(dfg, target, &mut vec![target])
    }

    #[test]
    fn asap_alap_match_longest_path_oracle_exhaustively() {
        // Every DAG on 4 nodes with edges oriented low -> high.
        let pairs: Vec<(NodeId, NodeId)> = vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<(NodeId, NodeId, u32)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &(a, b))| (a, b, 0))
                .collect();
            let dfg = dfg_from(&[1, 2, 3, 4], &edges);
            let ms = mobility_schedule(&dfg);
            for n in [1, 2, 3, 4] {
                assert_eq!(
                    ms.asap(n),
                    longest_path_to(&dfg, n),
                    "asap node {n} mask {mask}"
                );
                assert!(ms.asap(n) <= ms.alap(n));
            }
            // ALAP dually: distance to the sink measured on the reversed graph.
            let length = ms.length();
            for n in [1, 2, 3, 4] {
                let down = {
                    fn walk_down(dfg: &Dfg, current: NodeId, seen: &mut Vec<NodeId>) -> u32 {
                        dfg.succs0(current)
                            .map(|s| {
                                seen.push(s);
                                let d = 1 + walk_down(dfg, s, seen);
                                seen.pop();
                                d
                            })
                            .max()
                            .unwrap_or(0)
                    }
                    walk_down(&dfg, n, &mut vec![n])
                };
                assert_eq!(ms.alap(n), length - 1 - down, "alap node {n} mask {mask}");
            }
        }
    }

    #[test]
    fn mobility_is_zero_on_critical_paths() {
        let dfg = running_example();
        let ms = mobility_schedule(&dfg);
        // 3 -> 5 -> 6 -> 8 -> 9 is the unique longest chain.
        for n in [3, 5, 6, 8, 9] {
            assert_eq!(ms.mobility(n), 0, "node {n}");
        }
    }

    #[test]
    fn renders_the_reference_tables() {
        let ms = mobility_schedule(&running_example());
        let rendered = render_schedule_tables(&ms);
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), 6);
        let row = |i: usize| -> Vec<String> {
            lines[i].split('|').map(|c| c.trim().to_string()).collect()
        };
        assert_eq!(row(1), ["0", "1 2 3 4", "3", "1 2 3 4"]);
        assert_eq!(row(2), ["1", "5 7 10", "4 5", "1 2 4 5 7 10"]);
        assert_eq!(row(3), ["2", "6 11", "1 6 7", "1 2 6 7 10 11"]);
        assert_eq!(row(4), ["3", "8", "2 8 10", "2 8 10 11"]);
        assert_eq!(row(5), ["4", "9", "9 11", "9 11"]);
    }

    #[test]
    fn renders_kms_with_iteration_labels() {
        let ms = mobility_schedule(&running_example());
        let kms = build_kms(&ms, 3);
        let rendered = render_kms_table(&kms);
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines[0], "KMS (II=3, iterations=2)");
        assert!(lines[2].contains("1^0 2^0 3^0 4^0 2^1 8^1 10^1 11^1"));
        assert!(lines[3].contains("1^0 2^0 4^0 5^0 7^0 10^0 9^1 11^1"));
        assert!(lines[4].contains("1^0 2^0 6^0 7^0 10^0 11^0"));
    }

    #[test]
    fn schedule_tables_parse_helper_dfg() {
        // The running example above stays in sync with the JSON document form.
        let text = crate::model::serialize_dfg(&running_example());
        let reparsed = parse_dfg(&text).unwrap();
        assert_eq!(reparsed, running_example());
    }
}
