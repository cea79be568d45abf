//! Grid A* over occupancy maps, for both planning levels.
//!
//! The same planner serves the global sweep maps and the 40×40 local
//! obstacle-avoidance windows; only the map, metric and cost scheme differ.
//! Expansion order is fully deterministic: the open heap breaks f-ties by
//! preferring the larger g (deeper along the path, fewer re-expansions) and
//! then the smaller (u, v) pair, so identical queries yield identical paths
//! on every run and platform.
//!
//! Costs use f64 throughout; optimality against uniform-cost search holds to
//! 1e-9, which is far below one cell unit and treated as exact.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geometry::GridIndex;
use crate::occupancy::{CellState, CostScheme, GridMap, Metric};

/// One routing request. The source cell must not be an Obstacle (the vehicle
/// is there); the destination may be anything, with Obstacle yielding no
/// path.
#[derive(Clone, Copy, Debug)]
pub struct PlanQuery<'a> {
    pub map: &'a GridMap,
    pub scheme: &'a CostScheme,
    pub source: GridIndex,
    pub destination: GridIndex,
    pub metric: Metric,
}

/// A found route.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    /// Cells from source to destination inclusive.
    pub path: Vec<GridIndex>,
    /// Sum of edge costs along `path`.
    pub total_cost: f64,
    /// Cells popped from the open set and processed, source included.
    pub expanded_nodes: usize,
    /// Wall-clock seconds spent planning (0.0 without the `std` feature).
    pub wall_time_s: f64,
}

impl PlanResult {
    /// Number of edges in the path (the solution depth for the branching
    /// factor).
    pub fn depth(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Straight-line distance between cell centers in cell units. Admissible and
/// consistent for both metrics: every step costs at least its length.
pub fn heuristic(a: GridIndex, b: GridIndex) -> f64 {
    GridMap::center_distance(a, b)
}

struct OpenNode {
    f: f64,
    g: f64,
    cell: GridIndex,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenNode {}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: rank the node we want popped first as the greatest.
        // Smallest f first, then largest g, then smallest (u, v).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

const NO_PARENT: u32 = u32::MAX;

/// Reusable planner state. Batch callers (replanning every frame, or costing
/// all hotspot pairs on a field map) keep one workspace per map size and skip
/// the per-query allocations; the arrays are epoch-stamped so reuse needs no
/// clearing.
#[derive(Default)]
pub struct Workspace {
    g: Vec<f64>,
    parent: Vec<u32>,
    stamp: Vec<u32>,
    closed: Vec<u32>,
    epoch: u32,
    heap: BinaryHeap<OpenNode>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn begin(&mut self, cells: usize) {
        if self.g.len() < cells {
            self.g.resize(cells, f64::INFINITY);
            self.parent.resize(cells, NO_PARENT);
            self.stamp.resize(cells, 0);
            self.closed.resize(cells, 0);
        }
        self.heap.clear();
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            // Wrapped: stale stamps could collide, so reset them all.
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.closed.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn g_of(&self, k: usize) -> f64 {
        if self.stamp[k] == self.epoch {
            self.g[k]
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    fn set_g(&mut self, k: usize, g: f64, parent: u32) {
        self.g[k] = g;
        self.parent[k] = parent;
        self.stamp[k] = self.epoch;
    }

    #[inline]
    fn is_closed(&self, k: usize) -> bool {
        self.closed[k] == self.epoch
    }

    #[inline]
    fn close(&mut self, k: usize) {
        self.closed[k] = self.epoch;
    }
}

/// Runs A* with a fresh workspace. See [`astar_with`].
pub fn astar(query: &PlanQuery) -> Option<PlanResult> {
    let mut ws = Workspace::new();
    astar_with(&mut ws, query)
}

/// Runs A* for `query`, reusing `ws` across calls.
///
/// Returns `None` when no route exists (including an Obstacle destination).
/// The returned path never contains an Obstacle cell, starts at the source
/// and ends at the destination, and its cost matches uniform-cost search.
pub fn astar_with(ws: &mut Workspace, query: &PlanQuery) -> Option<PlanResult> {
    let map = query.map;
    let (src, dst) = (query.source, query.destination);
    assert!(map.in_bounds(src) && map.in_bounds(dst), "query out of bounds");
    debug_assert!(
        map.state(src) != CellState::Obstacle,
        "plan source inside an obstacle"
    );
    let start = now();
    if map.state(dst) == CellState::Obstacle {
        return None;
    }

    let width = map.width();
    let cells = width * map.height();
    ws.begin(cells);
    let key = |i: GridIndex| i.v * width + i.u;
    let cell_of = |k: u32| GridIndex::new(k as usize % width, k as usize / width);

    ws.set_g(key(src), 0.0, NO_PARENT);
    ws.heap.push(OpenNode {
        f: heuristic(src, dst),
        g: 0.0,
        cell: src,
    });
    let mut expanded = 0usize;

    while let Some(OpenNode { g, cell, .. }) = ws.heap.pop() {
        let k = key(cell);
        if ws.is_closed(k) {
            continue;
        }
        ws.close(k);
        expanded += 1;

        if cell == dst {
            let mut path = vec![cell];
            let mut cur = k;
            while ws.parent[cur] != NO_PARENT {
                cur = ws.parent[cur] as usize;
                path.push(cell_of(cur as u32));
            }
            path.reverse();
            return Some(PlanResult {
                path,
                total_cost: g,
                expanded_nodes: expanded,
                wall_time_s: elapsed(start),
            });
        }

        for nb in map.neighbors8(cell) {
            let nk = key(nb);
            if ws.is_closed(nk) || map.diagonal_blocked(cell, nb) {
                continue;
            }
            let step = query
                .scheme
                .step_cost(GridMap::step_len(cell, nb), map.state(nb), query.metric);
            let Some(step) = step else { continue };
            let cand = g + step;
            if cand < ws.g_of(nk) {
                ws.set_g(nk, cand, k as u32);
                ws.heap.push(OpenNode {
                    f: cand + heuristic(nb, dst),
                    g: cand,
                    cell: nb,
                });
            }
        }
    }
    None
}

/// Effective branching factor: the b solving sum_{d=1..depth} b^d = expanded,
/// found by bisection on [1e-6, expanded] until |residual| <= 1e-9.
///
/// `expanded` counts processed nodes excluding the source (the tree below the
/// root), matching `PlanResult::expanded_nodes - 1` for a solved query.
/// Returns 0.0 for a zero-depth search (nothing below the root).
pub fn effective_branching_factor(expanded: usize, depth: usize) -> f64 {
    if depth == 0 || expanded == 0 {
        return 0.0;
    }
    let target = expanded as f64;
    let residual = |b: f64| -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for _ in 0..depth {
            term *= b;
            sum += term;
            // All terms are positive, so once the sum clears the target by a
            // wide margin the sign is settled; stopping early keeps huge
            // depths from overflowing. Near the root the full sum is used.
            if sum - target > 1.0 {
                break;
            }
        }
        sum - target
    };
    let mut lo = 1e-6;
    let mut hi = target.max(1.0);
    // The residual is strictly increasing in b; widen hi defensively if the
    // root is somehow outside (cannot happen for expanded >= 1, depth >= 1).
    while residual(hi) < 0.0 {
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() <= 1e-9 || (hi - lo) < f64::EPSILON * hi.max(1.0) {
            return mid;
        }
        if r > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

#[cfg(feature = "std")]
fn now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(not(feature = "std"))]
fn now() -> Option<()> {
    None
}

#[cfg(feature = "std")]
fn elapsed(start: Option<std::time::Instant>) -> f64 {
    start.map(|t| t.elapsed().as_secs_f64()).unwrap_or(0.0)
}

#[cfg(not(feature = "std"))]
fn elapsed(_start: Option<()>) -> f64 {
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WorldPoint;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn empty_map(side: usize) -> GridMap {
        GridMap::new(side, side, 0.1, WorldPoint::new(0.0, 0.0), CellState::Free)
    }

    fn query<'a>(
        map: &'a GridMap,
        scheme: &'a CostScheme,
        source: (usize, usize),
        destination: (usize, usize),
        metric: Metric,
    ) -> PlanQuery<'a> {
        PlanQuery {
            map,
            scheme,
            source: GridIndex::new(source.0, source.1),
            destination: GridIndex::new(destination.0, destination.1),
            metric,
        }
    }

    #[test]
    fn open_diagonal_costs_nine_root_two() {
        let m = empty_map(10);
        let s = CostScheme::default();
        let r = astar(&query(&m, &s, (0, 0), (9, 9), Metric::Shortest)).unwrap();
        assert!((r.total_cost - 9.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(r.path.len(), 10);
        assert_eq!(r.path[0], GridIndex::new(0, 0));
        assert_eq!(r.path[9], GridIndex::new(9, 9));
    }

    #[test]
    fn source_equals_destination() {
        let m = empty_map(10);
        let s = CostScheme::default();
        let r = astar(&query(&m, &s, (4, 7), (4, 7), Metric::Weighted)).unwrap();
        assert_eq!(r.path, alloc::vec![GridIndex::new(4, 7)]);
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.expanded_nodes, 1);
    }

    #[test]
    fn full_wall_yields_no_path() {
        let mut m = empty_map(10);
        for v in 0..10 {
            m.set_state(GridIndex::new(5, v), CellState::Obstacle);
        }
        let s = CostScheme::default();
        assert!(astar(&query(&m, &s, (0, 0), (9, 9), Metric::Shortest)).is_none());
        assert!(astar(&query(&m, &s, (0, 0), (9, 9), Metric::Weighted)).is_none());
    }

    #[test]
    fn obstacle_destination_yields_no_path() {
        let mut m = empty_map(10);
        m.set_state(GridIndex::new(9, 9), CellState::Obstacle);
        let s = CostScheme::default();
        assert!(astar(&query(&m, &s, (0, 0), (9, 9), Metric::Shortest)).is_none());
    }

    #[test]
    fn heuristic_is_euclidean_in_cell_units() {
        let h = heuristic(GridIndex::new(0, 0), GridIndex::new(3, 4));
        assert!((h - 5.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_detours_off_costly_cells_where_shortest_does_not() {
        // A band of Unknown across the middle: Shortest drives straight
        // through, Weighted pays for a GlobalPath corridor around it.
        let mut m = empty_map(15);
        for u in 0..15 {
            for v in 6..9 {
                m.set_state(GridIndex::new(u, v), CellState::Unknown);
            }
        }
        for v in 0..15 {
            m.set_state(GridIndex::new(0, v), CellState::GlobalPath);
        }
        let s = CostScheme::default();
        let short = astar(&query(&m, &s, (7, 0), (7, 14), Metric::Shortest)).unwrap();
        let weighted = astar(&query(&m, &s, (7, 0), (7, 14), Metric::Weighted)).unwrap();
        assert!(short.path.iter().any(|&i| m.state(i) == CellState::Unknown));
        let unknown_short = short
            .path
            .iter()
            .filter(|&&i| m.state(i) == CellState::Unknown)
            .count();
        let unknown_weighted = weighted
            .path
            .iter()
            .filter(|&&i| m.state(i) == CellState::Unknown)
            .count();
        assert!(unknown_weighted < unknown_short);
        assert!(weighted.path.len() > short.path.len());
    }

    #[test]
    fn matches_uniform_cost_search_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = CostScheme::default();
        for round in 0..60 {
            let mut m = empty_map(20);
            for i in m.indices().collect::<alloc::vec::Vec<_>>() {
                let roll: f64 = rng.gen();
                let state = if roll < 0.15 {
                    CellState::Obstacle
                } else if roll < 0.3 {
                    CellState::Unknown
                } else if roll < 0.4 {
                    CellState::SafetyArea
                } else {
                    CellState::Free
                };
                m.set_state(i, state);
            }
            let src = GridIndex::new(rng.gen_range(0..20), rng.gen_range(0..20));
            let dst = GridIndex::new(rng.gen_range(0..20), rng.gen_range(0..20));
            if m.state(src) == CellState::Obstacle {
                continue;
            }
            for metric in [Metric::Shortest, Metric::Weighted] {
                let got = astar(&PlanQuery {
                    map: &m,
                    scheme: &s,
                    source: src,
                    destination: dst,
                    metric,
                });
                let want = oracle::uniform_cost_search(&m, &s, src, dst, metric);
                match (got, want) {
                    (None, None) => {}
                    (Some(g), Some(w)) => {
                        assert!(
                            (g.total_cost - w.cost).abs() <= 1e-9,
                            "round {round}: {} vs {}",
                            g.total_cost,
                            w.cost
                        );
                        assert!(g.path.iter().all(|&i| m.state(i) != CellState::Obstacle));
                        assert_eq!(g.path.first(), Some(&src));
                        assert_eq!(g.path.last(), Some(&dst));
                    }
                    (g, w) => panic!(
                        "round {round} metric {metric:?}: reachability disagreement ({} vs {})",
                        g.is_some(),
                        w.is_some()
                    ),
                }
            }
        }
    }

    #[test]
    fn repeat_queries_are_deterministic_and_workspace_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = empty_map(25);
        for i in m.indices().collect::<alloc::vec::Vec<_>>() {
            if rng.gen_bool(0.2) {
                m.set_state(i, CellState::Obstacle);
            }
        }
        m.set_state(GridIndex::new(0, 0), CellState::Free);
        m.set_state(GridIndex::new(24, 24), CellState::Free);
        let s = CostScheme::default();
        let q = query(&m, &s, (0, 0), (24, 24), Metric::Weighted);
        let base = astar(&q);
        let mut ws = Workspace::new();
        for _ in 0..5 {
            let again = astar_with(&mut ws, &q);
            match (&base, &again) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert_eq!(a.path, b.path);
                    assert_eq!(a.expanded_nodes, b.expanded_nodes);
                    assert!((a.total_cost - b.total_cost).abs() < 1e-15);
                }
                _ => panic!("reachability flapped across workspace reuse"),
            }
        }
        // Reuse across a different map size must also stay correct.
        let small = empty_map(5);
        let r = astar_with(&mut ws, &query(&small, &s, (0, 0), (4, 4), Metric::Shortest)).unwrap();
        assert!((r.total_cost - 4.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn branching_factor_examples() {
        assert!((effective_branching_factor(1, 1) - 1.0).abs() <= 1e-6);
        assert!(
            (effective_branching_factor(3, 2) - 1.302775637731995).abs() <= 1e-6,
            "got {}",
            effective_branching_factor(3, 2)
        );
        assert!((effective_branching_factor(14, 3) - 2.0).abs() <= 1e-6);
        assert_eq!(effective_branching_factor(0, 3), 0.0);
        assert_eq!(effective_branching_factor(5, 0), 0.0);
    }

    #[test]
    fn branching_factor_zeroes_the_defining_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let depth = rng.gen_range(1..12usize);
            let expanded = rng.gen_range(1..100_000usize);
            let b = effective_branching_factor(expanded, depth);
            let res = oracle::branching_polynomial(b, depth, expanded as f64);
            assert!(
                res.abs() <= 1e-6,
                "b={b} depth={depth} expanded={expanded} residual={res}"
            );
        }
    }
}
