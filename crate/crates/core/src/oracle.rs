//! Independent reference implementations used to cross-check the fast paths.
//!
//! Everything here is written for obviousness, not speed, and deliberately
//! avoids sharing code with the production implementations it validates:
//! the disc test reasons about edge segments instead of coordinate clamping,
//! inflation scans all cell pairs, path costs come from heuristic-free
//! uniform-cost search, and tours come from exhaustive permutation.
//!
//! Compiled only for tests (or under the `test-oracles` feature so
//! downstream test suites can reuse them).

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::geometry::{GridIndex, WorldPoint};
use crate::math;
use crate::occupancy::{CellState, CostScheme, GridMap, Metric};

/// Positive-area overlap between a disc and an axis-aligned rectangle,
/// decided by point-in-rect and segment-distance reasoning.
pub fn disc_overlaps_rect(center: WorldPoint, radius: f64, lo: WorldPoint, hi: WorldPoint) -> bool {
    if lo.x < center.x && center.x < hi.x && lo.y < center.y && center.y < hi.y {
        return true;
    }
    let corners = [
        WorldPoint::new(lo.x, lo.y),
        WorldPoint::new(hi.x, lo.y),
        WorldPoint::new(hi.x, hi.y),
        WorldPoint::new(lo.x, hi.y),
    ];
    let mut min_d = f64::INFINITY;
    for k in 0..4 {
        let d = point_segment_distance(center, corners[k], corners[(k + 1) % 4]);
        min_d = min_d.min(d);
    }
    min_d < radius
}

fn point_segment_distance(p: WorldPoint, a: WorldPoint, b: WorldPoint) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let apx = p.x - a.x;
    let apy = p.y - a.y;
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    };
    let cx = a.x + t * abx - p.x;
    let cy = a.y + t * aby - p.y;
    math::hypot(cx, cy)
}

/// Safety inflation by scanning every (cell, obstacle) pair.
pub fn inflate_brute_force(map: &GridMap, radius_cells: usize) -> GridMap {
    let mut out = map.clone();
    if radius_cells == 0 {
        return out;
    }
    let obstacles: Vec<GridIndex> = map
        .indices()
        .filter(|&i| map.state(i) == CellState::Obstacle)
        .collect();
    for i in map.indices() {
        if map.state(i) == CellState::Obstacle {
            continue;
        }
        if obstacles.iter().any(|&o| i.chebyshev(o) <= radius_cells) {
            out.set_state(i, CellState::SafetyArea);
        }
    }
    out
}

/// Uniform-cost search result: minimal cost to the destination, if reachable.
#[derive(Clone, Debug, PartialEq)]
pub struct UcsResult {
    pub cost: f64,
    pub path: Vec<GridIndex>,
}

struct UcsEntry {
    g: f64,
    cell: GridIndex,
}

impl PartialEq for UcsEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for UcsEntry {}
impl PartialOrd for UcsEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for UcsEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for smallest-g-first.
        other
            .g
            .total_cmp(&self.g)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

/// Heuristic-free uniform-cost search over the 8-connected grid, using the
/// same traversability and cost rules as the planner but none of its code.
pub fn uniform_cost_search(
    map: &GridMap,
    scheme: &CostScheme,
    source: GridIndex,
    dest: GridIndex,
    metric: Metric,
) -> Option<UcsResult> {
    assert!(map.in_bounds(source) && map.in_bounds(dest));
    if map.state(dest) == CellState::Obstacle {
        return None;
    }
    if source == dest {
        return Some(UcsResult {
            cost: 0.0,
            path: vec![source],
        });
    }
    let n = map.width() * map.height();
    let key = |i: GridIndex| i.v * map.width() + i.u;
    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<GridIndex>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[key(source)] = 0.0;
    heap.push(UcsEntry {
        g: 0.0,
        cell: source,
    });
    while let Some(UcsEntry { g: gc, cell }) = heap.pop() {
        let k = key(cell);
        if done[k] {
            continue;
        }
        done[k] = true;
        if cell == dest {
            let mut path = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[key(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(UcsResult { cost: gc, path });
        }
        for nb in map.neighbors8(cell) {
            let step = map
                .edge_cost(scheme, cell, nb, metric)
                .expect("neighbors8 yields adjacent cells");
            let Some(step) = step else { continue };
            let cand = gc + step;
            if cand < g[key(nb)] {
                g[key(nb)] = cand;
                parent[key(nb)] = Some(cell);
                heap.push(UcsEntry { g: cand, cell: nb });
            }
        }
    }
    None
}

/// Length of a closed tour visiting stops in the given order, using a
/// caller-provided pairwise distance table (row-major, n×n).
fn tour_len(order: &[usize], dist: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..order.len() {
        let a = order[k];
        let b = order[(k + 1) % order.len()];
        total += dist[a * n + b];
    }
    total
}

/// Exhaustive optimal closed tour over stops 1..n with stop 0 fixed as the
/// start/end. `dist` is the full n×n distance table. Practical for n <= 9.
pub fn optimal_tour(dist: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(dist.len(), n * n);
    assert!(n >= 1);
    if n == 1 {
        return (vec![0], 0.0);
    }
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best_order: Vec<usize> = core::iter::once(0).chain(rest.iter().copied()).collect();
    let mut best = tour_len(&best_order, dist, n);
    // Heap's algorithm over the non-depot stops.
    let m = rest.len();
    let mut c = vec![0usize; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                rest.swap(0, i);
            } else {
                rest.swap(c[i], i);
            }
            let order: Vec<usize> = core::iter::once(0).chain(rest.iter().copied()).collect();
            let len = tour_len(&order, dist, n);
            if len < best {
                best = len;
                best_order = order;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best_order, best)
}

/// Evaluates sum_{d=1..depth} b^d - expanded, the defining polynomial of the
/// effective branching factor, without any root-finding machinery.
pub fn branching_polynomial(b: f64, depth: usize, expanded: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for _ in 0..depth {
        term *= b;
        sum += term;
    }
    sum - expanded
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::CellState;

    #[test]
    fn ucs_handles_trivial_and_blocked_cases() {
        let mut m = GridMap::new(5, 5, 0.1, WorldPoint::new(0.0, 0.0), CellState::Free);
        let s = CostScheme::default();
        let a = GridIndex::new(0, 0);
        let b = GridIndex::new(4, 4);
        let r = uniform_cost_search(&m, &s, a, b, Metric::Shortest).unwrap();
        assert!((r.cost - 4.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(r.path.len(), 5);

        for v in 0..5 {
            m.set_state(GridIndex::new(2, v), CellState::Obstacle);
        }
        assert!(uniform_cost_search(&m, &s, a, b, Metric::Shortest).is_none());
        let same = uniform_cost_search(&m, &s, a, a, Metric::Weighted).unwrap();
        assert_eq!(same.cost, 0.0);
        assert_eq!(same.path, alloc::vec![a]);
    }

    #[test]
    fn exhaustive_tour_finds_the_square() {
        // Four corners of a unit square, shuffled: optimum is the perimeter.
        let pts = [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)];
        let n = pts.len();
        let mut dist = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (dx, dy) = (pts[i].0 - pts[j].0, pts[i].1 - pts[j].1);
                dist[i * n + j] = math::hypot(dx, dy);
            }
        }
        let (_, len) = optimal_tour(&dist, n);
        assert!((len - 4.0).abs() < 1e-12);
    }

    #[test]
    fn branching_polynomial_is_zero_at_known_roots() {
        // depth 1: b - expanded.
        assert!(branching_polynomial(1.0, 1, 1.0).abs() < 1e-12);
        // b=2, depth 3: 2 + 4 + 8 = 14.
        assert!(branching_polynomial(2.0, 3, 14.0).abs() < 1e-12);
    }
}
