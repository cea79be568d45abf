//! Ground-vehicle hotspot logistics: shortest-path distances over the field
//! map, closed treatment tours (nearest-neighbor construction plus 2-opt),
//! and the full-sweep baseline those tours are compared against.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{GridIndex, WorldPoint};
use crate::math;
use crate::mission::{self, FieldSpec, MissionError};
use crate::occupancy::{CellState, CostScheme, GridMap, Metric};
use crate::planner::{astar_with, PlanQuery, Workspace};
use crate::world::Hotspot;

/// Default treatment time at each hotspot (mixing, spraying, logging).
pub const DEFAULT_DWELL_S: f64 = 1080.0;

/// Ground vehicle parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TractorSpec {
    pub speed_mps: f64,
    /// Time spent treating each hotspot, on top of travel.
    pub dwell_s: f64,
    pub depot: WorldPoint,
}

impl Default for TractorSpec {
    fn default() -> Self {
        Self {
            speed_mps: 0.2,
            dwell_s: DEFAULT_DWELL_S,
            depot: WorldPoint::new(0.0, 0.0),
        }
    }
}

/// A planned closed tour: depot, every hotspot once, back to the depot.
#[derive(Clone, Debug)]
pub struct HotspotTour {
    /// Hotspot indices in visit order; the depot is implicit at both ends.
    pub order: Vec<usize>,
    /// World polyline of every leg, including the final leg home.
    pub legs: Vec<Vec<WorldPoint>>,
    pub travel_m: f64,
    /// Travel time plus per-hotspot dwell.
    pub total_time_h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogisticsError {
    /// The depot is off the map or inside an obstacle.
    BadDepot,
    /// Hotspot `0` is off the map or inside an obstacle.
    BadHotspot(usize),
    /// Hotspot `0` cannot be reached from the depot network.
    Unreachable(usize),
}

impl fmt::Display for LogisticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogisticsError::BadDepot => write!(f, "depot is off the map or blocked"),
            LogisticsError::BadHotspot(i) => {
                write!(f, "hotspot {i} is off the map or blocked")
            }
            LogisticsError::Unreachable(i) => write!(f, "hotspot {i} is unreachable"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LogisticsError {}

#[derive(Clone, Copy)]
struct QueueItem {
    length: f64,
    cell: GridIndex,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueItem {}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: order by descending length so the
        // shortest entry pops first, with the cell index as a tiebreaker
        // for determinism.
        other
            .length
            .total_cmp(&self.length)
            .then_with(|| (other.cell.v, other.cell.u).cmp(&(self.cell.v, self.cell.u)))
    }
}

/// One-to-all shortest path lengths from `source` over 8-connected
/// non-Obstacle cells, in cell units. Unreachable cells stay infinite.
fn shortest_lengths(map: &GridMap, source: GridIndex) -> Vec<f64> {
    let w = map.width();
    let mut dist = alloc::vec![f64::INFINITY; w * map.height()];
    let at = |i: GridIndex| i.v * w + i.u;
    if map.state(source) == CellState::Obstacle {
        return dist;
    }
    dist[at(source)] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(QueueItem {
        length: 0.0,
        cell: source,
    });
    while let Some(QueueItem { length, cell }) = heap.pop() {
        if length > dist[at(cell)] {
            continue;
        }
        for n in map.neighbors8(cell) {
            if map.state(n) == CellState::Obstacle || map.diagonal_blocked(cell, n) {
                continue;
            }
            let step = if n.u != cell.u && n.v != cell.v {
                core::f64::consts::SQRT_2
            } else {
                1.0
            };
            let nd = length + step;
            if nd < dist[at(n)] {
                dist[at(n)] = nd;
                heap.push(QueueItem {
                    length: nd,
                    cell: n,
                });
            }
        }
    }
    dist
}

/// Full pairwise shortest-path matrix between `nodes`, flattened row-major,
/// in meters. `Err((i, j))` names the first pair with no route.
pub fn pairwise_distances(map: &GridMap, nodes: &[GridIndex]) -> Result<Vec<f64>, (usize, usize)> {
    let n = nodes.len();
    let mut out = alloc::vec![0.0; n * n];
    for (i, &src) in nodes.iter().enumerate() {
        let lens = shortest_lengths(map, src);
        for (j, &dst) in nodes.iter().enumerate() {
            let d = lens[dst.v * map.width() + dst.u];
            if !d.is_finite() {
                return Err((i, j));
            }
            out[i * n + j] = d * map.cell_side();
        }
    }
    Ok(out)
}

/// Greedy tour over the matrix: always drive to the nearest unvisited stop.
/// Node 0 is the depot. Ties keep the lowest index.
fn nearest_neighbor(matrix: &[f64], n: usize) -> Vec<usize> {
    let mut order = alloc::vec![0usize];
    let mut used = alloc::vec![false; n];
    used[0] = true;
    for _ in 1..n {
        let cur = *order.last().expect("order starts at the depot");
        let mut best: Option<(f64, usize)> = None;
        for (j, &used_j) in used.iter().enumerate() {
            if used_j {
                continue;
            }
            let d = matrix[cur * n + j];
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        let (_, j) = best.expect("an unvisited stop remains");
        used[j] = true;
        order.push(j);
    }
    order
}

fn closed_length(order: &[usize], matrix: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..order.len() {
        let a = order[k];
        let b = order[(k + 1) % order.len()];
        total += matrix[a * n + b];
    }
    total
}

/// Classic 2-opt to a fixed point: keep reversing any segment whose edge
/// swap strictly shortens the closed tour.
fn two_opt(order: &mut [usize], matrix: &[f64], n: usize) {
    let len = order.len();
    if len < 4 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..len - 1 {
            for k in i + 1..len {
                let a = order[i - 1];
                let b = order[i];
                let c = order[k];
                let d = order[(k + 1) % len];
                let before = matrix[a * n + b] + matrix[c * n + d];
                let after = matrix[a * n + c] + matrix[b * n + d];
                if after + 1e-9 < before {
                    order[i..=k].reverse();
                    improved = true;
                }
            }
        }
    }
}

/// Plans the treatment round: shortest-path matrix, nearest-neighbor order,
/// 2-opt refinement, then a grid route for every leg.
pub fn plan_tour(
    map: &GridMap,
    spec: &TractorSpec,
    hotspots: &[WorldPoint],
) -> Result<HotspotTour, LogisticsError> {
    if hotspots.is_empty() {
        return Ok(HotspotTour {
            order: Vec::new(),
            legs: Vec::new(),
            travel_m: 0.0,
            total_time_h: 0.0,
        });
    }

    let depot = map
        .world_to_grid(spec.depot)
        .map_err(|_| LogisticsError::BadDepot)?;
    if map.state(depot) == CellState::Obstacle {
        return Err(LogisticsError::BadDepot);
    }
    let mut nodes = alloc::vec![depot];
    for (i, h) in hotspots.iter().enumerate() {
        let c = map
            .world_to_grid(*h)
            .map_err(|_| LogisticsError::BadHotspot(i))?;
        if map.state(c) == CellState::Obstacle {
            return Err(LogisticsError::BadHotspot(i));
        }
        nodes.push(c);
    }

    let n = nodes.len();
    let matrix = pairwise_distances(map, &nodes)
        .map_err(|(i, j)| LogisticsError::Unreachable(if j == 0 { i - 1 } else { j - 1 }))?;

    let mut order = nearest_neighbor(&matrix, n);
    two_opt(&mut order, &matrix, n);

    let scheme = CostScheme::default();
    let mut ws = Workspace::new();
    let mut legs = Vec::with_capacity(n);
    let mut travel_m = 0.0;
    for k in 0..n {
        let src = nodes[order[k]];
        let dst = nodes[order[(k + 1) % n]];
        let q = PlanQuery {
            map,
            scheme: &scheme,
            source: src,
            destination: dst,
            metric: Metric::Shortest,
        };
        let plan = astar_with(&mut ws, &q).expect("matrix already proved the pair reachable");
        let pts: Vec<WorldPoint> = plan.path.iter().map(|&i| map.cell_center(i)).collect();
        for w in pts.windows(2) {
            travel_m += math::hypot(w[1].x - w[0].x, w[1].y - w[0].y);
        }
        legs.push(pts);
    }
    debug_assert!(
        (travel_m - closed_length(&order, &matrix, n)).abs() < 1e-6,
        "planned legs disagree with the distance matrix"
    );

    let total_time_h =
        (travel_m / spec.speed_mps + spec.dwell_s * hotspots.len() as f64) / 3600.0;
    Ok(HotspotTour {
        order: order[1..].iter().map(|&j| j - 1).collect(),
        legs,
        travel_m,
        total_time_h,
    })
}

/// Samples `n` distinct Free cells of `map` as single-specimen hotspots.
pub fn sample_hotspots(map: &GridMap, n: usize, seed: u64) -> Vec<Hotspot> {
    let free: Vec<GridIndex> = map
        .indices()
        .filter(|&i| map.state(i) == CellState::Free)
        .collect();
    assert!(
        n <= free.len(),
        "asked for {n} hotspots but only {} free cells exist",
        free.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = alloc::vec![false; free.len()];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.gen_range(0..free.len());
        if picked[k] {
            continue;
        }
        picked[k] = true;
        out.push(Hotspot {
            at: map.cell_center(free[k]),
            specimens: 1,
        });
    }
    out
}

/// Hours for the dumb alternative: drive the full coverage sweep at tractor
/// speed, treating everything whether infested or not.
pub fn ground_baseline_hours(field: &FieldSpec, spec: &TractorSpec) -> Result<f64, MissionError> {
    Ok(mission::ground_sweep_length(field)? / spec.speed_mps / 3600.0)
}
