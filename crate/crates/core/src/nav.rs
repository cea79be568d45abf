//! Onboard local navigation: replan triggering, endpoint projection into the
//! body-frame local map, local A*, and the optional measurement memory.
//!
//! The local planner runs on the 40×40-cell window built from the latest
//! depth frame (or, with memory on, sampled from the accumulated world-frame
//! evidence). Routes are planned from the fixed bottom-center source cell to
//! the projection of the next global waypoint, with the remaining global
//! route overlaid as cheap GlobalPath cells so the planner prefers rejoining
//! it.
//!
//! A `Blockage` from [`replan_local`] means the composed local map admits no
//! route at all (or no usable destination cell exists). The mission-level
//! blockage phenomenon, where every planned escape keeps meeting a wall that
//! fills the sensor FoV, is detected by the simulator from repeated fruitless
//! replans; the two are distinct conditions.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{
    body_to_world, world_to_body, BodyFrame, GridIndex, Pose4, WorldPoint, FLIGHT_ALTITUDE,
};
use crate::math;
use crate::occupancy::{CellState, CostScheme, GridMap, Metric};
use crate::planner::{astar_with, PlanQuery, Workspace};
use crate::sensor::{self, SensorSpec};

/// Persistent measurement memory: raw (uninflated) cell evidence accumulated
/// on a world-anchored grid. Each hit is quantized exactly once when written,
/// so the stored map never smears no matter how long the flight runs or how
/// often the vehicle turns; planning windows are sampled from it on demand.
#[derive(Clone, Debug)]
pub struct Memory {
    pub evidence: GridMap,
}

impl Memory {
    /// An all-Unknown store with the given world-frame geometry. Pass the
    /// extent of the area being flown; observations outside it are dropped.
    pub fn new(width: usize, height: usize, cell_side: f64, origin: WorldPoint) -> Self {
        Self {
            evidence: GridMap::new(width, height, cell_side, origin, CellState::Unknown),
        }
    }

    /// Folds one planning row into the store along exact world-frame rays.
    ///
    /// Each returning zone marks the cell holding its hit point Obstacle.
    /// Each zone also marks Free along its center ray, stopping short of the
    /// return by the reading's accuracy band plus one cell diagonal: a return
    /// scattered long by no more than the band then never paints the cell
    /// holding the true surface Free, so carving cleans phantom hits in open
    /// space but cannot open a corridor through a real obstacle face. The
    /// no-return reading (`range_max`) gets the same margin, because a far
    /// surface scattered past `range_max` clamps to exactly that value.
    ///
    /// The latest observation of a cell wins, and the cell the vehicle
    /// occupies is finally marked Free: being in it intact is itself an
    /// observation, and it clears any stale hit that noise once scattered
    /// onto the vehicle's own position.
    pub fn absorb_row(&mut self, row: &[f64; sensor::ZONES], pose: &Pose4, spec: &SensorSpec) {
        let o = pose.point();
        let diag = self.evidence.cell_side() * core::f64::consts::SQRT_2;
        // Free rays first, so no zone's carving can erase another zone's
        // hit from the same frame.
        for (zone, &d) in row.iter().enumerate() {
            let free_len = d - spec.accuracy_band(d) - diag;
            if free_len <= 0.0 {
                continue;
            }
            let ang = pose.phi - spec.zone_azimuth(zone);
            let end = WorldPoint::new(
                o.x + free_len * math::cos(ang),
                o.y + free_len * math::sin(ang),
            );
            for i in self.evidence.cells_on_segment(o, end) {
                self.evidence.set_state(i, CellState::Free);
            }
        }
        for (zone, &d) in row.iter().enumerate() {
            if d >= spec.range_max {
                continue;
            }
            let ang = pose.phi - spec.zone_azimuth(zone);
            let hit = WorldPoint::new(o.x + d * math::cos(ang), o.y + d * math::sin(ang));
            if let Ok(i) = self.evidence.world_to_grid(hit) {
                self.evidence.set_state(i, CellState::Obstacle);
            }
        }
        if let Ok(i) = self.evidence.world_to_grid(o) {
            self.evidence.set_state(i, CellState::Free);
        }
    }

    /// Cuts a planning window out of the store around `pose`: a square of
    /// the standard local size, aligned to the store's own grid and clamped
    /// to its extent, cells copied one to one. Returns None when the pose is
    /// outside the store.
    pub fn world_window(&self, pose: &Pose4) -> Option<GridMap> {
        let at = self.evidence.world_to_grid(pose.point()).ok()?;
        let side = crate::sensor::LOCAL_CELLS;
        let w = side.min(self.evidence.width());
        let h = side.min(self.evidence.height());
        let u0 = at.u.saturating_sub(w / 2).min(self.evidence.width() - w);
        let v0 = at.v.saturating_sub(h / 2).min(self.evidence.height() - h);
        let s = self.evidence.cell_side();
        let origin = WorldPoint::new(
            self.evidence.origin().x + u0 as f64 * s,
            self.evidence.origin().y + v0 as f64 * s,
        );
        let mut out = GridMap::new(w, h, s, origin, CellState::Unknown);
        for v in 0..h {
            for u in 0..w {
                out.set_state(
                    GridIndex::new(u, v),
                    self.evidence.state(GridIndex::new(u0 + u, v0 + v)),
                );
            }
        }
        Some(out)
    }

}

/// Navigation state of one agent.
#[derive(Clone, Debug)]
pub struct NavState {
    pub pose: Pose4,
    /// Global sweep waypoints, fixed for the mission.
    pub global_path: Vec<Pose4>,
    /// Index of the next waypoint to reach; never decreases.
    pub next_waypoint: usize,
    /// World-frame route currently being flown, when one is active.
    pub local_path: Option<Vec<Pose4>>,
    /// Measurement memory; `None` = memory mode off.
    pub memory: Option<Memory>,
}

impl NavState {
    pub fn new(pose: Pose4, global_path: Vec<Pose4>) -> Self {
        Self {
            pose,
            global_path,
            next_waypoint: 0,
            local_path: None,
            memory: None,
        }
    }

    /// World points of the mission still ahead: current position, then every
    /// uncaptured waypoint.
    pub fn remaining_global_points(&self) -> Vec<WorldPoint> {
        let mut pts = Vec::with_capacity(1 + self.global_path.len() - self.next_waypoint);
        pts.push(self.pose.point());
        pts.extend(self.global_path[self.next_waypoint..].iter().map(|p| p.point()));
        pts
    }
}

/// No local route exists. Carries the map that produced it for diagnostics.
#[derive(Clone, Debug)]
pub struct Blockage {
    pub local_map: GridMap,
}

impl fmt::Display for Blockage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no local route on the current map")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Blockage {}

/// True when the route still to be flown touches an Obstacle cell of the
/// local map. SafetyArea cells do not trigger: the planner prices the ring
/// and may legitimately squeeze through it, so triggering there would replan
/// forever while flying a squeeze that was chosen on purpose. Movement into
/// actually remembered obstacles is stopped separately by the collision
/// veto.
pub fn needs_replan(local_map: &GridMap, remaining_path: &[GridIndex]) -> bool {
    remaining_path
        .iter()
        .any(|&i| local_map.try_state(i) == Some(CellState::Obstacle))
}

/// Projects a world polyline into the cells of a body-frame map, in travel
/// order, clipping parts outside the window.
pub fn path_cells_in_window(
    map: &GridMap,
    frame: BodyFrame,
    polyline_world: &[WorldPoint],
) -> Vec<GridIndex> {
    let mut cells: Vec<GridIndex> = Vec::new();
    for w in polyline_world.windows(2) {
        let a = world_to_body(w[0], &frame);
        let b = world_to_body(w[1], &frame);
        for c in map.cells_on_segment(a, b) {
            if cells.last() != Some(&c) {
                cells.push(c);
            }
        }
    }
    if polyline_world.len() == 1 {
        if let Ok(c) = map.world_to_grid(world_to_body(polyline_world[0], &frame)) {
            cells.push(c);
        }
    }
    cells
}

/// Endpoint projection result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endpoints {
    /// Always the bottom-center cell the vehicle occupies.
    pub source: GridIndex,
    pub destination: GridIndex,
    /// The waypoint lies behind the vehicle; the destination is a stand-in
    /// on the near border and the caller should turn before planning.
    pub rear: bool,
    /// The waypoint lies outside the window; the destination is where the
    /// line of travel exits it.
    pub on_border: bool,
}

/// Projects the planning source and the next global waypoint into local-map
/// cells. See the module docs for the fallback rules.
pub fn project_endpoints(state: &NavState, local_map: &GridMap) -> Result<Endpoints, Blockage> {
    let wp = state
        .global_path
        .get(state.next_waypoint)
        .expect("no next waypoint to project")
        .point();
    let frame = BodyFrame::from_pose(&state.pose);
    let wp_body = world_to_body(wp, &frame);
    let source = GridIndex::new(local_map.width() / 2, 0);

    let (mut dest, rear, on_border) = if wp_body.y < 0.0 {
        // Behind: stand-in on the near border row, at the waypoint's side.
        let u = clamp_to_axis(wp_body.x, local_map.origin().x, local_map.cell_side(), local_map.width());
        (GridIndex::new(u, 0), true, true)
    } else {
        match local_map.world_to_grid(wp_body) {
            Ok(i) => (i, false, false),
            Err(_) => {
                let exit = window_exit_point(local_map, wp_body);
                let u = clamp_to_axis(exit.x, local_map.origin().x, local_map.cell_side(), local_map.width());
                let v = clamp_to_axis(exit.y, local_map.origin().y, local_map.cell_side(), local_map.height());
                (GridIndex::new(u, v), false, true)
            }
        }
    };
    if local_map.state(dest) == CellState::Obstacle {
        dest = nearest_border_non_obstacle(local_map, dest).ok_or_else(|| Blockage {
            local_map: local_map.clone(),
        })?;
    }
    Ok(Endpoints {
        source,
        destination: dest,
        rear,
        on_border,
    })
}

fn clamp_to_axis(x: f64, origin: f64, cell_side: f64, cells: usize) -> usize {
    let k = math::floor((x - origin) / cell_side) as i64;
    k.clamp(0, cells as i64 - 1) as usize
}

/// Where the ray from the body origin toward `target` leaves the window
/// rectangle.
fn window_exit_point(map: &GridMap, target: WorldPoint) -> WorldPoint {
    let o = map.origin();
    let (w, h) = map.extent();
    let mut t_exit = f64::INFINITY;
    if target.x > 0.0 {
        t_exit = t_exit.min((o.x + w) / target.x);
    } else if target.x < 0.0 {
        t_exit = t_exit.min(o.x / target.x);
    }
    if target.y > 0.0 {
        t_exit = t_exit.min((o.y + h) / target.y);
    } else if target.y < 0.0 {
        t_exit = t_exit.min(o.y / target.y);
    }
    if !t_exit.is_finite() {
        return WorldPoint::new(0.0, 0.0);
    }
    WorldPoint::new(target.x * t_exit, target.y * t_exit)
}

/// Closest non-Obstacle border cell to `from` by Chebyshev distance, ties
/// broken by smallest (u, v).
fn nearest_border_non_obstacle(map: &GridMap, from: GridIndex) -> Option<GridIndex> {
    let mut best: Option<(usize, GridIndex)> = None;
    let mut consider = |i: GridIndex| {
        if map.state(i) == CellState::Obstacle {
            return;
        }
        let d = i.chebyshev(from);
        match best {
            Some((bd, bi)) if (bd, bi) <= (d, i) => {}
            _ => best = Some((d, i)),
        }
    };
    let (w, h) = (map.width(), map.height());
    for u in 0..w {
        consider(GridIndex::new(u, 0));
        consider(GridIndex::new(u, h - 1));
    }
    for v in 1..h - 1 {
        consider(GridIndex::new(0, v));
        consider(GridIndex::new(w - 1, v));
    }
    best.map(|(_, i)| i)
}

/// Plans a local route on `local_map` toward the next global waypoint and
/// returns it as world poses at flight altitude with per-step yaw.
///
/// The remaining global route is overlaid as GlobalPath cells first, so with
/// nothing in the way the local route simply follows it. `Blockage` means no
/// route exists on the composed map (or the vehicle cell itself is buried).
pub fn replan_local(
    state: &NavState,
    local_map: &GridMap,
    metric: Metric,
) -> Result<Vec<Pose4>, Blockage> {
    let mut ws = Workspace::new();
    replan_local_with(&mut ws, state, local_map, &CostScheme::default(), metric)
}

/// [`replan_local`] with a reusable planner workspace and explicit costs.
pub fn replan_local_with(
    ws: &mut Workspace,
    state: &NavState,
    local_map: &GridMap,
    scheme: &CostScheme,
    metric: Metric,
) -> Result<Vec<Pose4>, Blockage> {
    let endpoints = project_endpoints(state, local_map)?;
    let frame = BodyFrame::from_pose(&state.pose);

    let mut composed = local_map.clone();
    let overlay = path_cells_in_window(&composed, frame, &state.remaining_global_points());
    composed.overlay_global_path(&overlay);

    if composed.state(endpoints.source) == CellState::Obstacle {
        // The vehicle occupies this cell without having crashed, so the
        // evidence here is stale or over-wide; plan a way out instead of
        // giving up on the spot.
        composed.set_state(endpoints.source, CellState::Free);
    }
    let plan = astar_with(
        ws,
        &PlanQuery {
            map: &composed,
            scheme,
            source: endpoints.source,
            destination: endpoints.destination,
            metric,
        },
    );
    let Some(plan) = plan else {
        return Err(Blockage {
            local_map: composed,
        });
    };

    let points: Vec<WorldPoint> = plan
        .path
        .iter()
        .map(|&i| body_to_world(composed.cell_center(i), &frame))
        .collect();
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, p)| Pose4::new(p.x, p.y, FLIGHT_ALTITUDE, yaw_for_step(&points, k)))
        .collect())
}

/// Every cell a world-frame polyline passes through on `map`, in order,
/// clipped to the map's extent.
pub fn polyline_cells(map: &GridMap, points: &[WorldPoint]) -> Vec<GridIndex> {
    let mut cells = Vec::new();
    if points.len() == 1 {
        if let Ok(i) = map.world_to_grid(points[0]) {
            cells.push(i);
        }
    }
    for w in points.windows(2) {
        cells.extend(map.cells_on_segment(w[0], w[1]));
    }
    cells
}

/// Plans over a world-aligned window of accumulated evidence.
///
/// The window (from [`Memory::world_window`]) shares the store's grid, so
/// every cell the route is audited against is exactly a cell a collision
/// check over the same store would test; a rotated body-frame window cannot
/// offer that, since resampling it aliases cells near obstacle boundaries by
/// one cell. The window is centered on the vehicle, so destinations behind
/// it need no special casing. The route runs from the vehicle's cell to the
/// next waypoint's cell (or, when that is outside the window, the last cell
/// toward it), with the remaining global route overlaid as cheap GlobalPath
/// cells.
pub fn replan_over_memory(
    ws: &mut Workspace,
    state: &NavState,
    window: &GridMap,
    scheme: &CostScheme,
    metric: Metric,
) -> Result<Vec<Pose4>, Blockage> {
    let wp = state
        .global_path
        .get(state.next_waypoint)
        .expect("no next waypoint to plan toward")
        .point();
    let Ok(source) = window.world_to_grid(state.pose.point()) else {
        return Err(Blockage {
            local_map: window.clone(),
        });
    };

    let mut composed = window.clone();
    let overlay = polyline_cells(&composed, &state.remaining_global_points());
    composed.overlay_global_path(&overlay);

    if composed.state(source) == CellState::Obstacle {
        // The vehicle occupies this cell without having crashed, so the
        // evidence here is stale or over-wide; plan a way out instead of
        // giving up on the spot.
        composed.set_state(source, CellState::Free);
    }

    let toward = composed.cells_on_segment(state.pose.point(), wp);
    let destination = match composed.world_to_grid(wp) {
        Ok(i) if composed.state(i) != CellState::Obstacle => i,
        // Outside the window or on an evidence cell: the nearest usable cell
        // back along the line of sight stands in.
        _ => match toward
            .iter()
            .rev()
            .copied()
            .find(|&i| composed.state(i) != CellState::Obstacle)
        {
            Some(i) => i,
            None => {
                return Err(Blockage {
                    local_map: composed,
                })
            }
        },
    };

    let plan = astar_with(
        ws,
        &PlanQuery {
            map: &composed,
            scheme,
            source,
            destination,
            metric,
        },
    );
    let Some(plan) = plan else {
        return Err(Blockage {
            local_map: composed,
        });
    };

    let points: Vec<WorldPoint> = plan.path.iter().map(|&i| composed.cell_center(i)).collect();
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, p)| Pose4::new(p.x, p.y, FLIGHT_ALTITUDE, yaw_for_step(&points, k)))
        .collect())
}

/// Yaw at `step`: the direction toward the point five steps ahead (or the
/// path end). At the very end the previous step's yaw is kept; a single-point
/// path yields 0.
pub fn yaw_for_step(path: &[WorldPoint], step: usize) -> f64 {
    assert!(step < path.len(), "step index past the path end");
    let last = path.len() - 1;
    let mut k = step;
    loop {
        let s = path[k];
        let d = path[(k + 5).min(last)];
        if d.x != s.x || d.y != s.y {
            return math::atan2(d.y - s.y, d.x - s.x);
        }
        if k == 0 {
            return 0.0;
        }
        k -= 1;
    }
}
