//! Discrete-time fleet simulation: sampled obstacle worlds, the five
//! navigation policies under comparison, collision and battery accounting,
//! and per-run records for the coverage experiments.
//!
//! A run is deterministic: one ChaCha8 stream seeded from the run seed
//! drives sensor noise, random-walk legs and detection rolls in tick order,
//! so a record can be reproduced bit for bit from (world, waypoints,
//! config). Worlds are deterministic in their own seed, so several policies
//! can be compared on the identical obstacle layout.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{body_to_world, world_to_body, BodyFrame, GridIndex, Pose4, WorldPoint};
use crate::math;
use crate::mission::{self, BatteryModel, FieldSpec};
use crate::nav::{
    needs_replan, path_cells_in_window, polyline_cells, replan_local_with, replan_over_memory,
    Blockage, Memory, NavState,
};
use crate::occupancy::{CellState, CostScheme, Footprint, GridMap, Metric, SAFETY_RADIUS_CELLS};
use crate::planner::Workspace;
use crate::sensor::{self, SensorSpec};
use crate::world::WorldModel;

/// Simulation step, matching the default depth-sensor frame rate.
pub const TICK_S: f64 = 1.0 / 15.0;
/// Horizontal cruise speed of every agent.
pub const CRUISE_SPEED_MPS: f64 = 1.0;
/// A waypoint counts as reached within this distance.
pub const CAPTURE_RADIUS_M: f64 = 0.1;
/// The random-walk policy gets a wider capture ring: it never aims at a
/// waypoint, so the tight ring would make its coverage figures all but zero.
pub const RANDOM_CAPTURE_RADIUS_M: f64 = 0.3;
/// Longest single random-walk leg.
pub const RANDOM_MAX_LEG_M: f64 = 4.0;
/// Obstacle discs are sized so each covers exactly one square meter.
pub const BARREL_RADIUS_M: f64 = 0.564_189_583_547_756_3;
/// Thin solid bands hugging the field perimeter so the boundary is visible
/// to the depth sensor rather than only an out-of-map condition.
pub const BOUNDARY_WALL_THICKNESS_M: f64 = 0.15;
/// Candidate headings the reactive policy scores per tick.
pub const REACTIVE_CANDIDATES: usize = 15;
/// Clearance the reactive policy keeps from the nearest return.
pub const REACTIVE_MARGIN_M: f64 = 0.15;
/// Lateral distance a memory-assisted agent scans to one side before
/// reversing, and to the other before declaring a hard blockage.
pub const SCAN_LIMIT_M: f64 = 4.0;
/// Seconds without reaching a waypoint before an agent is declared stuck.
pub const STUCK_TIMEOUT_S: f64 = 45.0;
/// Consecutive rejected placements before world sampling gives up.
pub const SAMPLE_REJECTION_LIMIT: usize = 10_000;

/// Navigation policy flown by an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Flies waypoint to waypoint in a straight line, ignoring the sensor.
    Blind,
    /// Random yaw, then a leg bounded by the nearest depth return.
    Random,
    /// Local A* over the cost-weighted occupancy classes.
    Weighted,
    /// Local A* over pure step length, obstacle cells excluded.
    Shortest,
    /// Greedy single-frame steering toward the waypoint.
    Reactive,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Blind,
        Policy::Random,
        Policy::Weighted,
        Policy::Shortest,
        Policy::Reactive,
    ];

    /// Short code used in result tables.
    pub fn code(self) -> &'static str {
        match self {
            Policy::Blind => "B",
            Policy::Random => "R",
            Policy::Weighted => "W",
            Policy::Shortest => "S",
            Policy::Reactive => "RE",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        let m = |t: &str| s.eq_ignore_ascii_case(t);
        if m("b") || m("blind") {
            Some(Policy::Blind)
        } else if m("r") || m("random") {
            Some(Policy::Random)
        } else if m("w") || m("weighted") {
            Some(Policy::Weighted)
        } else if m("s") || m("shortest") {
            Some(Policy::Shortest)
        } else if m("re") || m("reactive") {
            Some(Policy::Reactive)
        } else {
            None
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Bernoulli detector evaluated once per specimen on first approach.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorSpec {
    /// Per-specimen detection probability.
    pub p: f64,
    /// Radius around the agent within which specimens are evaluated.
    pub footprint_radius: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            p: 0.8,
            footprint_radius: 1.0,
        }
    }
}

/// One detected specimen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub hotspot: usize,
    pub specimen: usize,
    pub at: WorldPoint,
}

/// Run events worth timestamping; per-frame captures are omitted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    /// The active route touched obstacle or safety cells (or a move was
    /// vetoed) and a replan is required.
    Trigger,
    /// A fresh local route was produced.
    Replan,
    WaypointReached(usize),
    /// Memory-assisted lateral scan started after a failed replan.
    ScanStart,
    /// The scan found a map on which a route exists again.
    ScanRecovered,
    /// Hard blockage: the run halts.
    Blockage,
    /// The agent hit an obstacle: the run halts.
    Collision,
}

/// Aggregate result of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub env: String,
    pub density_pct: u8,
    pub policy: Policy,
    pub seed: u64,
    pub waypoints_total: usize,
    pub waypoints_reached: usize,
    pub collisions: usize,
    pub blockages: usize,
    pub flight_s: f64,
    pub detections: Vec<Detection>,
}

impl RunRecord {
    /// Covered waypoints as a percentage.
    pub fn pct(&self) -> f64 {
        100.0 * self.waypoints_reached as f64 / self.waypoints_total.max(1) as f64
    }
}

/// Record plus the timestamped event log.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub events: Vec<(f64, Event)>,
}

/// Everything configurable about a single run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub policy: Policy,
    /// Keep evidence from earlier frames. On by default: a single frame
    /// forgets an obstacle as soon as the heading turns away from it, so the
    /// planned policies fly with the persisted map unless ablating it.
    pub memory: bool,
    pub seed: u64,
    pub battery: BatteryModel,
    pub sensor: SensorSpec,
    pub scheme: CostScheme,
    pub detector: DetectorSpec,
    pub stuck_timeout_s: f64,
}

impl RunConfig {
    pub fn new(policy: Policy, seed: u64) -> Self {
        Self {
            policy,
            memory: true,
            seed,
            battery: BatteryModel::default(),
            sensor: SensorSpec::default(),
            scheme: CostScheme::default(),
            detector: DetectorSpec::default(),
            stuck_timeout_s: STUCK_TIMEOUT_S,
        }
    }
}

/// World sampling failed: too many consecutive placements were rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleError {
    pub placed: usize,
    pub requested: usize,
}

impl fmt::Display for SampleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "placed {} of {} obstacles before {} consecutive rejections",
            self.placed, self.requested, SAMPLE_REJECTION_LIMIT
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SampleError {}

/// Derives the obstacle-layout seed for (environment, density, run seed) so
/// that every policy compared at one tuple sees the same world while
/// different tuples get decorrelated layouts.
pub fn world_seed(env_code: u8, density_pct: u8, seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((env_code as u64) << 8) | density_pct as u64)
}

/// Four thin wall bands just inside the field perimeter.
pub fn boundary_walls(field: &FieldSpec) -> Vec<Footprint> {
    let t = BOUNDARY_WALL_THICKNESS_M;
    let (w, h) = (field.width, field.height);
    alloc::vec![
        Footprint::Rect {
            min: WorldPoint::new(0.0, 0.0),
            max: WorldPoint::new(w, t),
        },
        Footprint::Rect {
            min: WorldPoint::new(0.0, h - t),
            max: WorldPoint::new(w, h),
        },
        Footprint::Rect {
            min: WorldPoint::new(0.0, 0.0),
            max: WorldPoint::new(t, h),
        },
        Footprint::Rect {
            min: WorldPoint::new(w - t, 0.0),
            max: WorldPoint::new(w, h),
        },
    ]
}

/// Builds a simulation world: crop rows, boundary walls, and
/// `density_pct`% of the field area in randomly placed one-square-meter
/// barrels. Placements that touch a waypoint cell or disconnect any
/// waypoint from the rest are rejected and redrawn.
pub fn build_world(
    field: &FieldSpec,
    density_pct: u8,
    waypoints: &[Pose4],
    seed: u64,
) -> Result<WorldModel, SampleError> {
    let mut shapes = mission::row_footprints(field);
    shapes.extend(boundary_walls(field));
    let base = mission::blank_map(field);

    let mut scratch = base.clone();
    for s in &shapes {
        scratch.mark_obstacle_footprint(s);
    }
    let wp_cells: Vec<GridIndex> = waypoints
        .iter()
        .map(|p| {
            scratch
                .world_to_grid(p.point())
                .expect("waypoint outside the field")
        })
        .collect();
    debug_assert!(
        wp_cells
            .iter()
            .all(|&i| scratch.state(i) != CellState::Obstacle),
        "a waypoint sits on a blocked cell"
    );

    let requested = math::ceil(density_pct as f64 / 100.0 * field.width * field.height - 1e-9)
        .max(0.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed = 0usize;
    let mut rejections = 0usize;
    while placed < requested {
        if rejections >= SAMPLE_REJECTION_LIMIT {
            return Err(SampleError { placed, requested });
        }
        let cx = rng.gen_range(BARREL_RADIUS_M..field.width - BARREL_RADIUS_M);
        let cy = rng.gen_range(BARREL_RADIUS_M..field.height - BARREL_RADIUS_M);
        let disc = Footprint::Disc {
            center: WorldPoint::new(cx, cy),
            radius: BARREL_RADIUS_M,
        };
        let touches_waypoint = wp_cells.iter().any(|&i| {
            let (lo, hi) = scratch.cell_rect(i);
            disc.overlaps_rect(lo, hi)
        });
        if touches_waypoint {
            rejections += 1;
            continue;
        }
        let undo = stamp_remember(&mut scratch, &disc);
        if connected(&scratch, &wp_cells) {
            shapes.push(disc);
            placed += 1;
            rejections = 0;
        } else {
            for &(i, s) in undo.iter().rev() {
                scratch.set_state(i, s);
            }
            rejections += 1;
        }
    }
    Ok(WorldModel::build(&base, shapes))
}

/// Stamps `shape` as Obstacle and returns the cells changed with their prior
/// states, so a rejected placement can be reverted.
fn stamp_remember(map: &mut GridMap, shape: &Footprint) -> Vec<(GridIndex, CellState)> {
    let (lo, hi) = shape.bbox();
    let origin = map.origin();
    let side = map.cell_side();
    let u0 = math::floor((lo.x - origin.x) / side).max(0.0) as usize;
    let v0 = math::floor((lo.y - origin.y) / side).max(0.0) as usize;
    let u1 = (math::ceil((hi.x - origin.x) / side).max(0.0) as usize).min(map.width());
    let v1 = (math::ceil((hi.y - origin.y) / side).max(0.0) as usize).min(map.height());
    let mut undo = Vec::new();
    for v in v0..v1 {
        for u in u0..u1 {
            let i = GridIndex::new(u, v);
            let (clo, chi) = map.cell_rect(i);
            if shape.overlaps_rect(clo, chi) && map.state(i) != CellState::Obstacle {
                undo.push((i, map.state(i)));
                map.set_state(i, CellState::Obstacle);
            }
        }
    }
    undo
}

/// True when every anchor cell sits in the same 8-connected non-Obstacle
/// component as the first. Matches the planner's movement model.
fn connected(map: &GridMap, anchors: &[GridIndex]) -> bool {
    let Some(&start) = anchors.first() else {
        return true;
    };
    if map.state(start) == CellState::Obstacle {
        return false;
    }
    let w = map.width();
    let mut seen = alloc::vec![false; w * map.height()];
    let at = |i: GridIndex| i.v * w + i.u;
    let mut stack = alloc::vec![start];
    seen[at(start)] = true;
    while let Some(c) = stack.pop() {
        for n in map.neighbors8(c) {
            if !seen[at(n)]
                && map.state(n) != CellState::Obstacle
                && !map.diagonal_blocked(c, n)
            {
                seen[at(n)] = true;
                stack.push(n);
            }
        }
    }
    anchors.iter().all(|&i| seen[at(i)])
}

/// Rolls the detector once per specimen of every hotspot within the
/// footprint radius of `pose`. Stateless: each call draws a fresh stream
/// from `seed`, with one draw per specimen in world order regardless of
/// range so the stream layout does not depend on the pose.
pub fn detect(pose: Pose4, world: &WorldModel, det: &DetectorSpec, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (hi, h) in world.hotspots.iter().enumerate() {
        let within =
            math::hypot(h.at.x - pose.x, h.at.y - pose.y) <= det.footprint_radius + 1e-12;
        for s in 0..h.specimens as usize {
            let hit = rng.gen::<f64>() < det.p;
            if within && hit {
                out.push(Detection {
                    hotspot: hi,
                    specimen: s,
                    at: h.at,
                });
            }
        }
    }
    out
}

struct Run<'a> {
    world: &'a WorldModel,
    waypoints: &'a [Pose4],
    cfg: &'a RunConfig,
    rng: ChaCha8Rng,
    pose: Pose4,
    next_wp: usize,
    t: f64,
    last_progress_t: f64,
    capture_radius: f64,
    /// Per hotspot, per specimen: whether its one detection roll happened.
    resolved: Vec<Vec<bool>>,
    record: RunRecord,
    events: Vec<(f64, Event)>,
}

impl<'a> Run<'a> {
    fn new(
        env: &str,
        density_pct: u8,
        world: &'a WorldModel,
        waypoints: &'a [Pose4],
        cfg: &'a RunConfig,
    ) -> Self {
        let resolved = world
            .hotspots
            .iter()
            .map(|h| alloc::vec![false; h.specimens as usize])
            .collect();
        let record = RunRecord {
            env: String::from(env),
            density_pct,
            policy: cfg.policy,
            seed: cfg.seed,
            waypoints_total: waypoints.len(),
            waypoints_reached: 0,
            collisions: 0,
            blockages: 0,
            flight_s: 0.0,
            detections: Vec::new(),
        };
        Self {
            world,
            waypoints,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pose: waypoints[0],
            next_wp: 0,
            t: 0.0,
            last_progress_t: 0.0,
            capture_radius: if cfg.policy == Policy::Random {
                RANDOM_CAPTURE_RADIUS_M
            } else {
                CAPTURE_RADIUS_M
            },
            resolved,
            record,
            events: Vec::new(),
        }
    }

    fn budget(&self) -> f64 {
        self.cfg.battery.explore_budget_s
    }

    /// Captures every consecutive waypoint now within the capture ring.
    fn capture(&mut self) {
        while self.next_wp < self.waypoints.len() {
            let wp = self.waypoints[self.next_wp].point();
            if math::hypot(wp.x - self.pose.x, wp.y - self.pose.y) > self.capture_radius {
                break;
            }
            self.events
                .push((self.t, Event::WaypointReached(self.next_wp)));
            self.next_wp += 1;
            self.record.waypoints_reached += 1;
            self.last_progress_t = self.t;
        }
    }

    /// First entry into a hotspot footprint rolls each specimen exactly
    /// once; a miss is permanent.
    fn roll_detections(&mut self) {
        for (hi, h) in self.world.hotspots.iter().enumerate() {
            let d = math::hypot(h.at.x - self.pose.x, h.at.y - self.pose.y);
            if d > self.cfg.detector.footprint_radius {
                continue;
            }
            for s in 0..h.specimens as usize {
                if self.resolved[hi][s] {
                    continue;
                }
                self.resolved[hi][s] = true;
                if self.rng.gen::<f64>() < self.cfg.detector.p {
                    self.record.detections.push(Detection {
                        hotspot: hi,
                        specimen: s,
                        at: h.at,
                    });
                }
            }
        }
    }

    /// Moves to `to` unless the swept segment hits a true obstacle; a hit is
    /// a crash and ends the run. Returns true on crash.
    fn try_move(&mut self, to: WorldPoint) -> bool {
        if self.world.sweep_collides(self.pose.point(), to) {
            #[cfg(feature = "std")]
            std::eprintln!(
                "collision t={:.3} from=({:.4},{:.4}) phi={:.4} to=({:.4},{:.4})",
                self.t, self.pose.x, self.pose.y, self.pose.phi, to.x, to.y
            );
            self.record.collisions += 1;
            self.events.push((self.t, Event::Collision));
            true
        } else {
            self.pose.x = to.x;
            self.pose.y = to.y;
            false
        }
    }

    fn declare_blockage(&mut self) {
        self.record.blockages += 1;
        self.events.push((self.t, Event::Blockage));
    }

    fn finish(mut self) -> RunOutput {
        self.record.flight_s = self.t.min(self.budget());
        RunOutput {
            record: self.record,
            events: self.events,
        }
    }
}

/// Simulates one agent flying `waypoints` inside `world` under `cfg`.
///
/// The run ends at the exploration battery budget, on a collision, on a
/// hard blockage, or when every waypoint is reached.
pub fn run_single(
    env: &str,
    density_pct: u8,
    world: &WorldModel,
    waypoints: &[Pose4],
    cfg: &RunConfig,
) -> RunOutput {
    assert!(!waypoints.is_empty(), "a run needs at least one waypoint");
    let mut r = Run::new(env, density_pct, world, waypoints, cfg);
    r.capture();
    r.roll_detections();
    match cfg.policy {
        Policy::Blind => run_blind(r),
        Policy::Random => run_random(r),
        Policy::Reactive => run_reactive(r),
        Policy::Weighted => run_local(r, Metric::Weighted),
        Policy::Shortest => run_local(r, Metric::Shortest),
    }
}

fn run_blind(mut r: Run) -> RunOutput {
    while r.t + 1e-9 < r.budget() && r.next_wp < r.waypoints.len() {
        let wp = r.waypoints[r.next_wp].point();
        let dx = wp.x - r.pose.x;
        let dy = wp.y - r.pose.y;
        let d = math::hypot(dx, dy);
        let step = (CRUISE_SPEED_MPS * TICK_S).min(d);
        let to = WorldPoint::new(r.pose.x + dx / d * step, r.pose.y + dy / d * step);
        r.pose.phi = math::atan2(dy, dx);
        if r.try_move(to) {
            break;
        }
        r.capture();
        r.roll_detections();
        r.t += TICK_S;
    }
    r.finish()
}

fn run_random(mut r: Run) -> RunOutput {
    // Heading and remaining length of the active leg.
    let mut leg: Option<(f64, f64)> = None;
    while r.t + 1e-9 < r.budget() && r.next_wp < r.waypoints.len() {
        if leg.is_none() {
            let heading = r.rng.gen_range(-core::f64::consts::PI..core::f64::consts::PI);
            r.pose.phi = heading;
            let noise_seed = r.rng.next_u64();
            let frame = sensor::capture_at(r.world, r.pose, &r.cfg.sensor, noise_seed, r.t);
            let row = frame.planning_row();
            let clearance = row.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let cap = clearance.min(RANDOM_MAX_LEG_M).max(0.0);
            let u = 1.0 - r.rng.gen::<f64>();
            leg = Some((heading, u * cap));
        }
        let (heading, remaining) = leg.unwrap();
        let step = (CRUISE_SPEED_MPS * TICK_S).min(remaining);
        let to = WorldPoint::new(
            r.pose.x + math::cos(heading) * step,
            r.pose.y + math::sin(heading) * step,
        );
        if r.try_move(to) {
            break;
        }
        let left = remaining - step;
        leg = if left > 1e-9 {
            Some((heading, left))
        } else {
            None
        };
        r.capture();
        r.roll_detections();
        r.t += TICK_S;
    }
    r.finish()
}

fn run_reactive(mut r: Run) -> RunOutput {
    let fov = r.cfg.sensor.fov_h();
    while r.t + 1e-9 < r.budget() && r.next_wp < r.waypoints.len() {
        let wp = r.waypoints[r.next_wp].point();
        let noise_seed = r.rng.next_u64();
        let frame = sensor::capture_at(r.world, r.pose, &r.cfg.sensor, noise_seed, r.t);
        let row = frame.planning_row();
        let current_d = math::hypot(wp.x - r.pose.x, wp.y - r.pose.y);

        // Score one candidate per FoV slice: step as far as the slice's
        // return allows (with margin), judged by endpoint distance to the
        // waypoint.
        let mut best: Option<(f64, f64, f64)> = None; // (score, heading, step)
        for k in 0..REACTIVE_CANDIDATES {
            let theta = ((k as f64 + 0.5) / REACTIVE_CANDIDATES as f64 - 0.5) * fov;
            let Some(zone) = r.cfg.sensor.zone_of_azimuth(theta) else {
                continue;
            };
            let free = row[zone] - REACTIVE_MARGIN_M;
            let step = (CRUISE_SPEED_MPS * TICK_S).min(free.max(0.0));
            let heading = r.pose.phi - theta;
            let ex = r.pose.x + math::cos(heading) * step;
            let ey = r.pose.y + math::sin(heading) * step;
            let score = math::hypot(wp.x - ex, wp.y - ey);
            if best.map_or(true, |(s, _, _)| score + 1e-12 < s) {
                best = Some((score, heading, step));
            }
        }
        let (score, heading, step) = best.expect("candidate headings cover the FoV");

        if step <= 1e-9 || score + 1e-9 >= current_d {
            // Nothing in the FoV improves matters: turn toward the waypoint
            // and try again next frame.
            r.pose.phi = math::atan2(wp.y - r.pose.y, wp.x - r.pose.x);
        } else {
            r.pose.phi = heading;
            let to = WorldPoint::new(
                r.pose.x + math::cos(heading) * step,
                r.pose.y + math::sin(heading) * step,
            );
            if r.try_move(to) {
                break;
            }
        }
        r.capture();
        r.roll_detections();
        if r.t - r.last_progress_t > r.cfg.stuck_timeout_s {
            r.declare_blockage();
            break;
        }
        r.t += TICK_S;
    }
    r.finish()
}

/// Memory-assisted lateral scan state.
struct ScanState {
    /// Body-frame x direction of travel: +1 right, -1 left.
    side: f64,
    traveled: f64,
    reversed: bool,
}

/// Picks the scan direction: the side of the vehicle with more Free cells in
/// the world-frame window, judged by mapping each cell center into the body
/// frame. Ties go left.
fn open_side(local: &GridMap, frame: &BodyFrame) -> f64 {
    let (mut left, mut right) = (0usize, 0usize);
    for i in local.indices() {
        if local.state(i) != CellState::Free {
            continue;
        }
        let x = world_to_body(local.cell_center(i), frame).x;
        if x < 0.0 {
            left += 1;
        } else if x > 0.0 {
            right += 1;
        }
    }
    if right > left {
        1.0
    } else {
        -1.0
    }
}

/// Plans the next stretch of route on `local`: over the accumulated store's
/// own grid when memory is on, over the single sensor frame otherwise.
fn plan_route(
    ws: &mut Workspace,
    nav: &NavState,
    local: &GridMap,
    memory: bool,
    scheme: &CostScheme,
    metric: Metric,
) -> Result<Vec<Pose4>, Blockage> {
    if memory {
        replan_over_memory(ws, nav, local, scheme, metric)
    } else {
        replan_local_with(ws, nav, local, scheme, metric)
    }
}

/// Whether a chord would enter a cell the map knows to be an obstacle. With
/// memory on the store keeps the occupied cell Free, so a stale hit there
/// cannot wedge the vehicle; without memory a fresh hit on the occupied cell
/// legitimately vetoes every move, and the run ends as stuck.
fn chord_hits_known_obstacle(local: &GridMap, a: WorldPoint, b: WorldPoint) -> bool {
    local
        .cells_on_segment(a, b)
        .iter()
        .any(|&i| local.state(i) == CellState::Obstacle)
}

/// Advances up to `fuel` meters along `path` starting from `from` at path
/// index `at`. Returns the end point, the new index, and the yaw of the
/// last segment followed.
fn walk_route(path: &[Pose4], mut at: usize, from: WorldPoint, mut fuel: f64) -> (WorldPoint, usize, Option<f64>) {
    let mut p = from;
    let mut yaw = None;
    while fuel > 1e-12 && at < path.len() {
        let tgt = path[at].point();
        let dx = tgt.x - p.x;
        let dy = tgt.y - p.y;
        let d = math::hypot(dx, dy);
        if d <= 1e-12 {
            at += 1;
            continue;
        }
        let step = fuel.min(d);
        p = WorldPoint::new(p.x + dx / d * step, p.y + dy / d * step);
        yaw = Some(path[at].phi);
        fuel -= step;
        if step >= d - 1e-12 {
            at += 1;
        }
    }
    (p, at, yaw)
}

fn run_local(mut r: Run, metric: Metric) -> RunOutput {
    let mut ws = Workspace::new();
    let mut nav = NavState::new(r.pose, r.waypoints.to_vec());
    let mut local_at = 0usize;
    let mut scan: Option<ScanState> = None;

    'ticks: while r.t + 1e-9 < r.budget() && r.next_wp < r.waypoints.len() {
        nav.pose = r.pose;
        nav.next_waypoint = r.next_wp;

        // Sense, then fold the frame into the world-frame memory when it is
        // on. Memory mode plans on a world-aligned cut of the store so the
        // planning cells and collision-check cells are the same grid; the
        // single-frame mode plans on the sensor-frame window directly.
        let noise_seed = r.rng.next_u64();
        let depth = sensor::capture_at(r.world, r.pose, &r.cfg.sensor, noise_seed, r.t);
        let row = depth.planning_row();
        let bframe = BodyFrame::from_pose(&r.pose);
        let mut local = if r.cfg.memory {
            let truth = r.world.truth_map();
            let mem = nav.memory.get_or_insert_with(|| {
                Memory::new(truth.width(), truth.height(), truth.cell_side(), truth.origin())
            });
            mem.absorb_row(&row, &r.pose, &r.cfg.sensor);
            match mem.world_window(&r.pose) {
                Some(w) => w,
                None => {
                    // Outside the mapped area entirely; nothing to plan on.
                    r.declare_blockage();
                    break 'ticks;
                }
            }
        } else {
            sensor::backproject_evidence(&row, &r.cfg.sensor)
        };
        local.inflate_safety(SAFETY_RADIUS_CELLS);
        // Movement safety veto over the best uninflated knowledge. With
        // memory on this reads the world-frame store directly, matching the
        // grid the route was planned on.
        let blocked_move = |mem: &Option<Memory>, local: &GridMap, a: WorldPoint, b: WorldPoint| {
            if let Some(m) = mem {
                chord_hits_known_obstacle(&m.evidence, a, b)
            } else {
                chord_hits_known_obstacle(local, world_to_body(a, &bframe), world_to_body(b, &bframe))
            }
        };
        if scan.is_some() {
            match plan_route(&mut ws, &nav, &local, r.cfg.memory, &r.cfg.scheme, metric) {
                Ok(path) => {
                    nav.local_path = Some(path);
                    local_at = 0;
                    scan = None;
                    r.events.push((r.t, Event::ScanRecovered));
                    r.last_progress_t = r.t;
                    // Fall through and fly the recovered route this tick.
                }
                Err(_) => {
                    let s = scan.as_mut().expect("scan state checked above");
                    let step = CRUISE_SPEED_MPS * TICK_S;
                    let lateral = body_to_world(WorldPoint::new(s.side, 0.0), &bframe);
                    let to = WorldPoint::new(
                        r.pose.x + (lateral.x - r.pose.x) * step,
                        r.pose.y + (lateral.y - r.pose.y) * step,
                    );
                    let into_known_obstacle =
                        blocked_move(&nav.memory, &local, r.pose.point(), to);
                    if into_known_obstacle || s.traveled + step > SCAN_LIMIT_M + 1e-9 {
                        if s.reversed {
                            r.declare_blockage();
                            break 'ticks;
                        }
                        s.side = -s.side;
                        s.traveled = 0.0;
                        s.reversed = true;
                    } else {
                        if r.try_move(to) {
                            break 'ticks;
                        }
                        s.traveled += step;
                    }
                    r.capture();
                    r.roll_detections();
                    r.t += TICK_S;
                    continue 'ticks;
                }
            }
        }

        // Without memory the planning window is the forward sensor wedge, so
        // a waypoint behind it cannot be planned toward: turn in place so the
        // next frame faces it. The world window is centered on the vehicle
        // and plans behind naturally.
        let wp_world = r.waypoints[r.next_wp].point();
        if !r.cfg.memory && world_to_body(wp_world, &bframe).y < 0.0 {
            r.pose.phi = math::atan2(wp_world.y - r.pose.y, wp_world.x - r.pose.x);
            nav.local_path = None;
            r.capture();
            r.roll_detections();
            r.t += TICK_S;
            continue 'ticks;
        }

        // Replan when no route is active, it is used up, or it now touches
        // obstacle or safety cells of the fresh map.
        let need = match &nav.local_path {
            None => true,
            Some(path) if local_at >= path.len() => true,
            Some(path) => {
                let mut remaining = Vec::with_capacity(1 + path.len() - local_at);
                remaining.push(r.pose.point());
                remaining.extend(path[local_at..].iter().map(|p| p.point()));
                let cells = if r.cfg.memory {
                    polyline_cells(&local, &remaining)
                } else {
                    path_cells_in_window(&local, bframe, &remaining)
                };
                needs_replan(&local, &cells)
            }
        };
        if need {
            r.events.push((r.t, Event::Trigger));
            match plan_route(&mut ws, &nav, &local, r.cfg.memory, &r.cfg.scheme, metric) {
                Ok(path) => {
                    nav.local_path = Some(path);
                    local_at = 0;
                    r.events.push((r.t, Event::Replan));
                }
                Err(_) => {
                    if r.cfg.memory {
                        scan = Some(ScanState {
                            side: open_side(&local, &bframe),
                            traveled: 0.0,
                            reversed: false,
                        });
                        nav.local_path = None;
                        r.events.push((r.t, Event::ScanStart));
                        r.last_progress_t = r.t;
                    } else {
                        r.declare_blockage();
                        break 'ticks;
                    }
                    r.capture();
                    r.roll_detections();
                    r.t += TICK_S;
                    continue 'ticks;
                }
            }
        }

        // Fly one tick along the route, vetoing a move that would sweep
        // through cells the current map knows to be obstacles.
        if let Some(path) = &nav.local_path {
            let (to, at_next, yaw) =
                walk_route(path, local_at, r.pose.point(), CRUISE_SPEED_MPS * TICK_S);
            if blocked_move(&nav.memory, &local, r.pose.point(), to) {
                nav.local_path = None;
                r.events.push((r.t, Event::Trigger));
            } else {
                if r.try_move(to) {
                    break 'ticks;
                }
                local_at = at_next;
                if let Some(phi) = yaw {
                    r.pose.phi = phi;
                }
            }
        }

        let before = r.next_wp;
        r.capture();
        if r.next_wp != before {
            // The projected destination moved: plan fresh next tick.
            nav.local_path = None;
        }
        r.roll_detections();

        if r.next_wp < r.waypoints.len() && r.t - r.last_progress_t > r.cfg.stuck_timeout_s {
            if r.cfg.memory {
                scan = Some(ScanState {
                    side: open_side(&local, &bframe),
                    traveled: 0.0,
                    reversed: false,
                });
                nav.local_path = None;
                r.events.push((r.t, Event::ScanStart));
                r.last_progress_t = r.t;
            } else {
                r.declare_blockage();
                break 'ticks;
            }
        }
        r.t += TICK_S;
    }
    r.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FLIGHT_ALTITUDE;
    use crate::planner::{astar_with, PlanQuery};
    use crate::world::Hotspot;
    use core::f64::consts::PI;

    fn rowless_field() -> FieldSpec {
        let mut f = FieldSpec::square(10.0);
        f.row_spacing = 1e9;
        f
    }

    fn env_sweep(field: &FieldSpec) -> Vec<Pose4> {
        let tiles = mission::partition(field, mission::DEFAULT_TILE_SIDE);
        mission::sweep_path(&tiles[0], field).expect("environment fields sweep cleanly")
    }

    #[test]
    fn world_seed_separates_configurations() {
        let a = world_seed(1, 5, 7);
        assert_eq!(a, world_seed(1, 5, 7));
        assert_ne!(a, world_seed(2, 5, 7));
        assert_ne!(a, world_seed(1, 10, 7));
        assert_ne!(a, world_seed(1, 5, 8));
    }

    #[test]
    fn density_zero_keeps_only_rows_and_walls() {
        let field = FieldSpec::env1();
        let wps = env_sweep(&field);
        let world = build_world(&field, 0, &wps, world_seed(1, 0, 1)).unwrap();
        let rows = mission::row_footprints(&field).len();
        assert_eq!(world.obstacles.len(), rows + 4);
    }

    #[test]
    fn density_scales_with_field_area() {
        let field = FieldSpec::env3();
        let wps = env_sweep(&field);
        let world = build_world(&field, 10, &wps, world_seed(3, 10, 1)).unwrap();
        let rows = mission::row_footprints(&field).len();
        // 10% of a 40 m x 40 m field in one-square-meter barrels.
        assert_eq!(world.obstacles.len(), rows + 4 + 160);
    }

    #[test]
    fn sampling_spares_waypoints_and_keeps_them_connected() {
        let field = FieldSpec::env2();
        let wps = env_sweep(&field);
        let world = build_world(&field, 10, &wps, world_seed(2, 10, 4)).unwrap();
        let truth = world.truth_map();

        let wp_cells: Vec<GridIndex> = wps
            .iter()
            .map(|p| truth.world_to_grid(p.point()).unwrap())
            .collect();
        for shape in &world.obstacles {
            if let Footprint::Disc { .. } = shape {
                for &i in &wp_cells {
                    let (lo, hi) = truth.cell_rect(i);
                    assert!(!shape.overlaps_rect(lo, hi), "a barrel covers waypoint cell {i:?}");
                }
            }
        }
        for &i in &wp_cells {
            assert_ne!(truth.state(i), CellState::Obstacle);
        }

        let scheme = CostScheme::default();
        let mut ws = Workspace::new();
        for pair in wp_cells.windows(2) {
            let q = PlanQuery {
                map: truth,
                scheme: &scheme,
                source: pair[0],
                destination: pair[1],
                metric: Metric::Shortest,
            };
            assert!(
                astar_with(&mut ws, &q).is_some(),
                "waypoint pair {:?} -> {:?} disconnected",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn blind_covers_an_empty_small_field() {
        let field = FieldSpec::env1();
        let wps = env_sweep(&field);
        let world = build_world(&field, 0, &wps, world_seed(1, 0, 1)).unwrap();
        let out = run_single("env1", 0, &world, &wps, &RunConfig::new(Policy::Blind, 1));
        assert_eq!(out.record.waypoints_reached, out.record.waypoints_total);
        assert_eq!(out.record.collisions, 0);
        assert_eq!(out.record.blockages, 0);
        // The sweep is 39.95 m at 1 m/s plus per-waypoint tick quantization.
        assert!(
            out.record.flight_s > 38.0 && out.record.flight_s < 50.0,
            "flight took {:.1} s",
            out.record.flight_s
        );
    }

    #[test]
    fn planned_policies_cover_an_empty_small_field() {
        let field = FieldSpec::env1();
        let wps = env_sweep(&field);
        let world = build_world(&field, 0, &wps, world_seed(1, 0, 1)).unwrap();
        for policy in [Policy::Weighted, Policy::Shortest] {
            let out = run_single("env1", 0, &world, &wps, &RunConfig::new(policy, 1));
            assert_eq!(
                out.record.waypoints_reached, out.record.waypoints_total,
                "{policy} reached {}/{}",
                out.record.waypoints_reached, out.record.waypoints_total
            );
            assert_eq!(out.record.collisions, 0, "{policy} collided");
            assert_eq!(out.record.blockages, 0, "{policy} got blocked");
            assert!(out.record.flight_s < 300.0);
        }
    }

    #[test]
    fn planned_policies_dodge_a_barrel_that_downs_blind() {
        let field = FieldSpec::env1();
        // One corridor of waypoints with a barrel straddling the flight line
        // between x=3.4 and x=4.6, offset below so the waypoint cells and the
        // detour band above stay clear of it.
        let wps: Vec<Pose4> = (0..5)
            .map(|k| Pose4::new(1.0 + 2.0 * k as f64, 1.275, FLIGHT_ALTITUDE, 0.0))
            .collect();
        let mut shapes = mission::row_footprints(&field);
        shapes.extend(boundary_walls(&field));
        shapes.push(Footprint::Disc {
            center: WorldPoint::new(4.0, 0.9),
            radius: BARREL_RADIUS_M,
        });
        let world = WorldModel::build(&mission::blank_map(&field), shapes);

        let blind = run_single("craft", 0, &world, &wps, &RunConfig::new(Policy::Blind, 1));
        assert_eq!(blind.record.collisions, 1);
        assert!(blind.record.waypoints_reached < blind.record.waypoints_total);

        for policy in [Policy::Weighted, Policy::Shortest] {
            let out = run_single("craft", 0, &world, &wps, &RunConfig::new(policy, 1));
            assert_eq!(out.record.collisions, 0, "{policy} collided");
            assert_eq!(out.record.blockages, 0, "{policy} got blocked");
            assert_eq!(
                out.record.waypoints_reached, out.record.waypoints_total,
                "{policy} reached {}/{}",
                out.record.waypoints_reached, out.record.waypoints_total
            );
        }
    }

    #[test]
    fn a_wide_wall_blocks_memoryless_flight_but_not_memory() {
        let field = rowless_field();
        let mut shapes = boundary_walls(&field);
        shapes.push(Footprint::Rect {
            min: WorldPoint::new(2.0, 4.4),
            max: WorldPoint::new(8.0, 4.6),
        });
        let world = WorldModel::build(&mission::blank_map(&field), shapes);
        let wps: Vec<Pose4> = (1..=8)
            .map(|k| Pose4::new(5.0, k as f64, FLIGHT_ALTITUDE, PI / 2.0))
            .collect();

        let mut off = RunConfig::new(Policy::Weighted, 5);
        off.memory = false;
        let out_off = run_single("wall", 0, &world, &wps, &off);
        assert_eq!(out_off.record.blockages, 1, "memory-off should deadlock");
        assert!(out_off.record.waypoints_reached < out_off.record.waypoints_total);
        assert_eq!(out_off.record.collisions, 0);

        let mut on = off.clone();
        on.memory = true;
        let out_on = run_single("wall", 0, &world, &wps, &on);
        assert_eq!(out_on.record.blockages, 0, "memory-on should recover");
        assert_eq!(out_on.record.collisions, 0);
        assert_eq!(out_on.record.waypoints_reached, out_on.record.waypoints_total);
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let field = rowless_field();
        let world = WorldModel::build(&mission::blank_map(&field), boundary_walls(&field));
        let wps: Vec<Pose4> = (1..=8)
            .map(|k| Pose4::new(5.0, k as f64, FLIGHT_ALTITUDE, PI / 2.0))
            .collect();
        for policy in [Policy::Random, Policy::Weighted] {
            let cfg = RunConfig::new(policy, 11);
            let a = run_single("det", 0, &world, &wps, &cfg);
            let b = run_single("det", 0, &world, &wps, &cfg);
            assert_eq!(a.record, b.record);
            assert_eq!(a.events, b.events);
        }
    }

    #[test]
    fn reactive_tracks_waypoints_in_the_open() {
        let field = rowless_field();
        let world = WorldModel::build(&mission::blank_map(&field), boundary_walls(&field));
        let wps: Vec<Pose4> = (1..=8)
            .map(|k| Pose4::new(5.0, k as f64, FLIGHT_ALTITUDE, PI / 2.0))
            .collect();
        let out = run_single("open", 0, &world, &wps, &RunConfig::new(Policy::Reactive, 3));
        assert_eq!(out.record.waypoints_reached, out.record.waypoints_total);
        assert_eq!(out.record.collisions, 0);
        assert_eq!(out.record.blockages, 0);
    }

    #[test]
    fn detection_rate_tracks_the_detector_probability() {
        let field = rowless_field();
        let mut world = WorldModel::build(&mission::blank_map(&field), boundary_walls(&field));
        world.hotspots.push(Hotspot {
            at: WorldPoint::new(5.0, 5.0),
            specimens: 1,
        });
        let pose = Pose4::new(5.0, 5.0, FLIGHT_ALTITUDE, 0.0);

        let det = DetectorSpec::default();
        let mut hits = 0usize;
        for seed in 0..100_000u64 {
            hits += detect(pose, &world, &det, seed).len();
        }
        let rate = hits as f64 / 100_000.0;
        assert!((rate - det.p).abs() < 0.01, "observed rate {rate}");

        let sure = DetectorSpec {
            p: 1.0,
            ..DetectorSpec::default()
        };
        for seed in 0..1_000u64 {
            assert_eq!(detect(pose, &world, &sure, seed).len(), 1);
        }

        let far = Pose4::new(7.0, 5.0, FLIGHT_ALTITUDE, 0.0);
        for seed in 0..1_000u64 {
            assert!(detect(far, &world, &det, seed).is_empty());
        }
    }

    #[test]
    fn policy_codes_round_trip() {
        for p in Policy::ALL {
            assert_eq!(Policy::parse(p.code()), Some(p));
        }
        assert_eq!(Policy::parse("weighted"), Some(Policy::Weighted));
        assert_eq!(Policy::parse("nonsense"), None);
    }
}
