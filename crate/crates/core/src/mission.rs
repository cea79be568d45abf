//! Global mission planning: vineyard field geometry, per-agent tiling,
//! serpentine sweep generation over row corridors, and battery feasibility.
//!
//! Rows are obstacle bands with a fixed spacing; the gaps between them (and
//! between the outermost rows and the field boundary) are the flight
//! corridors. Rows break at tile boundaries, leaving cross lanes so every
//! tile can be swept independently and ground vehicles can change corridor
//! without driving the full row length.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{Pose4, WorldPoint, DEFAULT_CELL_SIDE, FLIGHT_ALTITUDE};
use crate::math;
use crate::nav::yaw_for_step;
use crate::occupancy::{CellState, Footprint, GridMap, SAFETY_RADIUS_CELLS};

/// Largest tile side a single agent is assigned.
pub const DEFAULT_TILE_SIDE: f64 = 40.0;
/// Waypoint spacing along sweep segments.
pub const WAYPOINT_SPACING_M: f64 = 1.0;
/// Pass pitch when the field has no rows at all.
pub const LAWNMOWER_PITCH_M: f64 = 2.5;
/// Narrower corridors cannot hold a safety-free midline cell.
pub const MIN_CORRIDOR_WIDTH_M: f64 = 0.7;
/// Rows stop this far beyond the waypoint inset so end-of-row turn lanes
/// stay clear of the safety inflation.
pub const ROW_END_SETBACK_M: f64 = 0.4;

/// Direction vine rows run in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowAxis {
    AlongX,
    AlongY,
}

/// Field layout: outer dimensions plus the row pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSpec {
    pub width: f64,
    pub height: f64,
    pub row_axis: RowAxis,
    /// Center-to-center row spacing.
    pub row_spacing: f64,
    /// Width of the planted band itself.
    pub row_thickness: f64,
    /// Inset of sweep endpoints (and turn lanes) from field and tile edges.
    pub row_margin: f64,
    pub cell_side: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            width: 40.0,
            height: 40.0,
            row_axis: RowAxis::AlongX,
            row_spacing: 2.75,
            row_thickness: 0.4,
            row_margin: 1.0,
            cell_side: DEFAULT_CELL_SIDE,
        }
    }
}

impl FieldSpec {
    /// Square test field of the given side with the default row layout.
    pub fn square(side_m: f64) -> Self {
        Self {
            width: side_m,
            height: side_m,
            ..Self::default()
        }
    }

    /// 10×10 m benchmark environment.
    pub fn env1() -> Self {
        Self::square(10.0)
    }

    /// 20×20 m benchmark environment.
    pub fn env2() -> Self {
        Self::square(20.0)
    }

    /// 40×40 m benchmark environment.
    pub fn env3() -> Self {
        Self::square(40.0)
    }

    /// Full 200×200 m field used for ground-vehicle studies. Coarser cells
    /// keep the map around 400×400 while corridors stay several cells wide.
    pub fn logistics_field() -> Self {
        Self {
            width: 200.0,
            height: 200.0,
            cell_side: 0.5,
            ..Self::default()
        }
    }

    pub fn cells(&self) -> (usize, usize) {
        (
            math::round(self.width / self.cell_side) as usize,
            math::round(self.height / self.cell_side) as usize,
        )
    }

    /// Extent along the row direction.
    fn along_extent(&self) -> f64 {
        match self.row_axis {
            RowAxis::AlongX => self.width,
            RowAxis::AlongY => self.height,
        }
    }

    /// Extent across the rows.
    fn cross_extent(&self) -> f64 {
        match self.row_axis {
            RowAxis::AlongX => self.height,
            RowAxis::AlongY => self.width,
        }
    }

    /// Maps (along, cross) coordinates back to world x/y.
    fn to_world(&self, a: f64, c: f64) -> WorldPoint {
        match self.row_axis {
            RowAxis::AlongX => WorldPoint::new(a, c),
            RowAxis::AlongY => WorldPoint::new(c, a),
        }
    }
}

/// One agent's assigned rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tile {
    pub origin: WorldPoint,
    pub width: f64,
    pub height: f64,
    pub agent: usize,
}

impl Tile {
    /// The single tile covering a whole (≤ 40 m) field.
    pub fn covering(field: &FieldSpec) -> Tile {
        Tile {
            origin: WorldPoint::new(0.0, 0.0),
            width: field.width,
            height: field.height,
            agent: 0,
        }
    }

    /// Tile span along the rows and across them, as (offset, size) pairs.
    fn spans(&self, field: &FieldSpec) -> ((f64, f64), (f64, f64)) {
        match field.row_axis {
            RowAxis::AlongX => ((self.origin.x, self.width), (self.origin.y, self.height)),
            RowAxis::AlongY => ((self.origin.y, self.height), (self.origin.x, self.width)),
        }
    }
}

/// Flight-time budget of one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryModel {
    pub endurance_s: f64,
    /// Portion of the endurance spendable on the sweep itself.
    pub explore_budget_s: f64,
    /// Reserve kept for the return leg.
    pub return_budget_s: f64,
    pub cruise_speed: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            endurance_s: 360.0,
            explore_budget_s: 300.0,
            return_budget_s: 60.0,
            cruise_speed: 1.0,
        }
    }
}

/// Outcome of a battery check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Feasibility {
    Ok,
    Infeasible { excess_s: f64 },
}

/// One inter-row (or row-to-boundary) corridor, as a cross-axis interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corridor {
    /// Position in the field's full corridor sequence.
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Corridor {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MissionError {
    /// An interior corridor too narrow to fly; the field layout is unusable.
    CorridorTooNarrow { index: usize, width_m: f64 },
    /// A tile's cross-range contains no usable corridor.
    NoCorridorInTile { agent: usize },
}

impl fmt::Display for MissionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissionError::CorridorTooNarrow { index, width_m } => write!(
                f,
                "corridor {index} is {width_m:.3} m wide, below the {MIN_CORRIDOR_WIDTH_M} m minimum"
            ),
            MissionError::NoCorridorInTile { agent } => {
                write!(f, "tile {agent} contains no usable corridor")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MissionError {}

/// Cross-axis centers of the row bands.
fn row_centers(field: &FieldSpec) -> Vec<f64> {
    let cross = field.cross_extent();
    let mut centers = Vec::new();
    let mut k = 1usize;
    loop {
        let c = k as f64 * field.row_spacing;
        if c + field.row_thickness / 2.0 > cross + 1e-9 {
            return centers;
        }
        centers.push(c);
        k += 1;
    }
}

/// All usable corridors of the field, in cross order. Boundary slivers
/// narrower than the minimum are dropped (nothing can fly there); a narrow
/// interior corridor is an error since its rows would be unreachable.
pub fn corridors(field: &FieldSpec) -> Result<Vec<Corridor>, MissionError> {
    let cross = field.cross_extent();
    let centers = row_centers(field);
    if centers.is_empty() {
        // No rows: plain lawnmower passes at the default pitch.
        let mut out = Vec::new();
        let mut mid = LAWNMOWER_PITCH_M / 2.0;
        let mut index = 0usize;
        while mid + LAWNMOWER_PITCH_M / 2.0 <= cross + 1e-9 {
            out.push(Corridor {
                index,
                lo: mid - LAWNMOWER_PITCH_M / 2.0,
                hi: mid + LAWNMOWER_PITCH_M / 2.0,
            });
            mid += LAWNMOWER_PITCH_M;
            index += 1;
        }
        return Ok(out);
    }

    let half = field.row_thickness / 2.0;
    let gap_count = centers.len() + 1;
    let mut out = Vec::new();
    let mut prev_hi = 0.0;
    for index in 0..gap_count {
        let gap_hi = if index < centers.len() {
            centers[index] - half
        } else {
            cross
        };
        let width = gap_hi - prev_hi;
        if width + 1e-9 < MIN_CORRIDOR_WIDTH_M {
            if index > 0 && index < gap_count - 1 {
                return Err(MissionError::CorridorTooNarrow {
                    index,
                    width_m: width,
                });
            }
        } else {
            out.push(Corridor {
                index,
                lo: prev_hi,
                hi: gap_hi,
            });
        }
        if index < centers.len() {
            prev_hi = centers[index] + half;
        }
    }
    Ok(out)
}

/// Cuts an extent into tile-sized pieces plus a remainder.
fn axis_splits(extent: f64, tile_side: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut at = 0.0;
    while extent - at > 1e-9 {
        let size = (extent - at).min(tile_side);
        out.push((at, size));
        at += size;
    }
    out
}

/// Splits the field into an axis-aligned grid of tiles, row-major from the
/// origin. Remainder tiles at the far edges may be smaller than `tile_side`.
pub fn partition(field: &FieldSpec, tile_side: f64) -> Vec<Tile> {
    let xs = axis_splits(field.width, tile_side);
    let ys = axis_splits(field.height, tile_side);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for (iy, &(y0, h)) in ys.iter().enumerate() {
        for (ix, &(x0, w)) in xs.iter().enumerate() {
            out.push(Tile {
                origin: WorldPoint::new(x0, y0),
                width: w,
                height: h,
                agent: iy * xs.len() + ix,
            });
        }
    }
    out
}

fn safety_cells(cell_side: f64) -> usize {
    math::round(SAFETY_RADIUS_CELLS as f64 * DEFAULT_CELL_SIDE / cell_side) as usize
}

/// World-space rectangles of the planted row bands, broken at tile
/// boundaries by turn lanes.
pub fn row_footprints(field: &FieldSpec) -> Vec<Footprint> {
    let inset = field.row_margin + ROW_END_SETBACK_M;
    let half = field.row_thickness / 2.0;
    let chunks = axis_splits(field.along_extent(), DEFAULT_TILE_SIDE);
    let mut out = Vec::new();
    for &center in &row_centers(field) {
        for &(a0, aw) in &chunks {
            let lo_a = a0 + inset;
            let hi_a = a0 + aw - inset;
            if hi_a <= lo_a {
                continue;
            }
            let p = field.to_world(lo_a, center - half);
            let q = field.to_world(hi_a, center + half);
            out.push(Footprint::Rect {
                min: WorldPoint::new(p.x.min(q.x), p.y.min(q.y)),
                max: WorldPoint::new(p.x.max(q.x), p.y.max(q.y)),
            });
        }
    }
    out
}

/// An all-Free map of the field's extent, ready for stamping.
pub fn blank_map(field: &FieldSpec) -> GridMap {
    let (wc, hc) = field.cells();
    GridMap::new(
        wc,
        hc,
        field.cell_side,
        WorldPoint::new(0.0, 0.0),
        CellState::Free,
    )
}

/// Rasterizes the field's row layout: rows become Obstacle bands (broken at
/// tile boundaries by turn lanes) surrounded by their safety inflation;
/// everything else is Free.
pub fn static_map(field: &FieldSpec) -> GridMap {
    let mut map = blank_map(field);
    for rect in row_footprints(field) {
        map.mark_obstacle_footprint(&rect);
    }
    map.inflate_safety(safety_cells(field.cell_side));
    map
}

/// Appends `b` (and evenly spaced points on the way there) to `pts`,
/// assuming `a` is already the last entry when the segment chains on.
fn append_segment(pts: &mut Vec<(f64, f64)>, a: (f64, f64), b: (f64, f64)) {
    if pts.last() != Some(&a) {
        pts.push(a);
    }
    let len = math::hypot(b.0 - a.0, b.1 - a.1);
    if len <= 1e-12 {
        return;
    }
    let steps = math::ceil(len / WAYPOINT_SPACING_M - 1e-9) as usize;
    for k in 1..=steps {
        let t = ((k as f64 * WAYPOINT_SPACING_M) / len).min(1.0);
        pts.push((a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t));
    }
}

/// Serpentine polyline over the selected corridors in (along, cross)
/// coordinates.
fn serpentine(selected: &[Corridor], a_lo: f64, a_hi: f64) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, cor) in selected.iter().enumerate() {
        let c = cor.mid();
        let (from, to) = if i % 2 == 0 { (a_lo, a_hi) } else { (a_hi, a_lo) };
        append_segment(&mut pts, (from, c), (to, c));
        if let Some(next) = selected.get(i + 1) {
            append_segment(&mut pts, (to, c), (to, next.mid()));
        }
    }
    pts
}

fn polyline_length(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2)
        .map(|w| math::hypot(w[1].0 - w[0].0, w[1].1 - w[0].1))
        .sum()
}

/// Total 2D length of a pose path, meters.
pub fn path_length(path: &[Pose4]) -> f64 {
    path.windows(2)
        .map(|w| math::hypot(w[1].x - w[0].x, w[1].y - w[0].y))
        .sum()
}

/// Battery check: can the sweep be flown within the exploration budget?
pub fn feasibility(path: &[Pose4], battery: &BatteryModel) -> Feasibility {
    let t = path_length(path) / battery.cruise_speed;
    if t <= battery.explore_budget_s + 1e-9 {
        Feasibility::Ok
    } else {
        Feasibility::Infeasible {
            excess_s: t - battery.explore_budget_s,
        }
    }
}

/// Sweep waypoints for one tile under the default battery.
pub fn sweep_path(tile: &Tile, field: &FieldSpec) -> Result<Vec<Pose4>, MissionError> {
    sweep_path_with_budget(tile, field, &BatteryModel::default())
}

/// Sweep waypoints for one tile: serpentine over the tile's corridor
/// midlines, yaw turned toward upcoming waypoints, at flight altitude.
///
/// If visiting every corridor exceeds the battery's exploration budget, the
/// sweep thins to odd-indexed corridors. Consecutive corridors always share
/// a neighboring row, so every row still gets flown past on one side; the
/// thinned sweep trades midline coverage density for fitting the budget.
pub fn sweep_path_with_budget(
    tile: &Tile,
    field: &FieldSpec,
    battery: &BatteryModel,
) -> Result<Vec<Pose4>, MissionError> {
    let all = corridors(field)?;
    let ((a0, aw), (c0, cw)) = tile.spans(field);
    let selected: Vec<Corridor> = all
        .iter()
        .filter(|c| c.mid() >= c0 - 1e-9 && c.mid() < c0 + cw - 1e-9)
        .copied()
        .collect();
    if selected.is_empty() {
        return Err(MissionError::NoCorridorInTile { agent: tile.agent });
    }
    let a_lo = a0 + field.row_margin;
    let a_hi = a0 + aw - field.row_margin;
    debug_assert!(a_hi > a_lo, "tile thinner than twice the row margin");

    let full = serpentine(&selected, a_lo, a_hi);
    let pts = if polyline_length(&full) / battery.cruise_speed <= battery.explore_budget_s + 1e-9 {
        full
    } else {
        let thinned: Vec<Corridor> = selected
            .iter()
            .filter(|c| c.index % 2 == 1)
            .copied()
            .collect();
        if thinned.is_empty() {
            full
        } else {
            serpentine(&thinned, a_lo, a_hi)
        }
    };

    let world: Vec<WorldPoint> = pts.iter().map(|&(a, c)| field.to_world(a, c)).collect();
    Ok(world
        .iter()
        .enumerate()
        .map(|(k, p)| Pose4::new(p.x, p.y, FLIGHT_ALTITUDE, yaw_for_step(&world, k)))
        .collect())
}

/// Length of the exhaustive every-corridor serpentine over the whole field,
/// meters. This is the ground vehicle's blanket-coverage route; no battery
/// constraint applies.
pub fn ground_sweep_length(field: &FieldSpec) -> Result<f64, MissionError> {
    let cors = corridors(field)?;
    let a_lo = field.row_margin;
    let a_hi = field.along_extent() - field.row_margin;
    Ok(polyline_length(&serpentine(&cors, a_lo, a_hi)))
}

/// True when every waypoint sits on a flyable cell of `map`.
pub fn waypoints_are_clear(path: &[Pose4], map: &GridMap) -> bool {
    path.iter().all(|p| {
        map.world_to_grid(p.point()).is_ok_and(|i| {
            !matches!(map.state(i), CellState::Obstacle | CellState::SafetyArea)
        })
    })
}
