//! Occupancy grids with the five-state cell classification.
//!
//! Cells carry one of five states. In cost terms the states are strictly
//! ordered: GlobalPath < Free < Unknown < SafetyArea < Obstacle, with
//! Obstacle untraversable outright (a flag, not a large finite cost, so no
//! map size can make driving through an obstacle look cheap).
//!
//! When layers are composed the precedence is
//! Obstacle > SafetyArea > GlobalPath > Free > Unknown: marking an obstacle
//! always wins, safety inflation never erodes obstacles, and a global-path
//! overlay only promotes Free/Unknown cells.
//!
//! Obstacle footprints are marked conservatively: a cell becomes Obstacle if
//! the footprint overlaps the cell with positive area (boundary tangency does
//! not count — an axis-aligned 0.2 m square spanning exactly four cells marks
//! exactly four).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{
    self, grid_to_world_center, world_to_grid, GridIndex, OutOfRange, WorldPoint,
};
use crate::math;

/// Occupancy classification of one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellState {
    /// Lies on the pre-planned global path.
    GlobalPath,
    /// Known free.
    Free,
    /// Never observed.
    Unknown,
    /// Within the safety ring around an obstacle.
    SafetyArea,
    /// Occupied; untraversable.
    Obstacle,
}

impl CellState {
    /// Single-character form used by the map text format.
    pub fn to_char(self) -> char {
        match self {
            CellState::GlobalPath => 'P',
            CellState::Free => 'F',
            CellState::Unknown => 'U',
            CellState::SafetyArea => 'S',
            CellState::Obstacle => 'O',
        }
    }

    pub fn from_char(c: char) -> Option<CellState> {
        Some(match c {
            'P' => CellState::GlobalPath,
            'F' => CellState::Free,
            'U' => CellState::Unknown,
            'S' => CellState::SafetyArea,
            'O' => CellState::Obstacle,
            _ => return None,
        })
    }

    /// Position in the cost ordering (GlobalPath cheapest, Obstacle dearest).
    pub fn rank(self) -> usize {
        match self {
            CellState::GlobalPath => 0,
            CellState::Free => 1,
            CellState::Unknown => 2,
            CellState::SafetyArea => 3,
            CellState::Obstacle => 4,
        }
    }
}

/// Cost metric used when expanding a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Step length plus the destination-cell cost.
    Weighted,
    /// Pure step length; cell states only gate traversability.
    Shortest,
}

/// Per-state traversal costs. Obstacle has no entry: it is untraversable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostScheme {
    pub global_path: f64,
    pub free: f64,
    pub unknown: f64,
    pub safety_area: f64,
}

/// Rejected cost-scheme configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSchemeError;

impl fmt::Display for CostSchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cell costs must be finite and strictly ordered: 0 <= global_path < free < unknown < safety_area"
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CostSchemeError {}

impl CostScheme {
    /// Builds a scheme, enforcing the strict state ordering.
    pub fn new(
        global_path: f64,
        free: f64,
        unknown: f64,
        safety_area: f64,
    ) -> Result<Self, CostSchemeError> {
        let s = Self {
            global_path,
            free,
            unknown,
            safety_area,
        };
        let vals = [global_path, free, unknown, safety_area];
        if vals.iter().any(|v| !v.is_finite()) || global_path < 0.0 {
            return Err(CostSchemeError);
        }
        if !(global_path < free && free < unknown && unknown < safety_area) {
            return Err(CostSchemeError);
        }
        Ok(s)
    }

    /// Cost contribution of entering a cell in `state`; `None` = untraversable.
    pub fn cell_cost(&self, state: CellState) -> Option<f64> {
        match state {
            CellState::GlobalPath => Some(self.global_path),
            CellState::Free => Some(self.free),
            CellState::Unknown => Some(self.unknown),
            CellState::SafetyArea => Some(self.safety_area),
            CellState::Obstacle => None,
        }
    }

    /// Cost of a step of `step_len` cells into a cell of state `to`.
    ///
    /// `None` means the step is untraversable. The source cell's state is
    /// never charged; only the destination matters.
    pub fn step_cost(&self, step_len: f64, to: CellState, metric: Metric) -> Option<f64> {
        let c = self.cell_cost(to)?;
        Some(match metric {
            Metric::Shortest => step_len,
            Metric::Weighted => step_len + c,
        })
    }
}

impl Default for CostScheme {
    fn default() -> Self {
        Self {
            global_path: 0.0,
            free: 25.0,
            unknown: 50.0,
            safety_area: 75.0,
        }
    }
}

/// Safety inflation radius in cells: everything within two cells of an
/// obstacle becomes SafetyArea.
pub const SAFETY_RADIUS_CELLS: usize = 2;

/// World-space obstacle footprint.
#[derive(Clone, Debug, PartialEq)]
pub enum Footprint {
    Disc { center: WorldPoint, radius: f64 },
    /// Axis-aligned rectangle.
    Rect { min: WorldPoint, max: WorldPoint },
    /// Convex polygon, vertices in order (either winding).
    ConvexPolygon(Vec<WorldPoint>),
}

impl Footprint {
    /// Axis-aligned bounding box (min, max).
    pub fn bbox(&self) -> (WorldPoint, WorldPoint) {
        match self {
            Footprint::Disc { center, radius } => (
                WorldPoint::new(center.x - radius, center.y - radius),
                WorldPoint::new(center.x + radius, center.y + radius),
            ),
            Footprint::Rect { min, max } => (*min, *max),
            Footprint::ConvexPolygon(pts) => {
                let mut lo = WorldPoint::new(f64::INFINITY, f64::INFINITY);
                let mut hi = WorldPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in pts {
                    lo.x = lo.x.min(p.x);
                    lo.y = lo.y.min(p.y);
                    hi.x = hi.x.max(p.x);
                    hi.y = hi.y.max(p.y);
                }
                (lo, hi)
            }
        }
    }

    /// True if the footprint overlaps the rectangle `[lo, hi]` with positive
    /// area. Tangency (shared boundary only) does not count.
    pub fn overlaps_rect(&self, lo: WorldPoint, hi: WorldPoint) -> bool {
        match self {
            Footprint::Disc { center, radius } => {
                let cx = center.x.clamp(lo.x, hi.x);
                let cy = center.y.clamp(lo.y, hi.y);
                let d2 = (center.x - cx) * (center.x - cx) + (center.y - cy) * (center.y - cy);
                d2 < radius * radius
            }
            Footprint::Rect { min, max } => {
                min.x < hi.x && lo.x < max.x && min.y < hi.y && lo.y < max.y
            }
            Footprint::ConvexPolygon(pts) => convex_overlaps_rect(pts, lo, hi),
        }
    }

    /// True if `p` lies strictly inside the footprint.
    pub fn contains(&self, p: WorldPoint) -> bool {
        match self {
            Footprint::Disc { center, radius } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                dx * dx + dy * dy < radius * radius
            }
            Footprint::Rect { min, max } => {
                min.x < p.x && p.x < max.x && min.y < p.y && p.y < max.y
            }
            Footprint::ConvexPolygon(pts) => {
                if pts.len() < 3 {
                    return false;
                }
                let mut sign = 0i8;
                for k in 0..pts.len() {
                    let a = pts[k];
                    let b = pts[(k + 1) % pts.len()];
                    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                    if cross == 0.0 {
                        return false;
                    }
                    let s = if cross > 0.0 { 1 } else { -1 };
                    if sign == 0 {
                        sign = s;
                    } else if sign != s {
                        return false;
                    }
                }
                true
            }
        }
    }
}

/// Separating-axis test between a convex polygon and an axis-aligned rect.
/// Touching along a boundary counts as separated (zero-area overlap).
fn convex_overlaps_rect(pts: &[WorldPoint], lo: WorldPoint, hi: WorldPoint) -> bool {
    if pts.len() < 3 {
        return false;
    }
    let rect = [
        WorldPoint::new(lo.x, lo.y),
        WorldPoint::new(hi.x, lo.y),
        WorldPoint::new(hi.x, hi.y),
        WorldPoint::new(lo.x, hi.y),
    ];
    let project = |points: &[WorldPoint], ax: (f64, f64)| {
        let mut mn = f64::INFINITY;
        let mut mx = f64::NEG_INFINITY;
        for p in points {
            let d = p.x * ax.0 + p.y * ax.1;
            mn = mn.min(d);
            mx = mx.max(d);
        }
        (mn, mx)
    };
    let mut axes: Vec<(f64, f64)> = vec![(1.0, 0.0), (0.0, 1.0)];
    for k in 0..pts.len() {
        let a = pts[k];
        let b = pts[(k + 1) % pts.len()];
        let e = (b.x - a.x, b.y - a.y);
        if e.0 != 0.0 || e.1 != 0.0 {
            axes.push((-e.1, e.0));
        }
    }
    for ax in axes {
        let (a0, a1) = project(pts, ax);
        let (b0, b1) = project(&rect, ax);
        if a1 <= b0 || b1 <= a0 {
            return false;
        }
    }
    true
}

/// Result metadata of a footprint-marking pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FootprintOutcome {
    /// Cells newly or redundantly set to Obstacle by this call.
    pub cells_marked: usize,
    /// The shape lay entirely outside the map extent (no-op).
    pub fully_outside: bool,
}

/// Attempt to cost a step between cells that are not 8-neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotAdjacent {
    pub from: GridIndex,
    pub to: GridIndex,
}

impl fmt::Display for NotAdjacent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cells {} and {} are not 8-neighbors", self.from, self.to)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NotAdjacent {}

/// Dense occupancy grid with world anchoring.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cell_side: f64,
    origin: WorldPoint,
    cells: Vec<CellState>,
}

impl GridMap {
    pub fn new(
        width: usize,
        height: usize,
        cell_side: f64,
        origin: WorldPoint,
        fill: CellState,
    ) -> Self {
        assert!(width > 0 && height > 0, "map must have positive extent");
        assert!(
            cell_side > 0.0 && cell_side.is_finite(),
            "cell side must be positive"
        );
        Self {
            width,
            height,
            cell_side,
            origin,
            cells: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn origin(&self) -> WorldPoint {
        self.origin
    }

    /// World-space width/height of the mapped extent, meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_side,
            self.height as f64 * self.cell_side,
        )
    }

    #[inline]
    fn idx(&self, i: GridIndex) -> usize {
        debug_assert!(self.in_bounds(i));
        i.v * self.width + i.u
    }

    pub fn in_bounds(&self, i: GridIndex) -> bool {
        i.u < self.width && i.v < self.height
    }

    /// State of cell `i`. Panics if out of bounds.
    #[inline]
    pub fn state(&self, i: GridIndex) -> CellState {
        self.cells[self.idx(i)]
    }

    pub fn try_state(&self, i: GridIndex) -> Option<CellState> {
        if self.in_bounds(i) {
            Some(self.cells[i.v * self.width + i.u])
        } else {
            None
        }
    }

    pub fn set_state(&mut self, i: GridIndex, s: CellState) {
        let idx = self.idx(i);
        self.cells[idx] = s;
    }

    pub fn count_state(&self, s: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == s).count()
    }

    /// Iterator over all indices, row-major from (0,0).
    pub fn indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        let w = self.width;
        (0..self.cells.len()).map(move |k| GridIndex::new(k % w, k / w))
    }

    pub fn world_to_grid(&self, p: WorldPoint) -> Result<GridIndex, OutOfRange> {
        world_to_grid(p, self.origin, self.cell_side, self.width, self.height)
    }

    pub fn cell_center(&self, i: GridIndex) -> WorldPoint {
        grid_to_world_center(i, self.origin, self.cell_side)
    }

    /// World rectangle (min, max) of cell `i`.
    pub fn cell_rect(&self, i: GridIndex) -> (WorldPoint, WorldPoint) {
        let lo = WorldPoint::new(
            self.origin.x + i.u as f64 * self.cell_side,
            self.origin.y + i.v as f64 * self.cell_side,
        );
        let hi = WorldPoint::new(lo.x + self.cell_side, lo.y + self.cell_side);
        (lo, hi)
    }

    /// Marks every cell whose area the footprint overlaps as Obstacle.
    pub fn mark_obstacle_footprint(&mut self, shape: &Footprint) -> FootprintOutcome {
        let (lo, hi) = shape.bbox();
        let (ext_x, ext_y) = self.extent();
        if hi.x <= self.origin.x
            || hi.y <= self.origin.y
            || lo.x >= self.origin.x + ext_x
            || lo.y >= self.origin.y + ext_y
        {
            return FootprintOutcome {
                cells_marked: 0,
                fully_outside: true,
            };
        }
        let u0 = geometry::quantize(lo.x, self.origin.x, self.cell_side).max(0) as usize;
        let v0 = geometry::quantize(lo.y, self.origin.y, self.cell_side).max(0) as usize;
        let u1 = (geometry::quantize(hi.x, self.origin.x, self.cell_side).max(0) as usize)
            .min(self.width - 1);
        let v1 = (geometry::quantize(hi.y, self.origin.y, self.cell_side).max(0) as usize)
            .min(self.height - 1);
        let mut marked = 0;
        for v in v0..=v1 {
            for u in u0..=u1 {
                let i = GridIndex::new(u, v);
                let (clo, chi) = self.cell_rect(i);
                if shape.overlaps_rect(clo, chi) {
                    self.set_state(i, CellState::Obstacle);
                    marked += 1;
                }
            }
        }
        FootprintOutcome {
            cells_marked: marked,
            fully_outside: false,
        }
    }

    /// Demotes every non-Obstacle cell within Chebyshev distance
    /// `radius_cells` of an Obstacle cell to SafetyArea.
    pub fn inflate_safety(&mut self, radius_cells: usize) {
        if radius_cells == 0 {
            return;
        }
        let r = radius_cells as i64;
        let obstacles: Vec<GridIndex> = self
            .indices()
            .filter(|&i| self.state(i) == CellState::Obstacle)
            .collect();
        for o in obstacles {
            let u0 = (o.u as i64 - r).max(0) as usize;
            let v0 = (o.v as i64 - r).max(0) as usize;
            let u1 = ((o.u as i64 + r) as usize).min(self.width - 1);
            let v1 = ((o.v as i64 + r) as usize).min(self.height - 1);
            for v in v0..=v1 {
                for u in u0..=u1 {
                    let i = GridIndex::new(u, v);
                    if self.state(i) != CellState::Obstacle {
                        self.set_state(i, CellState::SafetyArea);
                    }
                }
            }
        }
    }

    /// Promotes Free/Unknown path cells to GlobalPath. Obstacle and
    /// SafetyArea cells are left unchanged.
    pub fn overlay_global_path(&mut self, path: &[GridIndex]) {
        for &i in path {
            debug_assert!(self.in_bounds(i), "path cell {i} out of bounds");
            if !self.in_bounds(i) {
                continue;
            }
            match self.state(i) {
                CellState::Free | CellState::Unknown => self.set_state(i, CellState::GlobalPath),
                _ => {}
            }
        }
    }

    /// True when the diagonal step `from -> to` squeezes between two
    /// obstacle corners. Such a step sweeps through the shared corner of
    /// both orthogonal neighbors, so it is only safe when neither is an
    /// Obstacle. Orthogonal steps are never corner-blocked.
    pub fn diagonal_blocked(&self, from: GridIndex, to: GridIndex) -> bool {
        if from.u == to.u || from.v == to.v {
            return false;
        }
        self.state(GridIndex::new(to.u, from.v)) == CellState::Obstacle
            || self.state(GridIndex::new(from.u, to.v)) == CellState::Obstacle
    }

    /// Cost of moving between 8-neighbor cells under `metric`.
    ///
    /// `Ok(None)` means the step is untraversable: the destination is an
    /// Obstacle, or a diagonal step would cut an obstacle corner.
    /// Non-adjacent cells are a contract violation.
    pub fn edge_cost(
        &self,
        scheme: &CostScheme,
        from: GridIndex,
        to: GridIndex,
        metric: Metric,
    ) -> Result<Option<f64>, NotAdjacent> {
        let du = from.u.abs_diff(to.u);
        let dv = from.v.abs_diff(to.v);
        if du > 1 || dv > 1 || (du == 0 && dv == 0) {
            return Err(NotAdjacent { from, to });
        }
        if self.diagonal_blocked(from, to) {
            return Ok(None);
        }
        let len = if du + dv == 2 {
            core::f64::consts::SQRT_2
        } else {
            1.0
        };
        Ok(scheme.step_cost(len, self.state(to), metric))
    }

    /// Serializes to the text map format. The first data row is the top of
    /// the map (highest `v`), so the file reads north-up.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * (self.height + 1));
        out.push_str(&alloc::format!(
            "{} {} {} {} {}\n",
            self.width,
            self.height,
            self.cell_side,
            self.origin.x,
            self.origin.y
        ));
        for v in (0..self.height).rev() {
            for u in 0..self.width {
                out.push(self.state(GridIndex::new(u, v)).to_char());
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text map format produced by [`GridMap::serialize`].
    pub fn parse(text: &str) -> Result<GridMap, MapParseError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(MapParseError {
            line: 1,
            col: 0,
            kind: MapParseErrorKind::MissingHeader,
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(MapParseError {
                line: 1,
                col: 0,
                kind: MapParseErrorKind::MissingHeader,
            });
        }
        let width: usize = fields[0].parse().map_err(|_| MapParseError {
            line: 1,
            col: 1,
            kind: MapParseErrorKind::BadNumber,
        })?;
        let height: usize = fields[1].parse().map_err(|_| MapParseError {
            line: 1,
            col: 2,
            kind: MapParseErrorKind::BadNumber,
        })?;
        let cell_side: f64 = fields[2].parse().map_err(|_| MapParseError {
            line: 1,
            col: 3,
            kind: MapParseErrorKind::BadNumber,
        })?;
        let ox: f64 = fields[3].parse().map_err(|_| MapParseError {
            line: 1,
            col: 4,
            kind: MapParseErrorKind::BadNumber,
        })?;
        let oy: f64 = fields[4].parse().map_err(|_| MapParseError {
            line: 1,
            col: 5,
            kind: MapParseErrorKind::BadNumber,
        })?;
        if width == 0 || height == 0 || !(cell_side > 0.0) || !cell_side.is_finite() {
            return Err(MapParseError {
                line: 1,
                col: 0,
                kind: MapParseErrorKind::BadDimensions,
            });
        }
        let mut map = GridMap::new(
            width,
            height,
            cell_side,
            WorldPoint::new(ox, oy),
            CellState::Unknown,
        );
        for row in 0..height {
            let line_no = row + 2;
            let line = lines.next().ok_or(MapParseError {
                line: line_no,
                col: 0,
                kind: MapParseErrorKind::MissingRow,
            })?;
            if line.chars().count() != width {
                return Err(MapParseError {
                    line: line_no,
                    col: 0,
                    kind: MapParseErrorKind::WrongRowLength,
                });
            }
            let v = height - 1 - row;
            for (col, c) in line.chars().enumerate() {
                let state = CellState::from_char(c).ok_or(MapParseError {
                    line: line_no,
                    col: col + 1,
                    kind: MapParseErrorKind::BadCell(c),
                })?;
                map.set_state(GridIndex::new(col, v), state);
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(MapParseError {
                line: height + 2,
                col: 0,
                kind: MapParseErrorKind::TrailingContent,
            });
        }
        Ok(map)
    }

    /// 8-neighbors of `i`, in fixed (dv, du) scan order.
    pub fn neighbors8(&self, i: GridIndex) -> impl Iterator<Item = GridIndex> + '_ {
        const OFFS: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        let (w, h) = (self.width as i64, self.height as i64);
        OFFS.iter().filter_map(move |&(du, dv)| {
            let u = i.u as i64 + du;
            let v = i.v as i64 + dv;
            if u >= 0 && v >= 0 && u < w && v < h {
                Some(GridIndex::new(u as usize, v as usize))
            } else {
                None
            }
        })
    }

    /// Every cell the segment from `a` to `b` passes through, in travel
    /// order, clipped to the map. Exact grid traversal in the supercover
    /// sense: crossing a cell corner visits both corner-adjacent cells, so a
    /// path grazing between two diagonal obstacles is still seen to touch
    /// them.
    pub fn cells_on_segment(&self, a: WorldPoint, b: WorldPoint) -> Vec<GridIndex> {
        let cs = self.cell_side;
        let (w, h) = self.extent();
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        // Liang-Barsky clip of t in [0,1] to the map rectangle. The upper
        // bound is shrunk a hair so an endpoint exactly on the far edge does
        // not index one past the last cell.
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        let eps = 1e-12;
        for (p, d, lo, hi) in [
            (a.x, dx, self.origin.x, self.origin.x + w - eps),
            (a.y, dy, self.origin.y, self.origin.y + h - eps),
        ] {
            if d == 0.0 {
                if p < lo || p > hi {
                    return Vec::new();
                }
            } else {
                let (ta, tb) = ((lo - p) / d, (hi - p) / d);
                let (enter, exit) = if ta < tb { (ta, tb) } else { (tb, ta) };
                t0 = t0.max(enter);
                t1 = t1.min(exit);
                if t0 > t1 {
                    return Vec::new();
                }
            }
        }
        let start = WorldPoint::new(a.x + t0 * dx, a.y + t0 * dy);
        let mut u = ((start.x - self.origin.x) / cs) as i64;
        let mut v = ((start.y - self.origin.y) / cs) as i64;
        u = u.clamp(0, self.width as i64 - 1);
        v = v.clamp(0, self.height as i64 - 1);
        let mut cells = alloc::vec![GridIndex::new(u as usize, v as usize)];
        if dx == 0.0 && dy == 0.0 {
            return cells;
        }
        let su = if dx > 0.0 { 1i64 } else { -1 };
        let sv = if dy > 0.0 { 1i64 } else { -1 };
        // Parameter step per cell and parameter of the next boundary
        // crossing, per axis.
        let t_delta_x = if dx != 0.0 { cs / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { cs / dy.abs() } else { f64::INFINITY };
        let next_boundary =
            |k: i64, s: i64, o: f64| -> f64 { o + (k + if s > 0 { 1 } else { 0 }) as f64 * cs };
        let mut t_max_x = if dx != 0.0 {
            (next_boundary(u, su, self.origin.x) - a.x) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            (next_boundary(v, sv, self.origin.y) - a.y) / dy
        } else {
            f64::INFINITY
        };
        let in_bounds =
            |u: i64, v: i64| u >= 0 && v >= 0 && u < self.width as i64 && v < self.height as i64;
        loop {
            if t_max_x.min(t_max_y) > t1 {
                break;
            }
            if t_max_x < t_max_y {
                u += su;
                t_max_x += t_delta_x;
            } else if t_max_y < t_max_x {
                v += sv;
                t_max_y += t_delta_y;
            } else {
                // Exact corner crossing: include both side cells before the
                // diagonal step.
                if in_bounds(u + su, v) {
                    cells.push(GridIndex::new((u + su) as usize, v as usize));
                }
                if in_bounds(u, v + sv) {
                    cells.push(GridIndex::new(u as usize, (v + sv) as usize));
                }
                u += su;
                v += sv;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            }
            if !in_bounds(u, v) {
                break;
            }
            cells.push(GridIndex::new(u as usize, v as usize));
        }
        cells
    }

    /// Step length between 8-neighbors in cell units (1 or √2).
    pub fn step_len(from: GridIndex, to: GridIndex) -> f64 {
        if from.u != to.u && from.v != to.v {
            core::f64::consts::SQRT_2
        } else {
            1.0
        }
    }

    /// Distance between two cell centers in cell units.
    pub fn center_distance(a: GridIndex, b: GridIndex) -> f64 {
        let du = a.u as f64 - b.u as f64;
        let dv = a.v as f64 - b.v as f64;
        math::hypot(du, dv)
    }
}

/// Map text that does not parse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapParseError {
    /// 1-based line number.
    pub line: usize,
    /// 1-based column/field number; 0 when the whole line is at fault.
    pub col: usize,
    pub kind: MapParseErrorKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapParseErrorKind {
    MissingHeader,
    BadNumber,
    BadDimensions,
    MissingRow,
    WrongRowLength,
    BadCell(char),
    TrailingContent,
}

impl fmt::Display for MapParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            MapParseErrorKind::MissingHeader => "expected header `W H CELL_SIDE ORIGIN_X ORIGIN_Y`",
            MapParseErrorKind::BadNumber => "field is not a valid number",
            MapParseErrorKind::BadDimensions => "dimensions must be positive",
            MapParseErrorKind::MissingRow => "fewer rows than the header declares",
            MapParseErrorKind::WrongRowLength => "row length does not match the declared width",
            MapParseErrorKind::BadCell(_) => "cell character must be one of P F U S O",
            MapParseErrorKind::TrailingContent => "unexpected content after the last row",
        };
        write!(f, "map parse error at line {} col {}: {}", self.line, self.col, what)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MapParseError {}
