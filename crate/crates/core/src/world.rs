//! Ground-truth world model for simulation: analytic obstacle shapes for
//! exact ray casting, plus the rasterized truth map for collision checks.
//!
//! Rays are cast against the analytic shapes (discs, rectangles, convex
//! polygons), not against grid cells, so a wall at 1.0 m reads exactly
//! 1.0/cos(azimuth) in the outer sensor zones instead of a quantized
//! approximation. Collision accounting, on the other hand, is cell-based:
//! an agent collides when its center enters an Obstacle cell of the truth
//! map, matching how coverage metrics are judged.

use alloc::vec::Vec;

use crate::geometry::WorldPoint;
use crate::math;
use crate::occupancy::{CellState, Footprint, GridMap, SAFETY_RADIUS_CELLS};

/// A pest cluster the detector can find.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hotspot {
    pub at: WorldPoint,
    pub specimens: u32,
}

/// An obstacle moving along a piecewise-linear schedule of (time, position)
/// keyframes. The shape is given at its t=0 placement; later positions
/// translate it rigidly.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicObstacle {
    pub shape: Footprint,
    /// (seconds, shape reference position) keyframes, strictly increasing in
    /// time. Before the first/after the last keyframe the obstacle holds
    /// still.
    pub keyframes: Vec<(f64, WorldPoint)>,
}

impl DynamicObstacle {
    /// Reference position at time `t`.
    pub fn position(&self, t: f64) -> WorldPoint {
        match self.keyframes.as_slice() {
            [] => WorldPoint::new(0.0, 0.0),
            [only] => only.1,
            kfs => {
                if t <= kfs[0].0 {
                    return kfs[0].1;
                }
                for w in kfs.windows(2) {
                    let (t0, p0) = w[0];
                    let (t1, p1) = w[1];
                    if t <= t1 {
                        let a = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                        return WorldPoint::new(p0.x + a * (p1.x - p0.x), p0.y + a * (p1.y - p0.y));
                    }
                }
                kfs[kfs.len() - 1].1
            }
        }
    }

    /// Translation from the t=0 reference to the position at `t`.
    fn offset(&self, t: f64) -> (f64, f64) {
        let p0 = self.position(0.0);
        let pt = self.position(t);
        (pt.x - p0.x, pt.y - p0.y)
    }

    fn shape_at(&self, t: f64) -> Footprint {
        let (dx, dy) = self.offset(t);
        translate(&self.shape, dx, dy)
    }
}

fn translate(shape: &Footprint, dx: f64, dy: f64) -> Footprint {
    match shape {
        Footprint::Disc { center, radius } => Footprint::Disc {
            center: WorldPoint::new(center.x + dx, center.y + dy),
            radius: *radius,
        },
        Footprint::Rect { min, max } => Footprint::Rect {
            min: WorldPoint::new(min.x + dx, min.y + dy),
            max: WorldPoint::new(max.x + dx, max.y + dy),
        },
        Footprint::ConvexPolygon(pts) => Footprint::ConvexPolygon(
            pts.iter()
                .map(|p| WorldPoint::new(p.x + dx, p.y + dy))
                .collect(),
        ),
    }
}

/// The simulated world: static analytic obstacles, optional movers, pest
/// hotspots, and the rasterized truth map.
#[derive(Clone, Debug)]
pub struct WorldModel {
    /// Row bands, barrels, walls: everything solid and stationary.
    pub obstacles: Vec<Footprint>,
    pub dynamic: Vec<DynamicObstacle>,
    pub hotspots: Vec<Hotspot>,
    /// Static map with all static obstacles stamped and safety-inflated.
    truth: GridMap,
}

impl WorldModel {
    /// Builds a world from a base map (typically the vineyard-row map before
    /// or after inflation) plus extra obstacle shapes. The shapes are stamped
    /// on a copy and the result is safety-inflated.
    pub fn build(base: &GridMap, shapes: Vec<Footprint>) -> Self {
        let mut truth = base.clone();
        for s in &shapes {
            truth.mark_obstacle_footprint(s);
        }
        truth.inflate_safety(SAFETY_RADIUS_CELLS);
        Self {
            obstacles: shapes,
            dynamic: Vec::new(),
            hotspots: Vec::new(),
            truth,
        }
    }

    /// The safety-inflated ground-truth occupancy map.
    pub fn truth_map(&self) -> &GridMap {
        &self.truth
    }

    /// World rectangle covered by the truth map.
    pub fn bounds(&self) -> (WorldPoint, WorldPoint) {
        let o = self.truth.origin();
        let (w, h) = self.truth.extent();
        (o, WorldPoint::new(o.x + w, o.y + h))
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        let (lo, hi) = self.bounds();
        lo.x <= p.x && p.x < hi.x && lo.y <= p.y && p.y < hi.y
    }

    /// True when `p` sits in an Obstacle cell of the truth map (the
    /// collision criterion). Points outside the map are treated as
    /// colliding: leaving the field ends a run the same way.
    pub fn collides(&self, p: WorldPoint) -> bool {
        match self.truth.world_to_grid(p) {
            Ok(i) => self.truth.state(i) == CellState::Obstacle,
            Err(_) => true,
        }
    }

    /// True when the straight move from `a` to `b` crosses an Obstacle cell,
    /// judged over every cell the segment touches so a fast agent cannot
    /// step over a thin obstacle between ticks.
    pub fn sweep_collides(&self, a: WorldPoint, b: WorldPoint) -> bool {
        if self.collides(a) || self.collides(b) {
            return true;
        }
        self.truth
            .cells_on_segment(a, b)
            .iter()
            .any(|&i| self.truth.state(i) == CellState::Obstacle)
    }

    /// Distance from `origin` along world direction `dir` (radians, measured
    /// from +x) to the nearest obstacle at time `t`, capped at `max_range`.
    pub fn raycast(&self, origin: WorldPoint, dir: f64, t: f64, max_range: f64) -> f64 {
        let d = (math::cos(dir), math::sin(dir));
        let mut best = max_range;
        for s in &self.obstacles {
            if let Some(hit) = ray_shape(origin, d, s) {
                if hit < best {
                    best = hit;
                }
            }
        }
        for m in &self.dynamic {
            let s = m.shape_at(t);
            if let Some(hit) = ray_shape(origin, d, &s) {
                if hit < best {
                    best = hit;
                }
            }
        }
        best
    }
}

/// Nearest nonnegative ray parameter hitting `shape`, if any.
fn ray_shape(o: WorldPoint, d: (f64, f64), shape: &Footprint) -> Option<f64> {
    match shape {
        Footprint::Disc { center, radius } => ray_disc(o, d, *center, *radius),
        Footprint::Rect { min, max } => ray_aabb(o, d, *min, *max),
        Footprint::ConvexPolygon(pts) => {
            let mut best: Option<f64> = None;
            for k in 0..pts.len() {
                let a = pts[k];
                let b = pts[(k + 1) % pts.len()];
                if let Some(t) = ray_segment(o, d, a, b) {
                    best = Some(best.map_or(t, |cur: f64| cur.min(t)));
                }
            }
            best
        }
    }
}

fn ray_disc(o: WorldPoint, d: (f64, f64), c: WorldPoint, r: f64) -> Option<f64> {
    let fx = o.x - c.x;
    let fy = o.y - c.y;
    // |o + t d - c|^2 = r^2 with |d| = 1.
    let b = fx * d.0 + fy * d.1;
    let q = fx * fx + fy * fy - r * r;
    let disc = b * b - q;
    if disc < 0.0 {
        return None;
    }
    let s = math::sqrt(disc);
    let t0 = -b - s;
    let t1 = -b + s;
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 >= 0.0 {
        // Origin inside the disc: the surface is behind us in every sense;
        // report an immediate hit.
        Some(0.0)
    } else {
        None
    }
}

fn ray_aabb(o: WorldPoint, d: (f64, f64), min: WorldPoint, max: WorldPoint) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (oc, dc, lo, hi) in [(o.x, d.0, min.x, max.x), (o.y, d.1, min.y, max.y)] {
        if dc == 0.0 {
            if oc < lo || oc > hi {
                return None;
            }
        } else {
            let mut t0 = (lo - oc) / dc;
            let mut t1 = (hi - oc) / dc;
            if t0 > t1 {
                core::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
    }
    if t_far < 0.0 {
        None
    } else {
        Some(t_near.max(0.0))
    }
}

fn ray_segment(o: WorldPoint, d: (f64, f64), a: WorldPoint, b: WorldPoint) -> Option<f64> {
    let ex = b.x - a.x;
    let ey = b.y - a.y;
    let den = d.0 * ey - d.1 * ex;
    if den == 0.0 {
        return None;
    }
    let t = ((a.x - o.x) * ey - (a.y - o.y) * ex) / den;
    let u = ((a.x - o.x) * d.1 - (a.y - o.y) * d.0) / den;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::occupancy::CellState;

    fn empty_base(side_m: f64) -> GridMap {
        let cells = (side_m / 0.1).round() as usize;
        GridMap::new(cells, cells, 0.1, WorldPoint::new(0.0, 0.0), CellState::Free)
    }

    #[test]
    fn raycast_hits_disc_at_exact_distance() {
        let w = WorldModel::build(
            &empty_base(10.0),
            alloc::vec![Footprint::Disc {
                center: WorldPoint::new(5.0, 2.0),
                radius: 0.5,
            }],
        );
        let d = w.raycast(WorldPoint::new(1.0, 2.0), 0.0, 0.0, 4.0);
        assert!((d - 3.5).abs() < 1e-12);
        // Miss: ray pointing away.
        let miss = w.raycast(WorldPoint::new(1.0, 2.0), core::f64::consts::PI, 0.0, 4.0);
        assert_eq!(miss, 4.0);
    }

    #[test]
    fn raycast_against_wall_matches_secant_growth() {
        // Wall along x at y = 3.0; a ray tilted by theta from the wall
        // normal measures 2.0 / cos(theta) from (1, 1).
        let w = WorldModel::build(
            &empty_base(10.0),
            alloc::vec![Footprint::Rect {
                min: WorldPoint::new(0.0, 3.0),
                max: WorldPoint::new(10.0, 3.2),
            }],
        );
        for theta_deg in [-20.0f64, -5.0, 0.0, 10.0, 25.0] {
            let theta = theta_deg.to_radians();
            let dir = core::f64::consts::FRAC_PI_2 - theta;
            let d = w.raycast(WorldPoint::new(5.0, 1.0), dir, 0.0, 4.0);
            assert!(
                (d - 2.0 / theta.cos()).abs() < 1e-12,
                "theta {theta_deg}: {d}"
            );
        }
    }

    #[test]
    fn collision_is_cell_based_and_swept() {
        let w = WorldModel::build(
            &empty_base(10.0),
            alloc::vec![Footprint::Disc {
                center: WorldPoint::new(5.0, 5.0),
                radius: 0.3,
            }],
        );
        assert!(w.collides(WorldPoint::new(5.0, 5.0)));
        assert!(!w.collides(WorldPoint::new(2.0, 2.0)));
        // Off the map counts as a collision.
        assert!(w.collides(WorldPoint::new(-1.0, 5.0)));
        // A sweep across the disc collides even though both endpoints clear.
        assert!(w.sweep_collides(WorldPoint::new(3.0, 5.0), WorldPoint::new(7.0, 5.0)));
        assert!(!w.sweep_collides(WorldPoint::new(3.0, 2.0), WorldPoint::new(7.0, 2.0)));
    }

    #[test]
    fn truth_map_is_inflated() {
        let w = WorldModel::build(
            &empty_base(10.0),
            alloc::vec![Footprint::Disc {
                center: WorldPoint::new(5.05, 5.05),
                radius: 0.04,
            }],
        );
        let m = w.truth_map();
        let center = m.world_to_grid(WorldPoint::new(5.05, 5.05)).unwrap();
        assert_eq!(m.state(center), CellState::Obstacle);
        assert_eq!(m.count_state(CellState::Obstacle), 1);
        assert_eq!(m.count_state(CellState::SafetyArea), 24);
    }

    #[test]
    fn dynamic_obstacle_interpolates_and_holds() {
        let m = DynamicObstacle {
            shape: Footprint::Disc {
                center: WorldPoint::new(0.0, 0.0),
                radius: 0.2,
            },
            keyframes: alloc::vec![
                (0.0, WorldPoint::new(0.0, 0.0)),
                (2.0, WorldPoint::new(4.0, 0.0)),
            ],
        };
        assert_eq!(m.position(-1.0), WorldPoint::new(0.0, 0.0));
        let mid = m.position(1.0);
        assert!((mid.x - 2.0).abs() < 1e-12);
        assert_eq!(m.position(99.0), WorldPoint::new(4.0, 0.0));

        let mut w = WorldModel::build(&empty_base(10.0), alloc::vec![]);
        w.dynamic.push(m);
        let before = w.raycast(WorldPoint::new(0.0, 0.0), 0.0, 0.0, 4.0);
        assert!((before - 0.0).abs() < 1e-12); // origin inside the disc at t=0
        let after = w.raycast(WorldPoint::new(0.0, 0.0), 0.0, 2.0, 4.0);
        assert!((after - 3.8).abs() < 1e-12);
    }
}
