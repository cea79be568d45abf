//! Coordinate frames and quantization shared by every other module.
//!
//! Three frames appear throughout the crate:
//!
//! - **world**: meters, fixed origin, x/y axes of the field.
//! - **grid**: integer cell indices `(u, v)` over a map with a world-space
//!   origin and a cell side (0.1 m everywhere in the shipped setups).
//! - **body**: meters relative to the vehicle. +y is forward along the sensor
//!   boresight, +x is right; azimuths are measured from +y, positive toward
//!   +x.
//!
//! Quantization uses half-open cells `[k*cell, (k+1)*cell)`: a point exactly
//! on a boundary belongs to the higher-index cell. Out-of-range points are an
//! error, never clamped.

use core::f64::consts::{FRAC_PI_2, PI, TAU};
use core::fmt;

use crate::math;

/// Default cell side for all shipped maps, in meters.
pub const DEFAULT_CELL_SIDE: f64 = 0.1;

/// A point in a metric frame (world or body), in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to `other`, meters.
    pub fn dist(&self, other: WorldPoint) -> f64 {
        math::hypot(self.x - other.x, self.y - other.y)
    }
}

impl fmt::Display for WorldPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Column/row index of a cell. `u` counts along +x, `v` along +y.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub u: usize,
    pub v: usize,
}

impl GridIndex {
    pub const fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }

    /// Chebyshev (chessboard) distance to `other`.
    pub fn chebyshev(&self, other: GridIndex) -> usize {
        let du = self.u.abs_diff(other.u);
        let dv = self.v.abs_diff(other.v);
        du.max(dv)
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.u, self.v)
    }
}

/// Flight pose: position plus yaw, with the altitude carried along.
///
/// All shipped missions fly at a fixed 1.0 m altitude, so `z` is constant in
/// practice; `phi` is the world-frame yaw in radians, normalized to (−π, π],
/// measured from +x toward +y (`atan2` convention).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose4 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

/// Fixed flight altitude of every waypoint, meters.
pub const FLIGHT_ALTITUDE: f64 = 1.0;

impl Pose4 {
    pub fn new(x: f64, y: f64, z: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            z,
            phi: normalize_angle(phi),
        }
    }

    /// Pose at the default flight altitude.
    pub fn at_altitude(x: f64, y: f64, phi: f64) -> Self {
        Self::new(x, y, FLIGHT_ALTITUDE, phi)
    }

    pub fn point(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }
}

/// A body frame embedded in the world: `heading` is the world direction of
/// the body +y (forward) axis, as a counter-clockwise rotation from world +y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyFrame {
    pub origin: WorldPoint,
    pub heading: f64,
}

impl BodyFrame {
    pub fn new(origin: WorldPoint, heading: f64) -> Self {
        Self {
            origin,
            heading: normalize_angle(heading),
        }
    }

    /// Frame of a vehicle at `pose`: forward (+y body) points along the yaw
    /// direction. Yaw is measured from world +x, the body heading from world
    /// +y, hence the quarter-turn offset.
    pub fn from_pose(pose: &Pose4) -> Self {
        Self::new(pose.point(), pose.phi - FRAC_PI_2)
    }
}

/// Normalizes an angle to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let r = math::rem_euclid(a + PI, TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Azimuth of a body-frame point: angle from +y (forward), positive toward
/// +x (right).
pub fn body_azimuth(p: WorldPoint) -> f64 {
    math::atan2(p.x, p.y)
}

/// Body→world: rotate by the frame heading (counter-clockwise), then
/// translate by the frame origin.
pub fn body_to_world(p: WorldPoint, frame: &BodyFrame) -> WorldPoint {
    let (s, c) = (math::sin(frame.heading), math::cos(frame.heading));
    WorldPoint::new(
        c * p.x - s * p.y + frame.origin.x,
        s * p.x + c * p.y + frame.origin.y,
    )
}

/// Inverse of [`body_to_world`].
pub fn world_to_body(p: WorldPoint, frame: &BodyFrame) -> WorldPoint {
    let (s, c) = (math::sin(frame.heading), math::cos(frame.heading));
    let dx = p.x - frame.origin.x;
    let dy = p.y - frame.origin.y;
    WorldPoint::new(c * dx + s * dy, -s * dx + c * dy)
}

/// A world point that does not quantize into the map extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutOfRange {
    pub p: WorldPoint,
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "point {} is outside the map extent", self.p)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OutOfRange {}

/// Signed floor quantization of one coordinate (no bounds check).
pub fn quantize(value: f64, origin: f64, cell_side: f64) -> i64 {
    math::floor((value - origin) / cell_side) as i64
}

/// Quantizes a world point into a `width`×`height` cell grid anchored at
/// `origin`. Points on a cell boundary map to the higher-index cell; points
/// outside `[origin, origin + size)` are an error.
pub fn world_to_grid(
    p: WorldPoint,
    origin: WorldPoint,
    cell_side: f64,
    width: usize,
    height: usize,
) -> Result<GridIndex, OutOfRange> {
    let u = quantize(p.x, origin.x, cell_side);
    let v = quantize(p.y, origin.y, cell_side);
    if u < 0 || v < 0 || u >= width as i64 || v >= height as i64 {
        return Err(OutOfRange { p });
    }
    Ok(GridIndex::new(u as usize, v as usize))
}

/// Center of cell `i` in the frame of a map anchored at `origin`.
pub fn grid_to_world_center(i: GridIndex, origin: WorldPoint, cell_side: f64) -> WorldPoint {
    WorldPoint::new(
        origin.x + (i.u as f64 + 0.5) * cell_side,
        origin.y + (i.v as f64 + 0.5) * cell_side,
    )
}
