//! Planar frames, headings and the egocentric home-vector math.
//!
//! World frame: `x` points east, `y` points north. Headings are measured
//! from north, counter-clockwise positive, so a gaze vector `g` has heading
//! `atan2(-g.x, g.y)`. Under this convention the rotation
//!
//! ```text
//! R(-w) = [  cos w   sin w ]
//!         [ -sin w   cos w ]
//! ```
//!
//! maps a world-frame direction into the egocentric frame in which `y` is
//! forward along the gaze and `x` is lateral (to the right of the gaze).

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which a sample is considered to sit on the nest.
pub const NEST_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A point on the ground plane, in meters.
pub type Position2D = Vec2;

impl Vec2 {
    pub const NORTH: Vec2 = Vec2 { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(Vec2::new(self.x / n, self.y / n))
        } else {
            None
        }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: HeadingAngle) -> Vec2 {
        let w = heading.radians();
        Vec2::new(-w.sin(), w.cos())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle in radians into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Heading measured from north, counter-clockwise positive, in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HeadingAngle(f64);

impl HeadingAngle {
    pub const NORTH: HeadingAngle = HeadingAngle(0.0);

    pub fn new(radians: f64) -> Self {
        HeadingAngle(wrap_angle(radians))
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// Egocentric direction: `y` forward along the gaze, `x` lateral.
///
/// Ground-truth labels are unit vectors; network predictions are arbitrary
/// points of `[-1, 1]^2` whose norm reads as confidence.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HomeVector {
    pub x: f64,
    pub y: f64,
}

impl HomeVector {
    pub const FORWARD: HomeVector = HomeVector { x: 0.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn norm(self) -> f64 {
        self.as_vec().norm()
    }

    /// Direction of the vector relative to the gaze, using the heading
    /// convention (counter-clockwise positive, `[0, 1]` is zero).
    pub fn angle(self) -> Result<f64> {
        if !(self.x.is_finite() && self.y.is_finite()) || (self.x == 0.0 && self.y == 0.0) {
            return Err(Error::UndefinedDirection(format!(
                "home vector ({}, {}) has no direction",
                self.x, self.y
            )));
        }
        Ok(wrap_angle((-self.x).atan2(self.y)))
    }

    /// Unit vector at relative angle `angle` (heading convention).
    pub fn from_angle(angle: f64) -> Self {
        HomeVector::new(-angle.sin(), angle.cos())
    }
}

impl From<Vec2> for HomeVector {
    fn from(v: Vec2) -> Self {
        HomeVector::new(v.x, v.y)
    }
}

/// Heading of a gaze vector relative to north.
pub fn gaze_angle(gaze: Vec2) -> Result<HeadingAngle> {
    if !gaze.is_finite() || (gaze.x == 0.0 && gaze.y == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gaze vector ({}, {}) must be finite and nonzero",
            gaze.x, gaze.y
        )));
    }
    Ok(HeadingAngle::new((-gaze.x).atan2(gaze.y)))
}

/// Counter-clockwise rotation of `v` by `omega` radians.
pub fn rotate2(v: Vec2, omega: f64) -> Vec2 {
    let (s, c) = omega.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Ground-truth egocentric home vector for an agent at `pos` gazing along
/// `gaze`.
pub fn relative_home_vector(
    pos: Position2D,
    nest: Position2D,
    gaze: HeadingAngle,
) -> Result<HomeVector> {
    let delta = nest - pos;
    if delta.norm() <= NEST_EPS {
        return Err(Error::DegenerateLabel { x: pos.x, y: pos.y });
    }
    let home = delta
        .normalized()
        .ok_or(Error::DegenerateLabel { x: pos.x, y: pos.y })?;
    let (s, c) = gaze.radians().sin_cos();
    Ok(HomeVector::new(c * home.x + s * home.y, -s * home.x + c * home.y))
}

/// World-frame direction of an egocentric vector seen under `gaze`.
pub fn to_world(rel: HomeVector, gaze: HeadingAngle) -> Vec2 {
    rotate2(rel.as_vec(), gaze.radians())
}

/// Absolute angular difference between two directions, in degrees.
pub fn angular_error(pred: HomeVector, truth: HomeVector) -> Result<f64> {
    let a = pred.angle()?;
    let b = truth.angle()?;
    Ok(wrap_angle(a - b).abs().to_degrees())
}
