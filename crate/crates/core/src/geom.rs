//! Planar vectors and poses.

use core::f64::consts::{PI, TAU};
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = libm::fmod(a, TAU);
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `theta`.
    pub fn from_angle(theta: f64) -> Self {
        Self::new(libm::cos(theta), libm::sin(theta))
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn angle(self) -> f64 {
        libm::atan2(self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
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
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Planar pose: position in meters, heading in radians wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn from_parts(position: Vec2, theta: f64) -> Self {
        Self::new(position.x, position.y, theta)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector along the local x axis.
    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    /// Map a point from this frame into the parent frame.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        p.rotate(self.theta) + self.position()
    }

    /// Map a point from the parent frame into this frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.theta)
    }

    pub fn transform_vector(&self, v: Vec2) -> Vec2 {
        v.rotate(self.theta)
    }

    pub fn inverse_transform_vector(&self, v: Vec2) -> Vec2 {
        v.rotate(-self.theta)
    }

    /// `self ∘ other`: `other` is expressed in this frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        Pose2::from_parts(self.transform_point(other.position()), self.theta + other.theta)
    }

    pub fn inverse(&self) -> Pose2 {
        Pose2::from_parts(-self.position().rotate(-self.theta), -self.theta)
    }

    /// This pose expressed in `frame`.
    pub fn relative_to(&self, frame: &Pose2) -> Pose2 {
        Pose2::from_parts(frame.inverse_transform_point(self.position()), self.theta - frame.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}
