//! Planar vectors, drone state and the handful of predicates the rest of the
//! crate is built on.

use core::f64::consts::PI;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};
use crate::math;

pub type DroneId = u32;

/// Perpendicular distance below which a point counts as lying on a line.
pub const EPS_SIDE: f64 = 1e-9;

/// Point or displacement in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    /// Panics on NaN or infinite components; use [`Vec2::try_new`] for
    /// untrusted input.
    pub fn new(x: f64, y: f64) -> Self {
        Self::try_new(x, y).expect("Vec2 components must be finite")
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Vec2 { x, y })
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    /// Unit vector, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }

    /// Counter-clockwise quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2 {
            x: -self.y,
            y: self.x,
        }
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = (math::sin(angle), math::cos(angle));
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    /// Rotate by the angle of the unit vector `dir` (cos, sin).
    pub fn rotate_by(self, dir: Vec2) -> Vec2 {
        Vec2 {
            x: dir.x * self.x - dir.y * self.y,
            y: dir.y * self.x + dir.x * self.y,
        }
    }

    /// Shorten to at most `max_len`.
    pub fn clamp_norm(self, max_len: f64) -> Vec2 {
        let n = self.norm();
        if n > max_len && n > 0.0 {
            self * (max_len / n)
        } else {
            self
        }
    }

    pub fn lerp(self, to: Vec2, t: f64) -> Vec2 {
        self + (to - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2 {
            x: self.x + o.x,
            y: self.y + o.y,
        }
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
        Vec2 {
            x: self.x - o.x,
            y: self.y - o.y,
        }
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2 {
            x: self.x * k,
            y: self.y * k,
        }
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, k: f64) -> Vec2 {
        Vec2 {
            x: self.x / k,
            y: self.y / k,
        }
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2 {
            x: -self.x,
            y: -self.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Leader,
    Follower,
}

/// One swarm member.
#[derive(Debug, Clone, PartialEq)]
pub struct DroneState {
    pub id: DroneId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub speed_limit: f64,
    pub role: Role,
    /// Accumulated CA move energy (0 / 1 / 2 per step).
    pub energy_used: u64,
}

impl DroneState {
    pub fn new(id: DroneId, position: Vec2, speed_limit: f64, role: Role) -> Self {
        DroneState {
            id,
            position,
            velocity: Vec2::ZERO,
            speed_limit,
            role,
            energy_used: 0,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Unit vector along the current velocity, if moving.
    pub fn heading(&self) -> Option<Vec2> {
        self.velocity.normalized()
    }

    /// Set the velocity, clamped to the speed limit.
    pub fn set_velocity(&mut self, v: Vec2) {
        self.velocity = v.clamp_norm(self.speed_limit);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid("radius", "must be finite and >= 0"));
        }
        Ok(Circle { center, radius })
    }

    pub fn contains(&self, p: Vec2) -> bool {
        distance(self.center, p) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    On,
    Right,
}

pub fn distance(a: Vec2, b: Vec2) -> f64 {
    (b - a).norm()
}

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Angle of `to − from` from the +x axis, in (−π, π].
pub fn bearing(from: Vec2, to: Vec2) -> Result<f64> {
    if from == to {
        return Err(Error::CoincidentPoints);
    }
    let d = to - from;
    Ok(wrap_angle(math::atan2(d.y, d.x)))
}

/// Which side of the directed line through `line_point` along `line_dir`
/// the point `p` falls on.
pub fn signed_side(p: Vec2, line_point: Vec2, line_dir: Vec2) -> Result<Side> {
    let len = line_dir.norm();
    if len == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let offset = line_dir.cross(p - line_point) / len;
    Ok(if offset > EPS_SIDE {
        Side::Left
    } else if offset < -EPS_SIDE {
        Side::Right
    } else {
        Side::On
    })
}
