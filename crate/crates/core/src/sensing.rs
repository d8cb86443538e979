//! Range-limited obstacle detection and the closing-speed model that turns
//! two range samples into an obstacle velocity, a point of impact and a
//! danger zone.
//!
//! Obstacles are discs. The "edges" seen by a drone are the two tangent
//! points of the disc; right is the clockwise one.

use crate::error::{Error, Result};
use crate::geometry::{bearing, distance, wrap_angle, Circle, DroneId, DroneState, Vec2};
use crate::math;

/// Speeds at or below this magnitude count as stationary, m/s.
pub const EPS_V: f64 = 1e-3;

/// Ground truth for one obstacle, owned by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleTruth {
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

impl ObstacleTruth {
    pub fn new(center: Vec2, radius: f64, velocity: Vec2) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid("radius", "obstacle radius must be > 0"));
        }
        Ok(ObstacleTruth {
            center,
            radius,
            velocity,
        })
    }

    pub fn advanced(&self, dt: f64) -> Self {
        ObstacleTruth {
            center: self.center + self.velocity * dt,
            ..*self
        }
    }

    pub fn disc(&self) -> Circle {
        Circle {
            center: self.center,
            radius: self.radius,
        }
    }
}

/// Raw measurement of an obstacle disc from one observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDetection {
    pub observer_id: DroneId,
    /// Distance to the nearest point of the disc.
    pub d_obs: f64,
    /// Distance to the right tangent point.
    pub dr: f64,
    /// Distance to the left tangent point.
    pub dl: f64,
    pub theta_r: f64,
    pub theta_l: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Stationary,
    Approaching,
    Receding,
}

impl Motion {
    pub fn classify(v_obs: f64) -> Motion {
        if v_obs.abs() <= EPS_V {
            Motion::Stationary
        } else if v_obs > 0.0 {
            Motion::Approaching
        } else {
            Motion::Receding
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleEstimate {
    /// Positive when the obstacle closes the gap beyond the observer's own motion.
    pub v_obs: f64,
    pub motion: Motion,
    pub d_impact: f64,
    pub point_of_impact: Vec2,
    pub danger_zone: Circle,
}

impl ObstacleEstimate {
    pub fn new(
        drone: &DroneState,
        det: &EdgeDetection,
        v_obs: f64,
        obstacle_radius: f64,
        safety_margin: f64,
    ) -> Result<Self> {
        let (point_of_impact, d_impact) = compute_impact(drone, det, v_obs)?;
        Ok(ObstacleEstimate {
            v_obs,
            motion: Motion::classify(v_obs),
            d_impact,
            point_of_impact,
            danger_zone: danger_zone(point_of_impact, obstacle_radius, safety_margin)?,
        })
    }
}

/// Measure `obstacle` from `drone` if its nearest point is within range.
pub fn detect(
    drone: &DroneState,
    obstacle: &ObstacleTruth,
    detection_range: f64,
    t: f64,
) -> Result<Option<EdgeDetection>> {
    if !(detection_range > 0.0) {
        return Err(Error::invalid("detection_range", "must be > 0"));
    }
    let center_dist = distance(drone.position, obstacle.center);
    if center_dist < obstacle.radius {
        return Err(Error::ObserverInsideObstacle);
    }
    let d_obs = center_dist - obstacle.radius;
    if d_obs > detection_range {
        return Ok(None);
    }
    // On the rim the tangent points coincide with the observer.
    let tangent_len =
        math::sqrt((center_dist * center_dist - obstacle.radius * obstacle.radius).max(0.0));
    let axis = bearing(drone.position, obstacle.center)?;
    let half = math::asin((obstacle.radius / center_dist).min(1.0));
    Ok(Some(EdgeDetection {
        observer_id: drone.id,
        d_obs,
        dr: tangent_len,
        dl: tangent_len,
        theta_r: wrap_angle(axis - half),
        theta_l: wrap_angle(axis + half),
        timestamp: t,
    }))
}

/// Obstacle speed along the observer–obstacle axis from two range samples.
///
/// `d0` and `d1` are ranges at `t0` and `t1`, `v_uav` the observer's speed
/// toward the obstacle. The gap the observer did not close itself is
/// attributed to the obstacle.
pub fn estimate_velocity(d0: f64, d1: f64, v_uav: f64, t0: f64, t1: f64) -> Result<f64> {
    let dt = t1 - t0;
    if !(dt > 0.0) {
        return Err(Error::NonpositiveInterval);
    }
    if !(d0 >= 0.0 && d1 >= 0.0) {
        return Err(Error::invalid("distance", "range samples must be >= 0"));
    }
    let d_uav = v_uav * dt;
    let d_obs = d0 - d_uav - d1;
    Ok(d_obs / dt)
}

/// Meeting point of the drone's heading ray and the obstacle, with the
/// distance the drone covers to get there.
pub fn compute_impact(drone: &DroneState, det: &EdgeDetection, v_obs: f64) -> Result<(Vec2, f64)> {
    let v_drone = drone.speed();
    let v_obs = if Motion::classify(v_obs) == Motion::Stationary {
        0.0
    } else {
        v_obs
    };
    let closing = v_drone + v_obs;
    if !(closing > 0.0) {
        return Err(Error::NoClosing);
    }
    let tau = det.d_obs / closing;
    let d_impact = v_drone * tau;
    let heading = drone.heading().unwrap_or(Vec2::ZERO);
    Ok((drone.position + heading * d_impact, d_impact))
}

pub fn danger_zone(
    point_of_impact: Vec2,
    obstacle_radius: f64,
    safety_margin: f64,
) -> Result<Circle> {
    if !(obstacle_radius > 0.0) {
        return Err(Error::invalid("obstacle_radius", "must be > 0"));
    }
    if !(safety_margin >= 0.0) {
        return Err(Error::invalid("safety_margin", "must be >= 0"));
    }
    Circle::new(point_of_impact, obstacle_radius + safety_margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Role;
    use core::f64::consts::PI;

    fn drone_at(x: f64, y: f64, vx: f64, vy: f64) -> DroneState {
        let mut d = DroneState::new(1, Vec2::new(x, y), 100.0, Role::Leader);
        d.velocity = Vec2::new(vx, vy);
        d
    }

    /// Extreme bearings of the disc boundary by dense sampling plus local
    /// refinement; independent of the asin construction.
    fn sampled_edges(p: Vec2, c: Vec2, r: f64) -> (f64, f64) {
        let axis = math::atan2(c.y - p.y, c.x - p.x);
        let rel = |phi: f64| {
            let q = Vec2::new(c.x + r * math::cos(phi), c.y + r * math::sin(phi));
            wrap_angle(math::atan2(q.y - p.y, q.x - p.x) - axis)
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut best_lo = 0.0;
        let mut best_hi = 0.0;
        let n = 20_000;
        for k in 0..n {
            let phi = 2.0 * PI * k as f64 / n as f64;
            let a = rel(phi);
            if a < lo {
                lo = a;
                best_lo = phi;
            }
            if a > hi {
                hi = a;
                best_hi = phi;
            }
        }
        // golden-section refinement around each extreme
        let refine = |center: f64, sign: f64| {
            let (mut a, mut b) = (center - 2.0 * PI / n as f64, center + 2.0 * PI / n as f64);
            for _ in 0..100 {
                let m1 = a + (b - a) * 0.381_966;
                let m2 = a + (b - a) * 0.618_034;
                if sign * rel(m1) > sign * rel(m2) {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            rel(0.5 * (a + b))
        };
        (axis + refine(best_lo, -1.0), axis + refine(best_hi, 1.0))
    }

    #[test]
    fn out_of_range_is_none() {
        let o = ObstacleTruth::new(Vec2::new(100.0, 0.0), 5.0, Vec2::ZERO).unwrap();
        assert_eq!(
            detect(&drone_at(0.0, 0.0, 0.0, 0.0), &o, 50.0, 0.0).unwrap(),
            None
        );
    }

    #[test]
    fn edges_match_sampled_tangents() {
        let o = ObstacleTruth::new(Vec2::new(30.0, 0.0), 5.0, Vec2::ZERO).unwrap();
        let det = detect(&drone_at(0.0, 0.0, 0.0, 0.0), &o, 50.0, 1.5)
            .unwrap()
            .unwrap();
        assert!((det.d_obs - 25.0).abs() < 1e-12);
        let (r, l) = sampled_edges(Vec2::ZERO, o.center, o.radius);
        assert!((det.theta_r - r).abs() < 1e-9, "{} vs {}", det.theta_r, r);
        assert!((det.theta_l - l).abs() < 1e-9);
        let half = math::asin(5.0 / 30.0);
        assert!((det.theta_r + half).abs() < 1e-12);
        assert!((det.theta_l - half).abs() < 1e-12);
        assert!(det.d_obs <= det.dr.min(det.dl));
        assert_eq!(det.timestamp, 1.5);
    }

    #[test]
    fn grazing_geometry_is_near_hemispheric() {
        let r = 10.0 - 1e-6;
        let o = ObstacleTruth::new(Vec2::new(0.0, 10.0), r, Vec2::ZERO).unwrap();
        let det = detect(&drone_at(0.0, 0.0, 0.0, 0.0), &o, 50.0, 0.0)
            .unwrap()
            .unwrap();
        let (lo, hi) = sampled_edges(Vec2::ZERO, o.center, r);
        let span = det.theta_l - det.theta_r;
        assert!((span - (hi - lo)).abs() < 1e-6, "{span} vs {}", hi - lo);
        assert!(span > PI - 0.01 && span < PI);
    }

    #[test]
    fn inside_obstacle_is_fault() {
        let o = ObstacleTruth::new(Vec2::new(1.0, 0.0), 5.0, Vec2::ZERO).unwrap();
        assert_eq!(
            detect(&drone_at(0.0, 0.0, 0.0, 0.0), &o, 50.0, 0.0),
            Err(Error::ObserverInsideObstacle)
        );
    }

    #[test]
    fn velocity_examples() {
        let v = estimate_velocity(100.0, 95.0, 5.0, 0.0, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(Motion::classify(v), Motion::Stationary);
        let v = estimate_velocity(100.0, 90.0, 5.0, 0.0, 1.0).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(Motion::classify(v), Motion::Approaching);
        let v = estimate_velocity(100.0, 100.0, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(Motion::classify(-0.5), Motion::Receding);
        assert_eq!(
            estimate_velocity(1.0, 1.0, 0.0, 2.0, 2.0),
            Err(Error::NonpositiveInterval)
        );
    }

    fn det_at(d_obs: f64) -> EdgeDetection {
        EdgeDetection {
            observer_id: 1,
            d_obs,
            dr: d_obs,
            dl: d_obs,
            theta_r: 0.0,
            theta_l: 0.0,
            timestamp: 0.0,
        }
    }

    #[test]
    fn impact_examples() {
        let d = drone_at(0.0, 0.0, 5.0, 0.0);
        let (p, dist) = compute_impact(&d, &det_at(50.0), 0.0).unwrap();
        assert_eq!(dist, 50.0);
        assert_eq!(p, Vec2::new(50.0, 0.0));
        // tau = 50 / (5 + 5) = 5 s, drone covers 25 m
        let (p, dist) = compute_impact(&d, &det_at(50.0), 5.0).unwrap();
        assert_eq!(dist, 25.0);
        assert_eq!(p, Vec2::new(25.0, 0.0));
        assert_eq!(
            compute_impact(&d, &det_at(50.0), -10.0),
            Err(Error::NoClosing)
        );
    }

    #[test]
    fn danger_zone_examples() {
        let c = danger_zone(Vec2::new(10.0, 10.0), 5.0, 0.0).unwrap();
        assert_eq!(c.radius, 5.0);
        assert_eq!(
            danger_zone(Vec2::new(10.0, 10.0), 5.0, 3.0).unwrap().radius,
            8.0
        );
        assert_eq!(danger_zone(Vec2::ZERO, 2.0, 2.0).unwrap().radius, 4.0);
        assert!(danger_zone(Vec2::ZERO, 0.0, 2.0).is_err());
        assert!(danger_zone(Vec2::ZERO, 1.0, -2.0).is_err());
    }

    #[test]
    fn detection_is_monotone_in_range() {
        let o = ObstacleTruth::new(Vec2::new(30.0, 4.0), 3.0, Vec2::ZERO).unwrap();
        let d = drone_at(0.0, 0.0, 0.0, 0.0);
        let mut seen = false;
        for k in 1..100 {
            let hit = detect(&d, &o, k as f64, 0.0).unwrap().is_some();
            assert!(!seen || hit);
            seen |= hit;
        }
        assert!(seen);
    }
}
