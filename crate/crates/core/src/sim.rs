//! Fixed-timestep swarm simulation.
//!
//! Each tick: obstacles advance, the leader looks for obstacles, a flagged
//! threat is handed to the GA planner, and otherwise the swarm tracks the
//! advancing formation through CPSR mapping. Avoidance plans run one CA step
//! per `k` ticks; afterwards the swarm keeps cruising until it is clear of
//! the obstacle, then re-forms.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ga::{self, Chromosome, GaConfig, PlanProblem};
use crate::geometry::{distance, Circle, DroneId, Role, Vec2};
use crate::grid::{Cell, GridSpec, GridState, Move};
use crate::math;
use crate::registration::{self, PointSet, RegistrationConfig};
use crate::sensing::{self, ObstacleTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cpsr,
    UniqueLeader,
    NoObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Arrived,
    Timeout,
    CollisionFault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cruise,
    Avoid,
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub cruise_speed: f64,
    pub speed_limit: f64,
    /// Formation-error feedback gain, 1/s.
    pub gain: f64,
    /// Anchor speed, as a fraction of cruise, while a fixed leader is out of
    /// its slot.
    pub loiter_fraction: f64,
    /// Distance from its slot beyond which a fixed leader counts as displaced.
    pub leader_tolerance: f64,
    pub lambda_metric: f64,
    pub safety_radius: f64,
    pub safety_margin: f64,
    /// Leader range to an obstacle surface at which a threat is planned for.
    pub plan_trigger_distance: f64,
    /// Defaults to one cell.
    pub arrival_radius: Option<f64>,
    /// d_rms threshold as a fraction of the formation edge length.
    pub reform_fraction: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            cruise_speed: 2.0,
            speed_limit: 3.0,
            gain: 0.5,
            loiter_fraction: 0.25,
            leader_tolerance: 0.5,
            lambda_metric: 0.1,
            safety_radius: 1.0,
            safety_margin: 2.0,
            plan_trigger_distance: 14.0,
            arrival_radius: None,
            reform_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub cell_size: f64,
    /// Free cells added around the planning window on every side.
    pub window_margin: i32,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cell_size: 2.0,
            window_margin: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Drone ids and spawn positions.
    pub drones: Vec<(DroneId, Vec2)>,
    /// Formation slots in the body frame (+x along the mission heading).
    pub formation: Vec<Vec2>,
    pub leader_slot: usize,
    pub obstacles: Vec<ObstacleTruth>,
    pub destination: Vec2,
    pub detection_range: f64,
    pub tick_dt: f64,
    pub mode: Mode,
    pub grid: GridConfig,
    pub ga: GaConfig,
    pub registration: RegistrationConfig,
    pub control: ControlConfig,
    pub rng_seed: u64,
    pub max_ticks: usize,
}

fn positive(v: f64, field: &'static str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, "must be a finite number > 0"))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        positive(self.tick_dt, "tick_dt")?;
        if self.drones.is_empty() {
            return Err(Error::invalid("drones", "at least one drone is required"));
        }
        let mut ids = BTreeSet::new();
        for &(id, p) in &self.drones {
            if !ids.insert(id) {
                return Err(Error::DuplicateDrone(id));
            }
            if !p.is_finite() {
                return Err(Error::invalid("drones", "non-finite spawn position"));
            }
        }
        for i in 0..self.drones.len() {
            for j in (i + 1)..self.drones.len() {
                if distance(self.drones[i].1, self.drones[j].1) <= self.control.safety_radius {
                    return Err(Error::invalid(
                        "drones",
                        "spawn positions closer than the safety radius",
                    ));
                }
            }
        }
        if self.formation.len() != self.drones.len() {
            return Err(Error::invalid("formation", "need one slot per drone"));
        }
        if self.leader_slot >= self.formation.len() {
            return Err(Error::invalid("leader_slot", "outside the formation"));
        }
        if !self.destination.is_finite() {
            return Err(Error::invalid("destination", "must be finite"));
        }
        if distance(self.destination, self.spawn_centroid()) <= self.arrival_radius() {
            return Err(Error::invalid(
                "destination",
                "must differ from the spawn centroid",
            ));
        }
        positive(self.detection_range, "detection_range")?;
        if self.max_ticks == 0 {
            return Err(Error::invalid("max_ticks", "must be >= 1"));
        }
        let c = &self.control;
        positive(c.cruise_speed, "cruise_speed")?;
        positive(c.speed_limit, "speed_limit")?;
        if c.speed_limit < c.cruise_speed {
            return Err(Error::invalid("speed_limit", "must be >= cruise_speed"));
        }
        positive(c.gain, "gain")?;
        if c.gain * self.tick_dt > 1.0 {
            return Err(Error::invalid("gain", "gain * tick_dt must be <= 1"));
        }
        if !(c.loiter_fraction > 0.0 && c.loiter_fraction <= 1.0) {
            return Err(Error::invalid("loiter_fraction", "must lie in (0, 1]"));
        }
        positive(c.leader_tolerance, "leader_tolerance")?;
        if !(c.lambda_metric >= 0.0) {
            return Err(Error::invalid("lambda_metric", "must be >= 0"));
        }
        positive(c.safety_radius, "safety_radius")?;
        if !(c.safety_margin >= 0.0) {
            return Err(Error::invalid("safety_margin", "must be >= 0"));
        }
        positive(c.plan_trigger_distance, "plan_trigger_distance")?;
        if let Some(r) = c.arrival_radius {
            positive(r, "arrival_radius")?;
        }
        if !(c.reform_fraction > 0.0 && c.reform_fraction < 1.0) {
            return Err(Error::invalid("reform_fraction", "must lie in (0, 1)"));
        }
        positive(self.grid.cell_size, "cell_size")?;
        if self.grid.window_margin < 1 {
            return Err(Error::invalid("window_margin", "must be >= 1"));
        }
        self.ga.validate()?;
        self.registration.validate()?;
        for o in &self.obstacles {
            positive(o.radius, "obstacles.radius")?;
            if !o.center.is_finite() || !o.velocity.is_finite() {
                return Err(Error::invalid("obstacles", "non-finite center or velocity"));
            }
        }
        if self.edge_length() <= 0.0 && self.drones.len() > 1 {
            return Err(Error::invalid("formation", "slots must be distinct"));
        }
        Ok(())
    }

    pub fn spawn_centroid(&self) -> Vec2 {
        let s = self.drones.iter().fold(Vec2::ZERO, |acc, d| acc + d.1);
        s / self.drones.len().max(1) as f64
    }

    pub fn arrival_radius(&self) -> f64 {
        self.control.arrival_radius.unwrap_or(self.grid.cell_size)
    }

    /// Shortest distance between two formation slots.
    pub fn edge_length(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.formation.len() {
            for j in (i + 1)..self.formation.len() {
                best = best.min(distance(self.formation[i], self.formation[j]));
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// d_rms level that counts as re-formed.
    pub fn reform_threshold(&self) -> f64 {
        self.control.reform_fraction * self.edge_length().max(self.grid.cell_size)
    }

    pub fn with_mode(&self, mode: Mode) -> Scenario {
        Scenario {
            mode,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    /// Per drone, in ascending id order.
    pub ids: Vec<DroneId>,
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub roles: Vec<Role>,
    pub energy: Vec<u64>,
    pub flag_obs: bool,
    pub d_rms: f64,
    pub e_tps: f64,
    pub leader_id: DroneId,
    /// `(i, j, distance)` for every id pair with `i > j`, ordered by `i` then `j`.
    pub distances: Vec<(DroneId, DroneId, f64)>,
    pub danger_zone: Option<Circle>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Vec<TickRecord>,
    pub outcome: Outcome,
    pub mission_time: Option<f64>,
    /// First detection to re-formed; `Some(0.0)` when nothing was detected.
    pub reformation_time: Option<f64>,
    pub detection_time: Option<f64>,
    /// Time the swarm was clear of the last avoided obstacle.
    pub clearance_time: Option<f64>,
    pub total_energy: u64,
    /// Every executed CA move, in execution order.
    pub ca_moves: Vec<(DroneId, Move)>,
    pub flight_distance: f64,
    pub plans: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub outcome: Outcome,
    pub mission_time: Option<f64>,
    pub reformation_time: Option<f64>,
    pub peak_d_rms: f64,
    pub peak_e_tps: f64,
    pub total_energy: u64,
    pub flight_distance: f64,
    pub min_inter_drone_distance: f64,
    /// Smallest drone-center to obstacle-surface distance seen.
    pub min_obstacle_clearance: f64,
    pub leader_changes: usize,
    pub ticks: usize,
}

/// Number of ticks at which `leader_id` differs from the previous tick.
pub fn leader_changes(trace: &[TickRecord]) -> usize {
    trace
        .windows(2)
        .filter(|w| w[0].leader_id != w[1].leader_id)
        .count()
}

pub fn metrics(result: &RunResult, scenario: &Scenario) -> Result<Summary> {
    if result.trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let peak = |f: fn(&TickRecord) -> f64| result.trace.iter().map(f).fold(0.0f64, f64::max);
    let min_pair = result
        .trace
        .iter()
        .flat_map(|r| r.distances.iter().map(|d| d.2))
        .fold(f64::INFINITY, f64::min);
    Ok(Summary {
        outcome: result.outcome,
        mission_time: result.mission_time,
        reformation_time: result.reformation_time,
        peak_d_rms: peak(|r| r.d_rms),
        peak_e_tps: peak(|r| r.e_tps),
        total_energy: result.total_energy,
        flight_distance: result.flight_distance,
        min_inter_drone_distance: min_pair,
        min_obstacle_clearance: min_obstacle_clearance(result, scenario),
        leader_changes: leader_changes(&result.trace),
        ticks: result.trace.len() - 1,
    })
}

/// Replays obstacle truth against the trace.
fn min_obstacle_clearance(result: &RunResult, scenario: &Scenario) -> f64 {
    if scenario.mode == Mode::NoObstacle {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    for (k, rec) in result.trace.iter().enumerate() {
        for o in &scenario.obstacles {
            let o = o.advanced(k as f64 * scenario.tick_dt);
            for &p in &rec.positions {
                best = best.min(distance(p, o.center) - o.radius);
            }
        }
    }
    best
}

/// Run `sc` in its own mode.
pub fn run(sc: &Scenario) -> Result<RunResult> {
    sc.validate()?;
    Engine::new(sc)?.run()
}

/// Run `sc` with a fixed leader that the rest of the swarm waits for.
pub fn run_unique_leader_baseline(sc: &Scenario) -> Result<RunResult> {
    if sc.mode != Mode::UniqueLeader {
        return Err(Error::invalid(
            "mode",
            "the baseline requires UniqueLeader mode",
        ));
    }
    run(sc)
}

struct Sample {
    observer: DroneId,
    d_obs: f64,
    t: f64,
    observer_pos: Vec2,
}

struct AvoidPlan {
    /// Segment end positions per drone; segment 0 snaps to cell centers.
    waypoints: Vec<Vec<Vec2>>,
    /// Moves completing segment `s + 1`.
    moves: Vec<Vec<Move>>,
    seg: usize,
    tick_in_seg: usize,
    from: Vec<Vec2>,
    obstacle: usize,
}

struct Engine<'a> {
    sc: &'a Scenario,
    ids: Vec<DroneId>,
    pos: Vec<Vec2>,
    vel: Vec<Vec2>,
    energy: Vec<u64>,
    obstacles: Vec<ObstacleTruth>,
    /// Formation slots rotated to the mission heading, centered at the origin.
    model_world: PointSet,
    heading: Vec2,
    leader: DroneId,
    fixed_leader: Option<DroneId>,
    phase: Phase,
    plan: Option<AvoidPlan>,
    hold_obstacle: usize,
    samples: Vec<Option<Sample>>,
    handled: BTreeSet<usize>,
    k_ticks: usize,
    plans: usize,
    /// Set after a failed plan; widens the trigger to the full sensing range.
    retreating: bool,
    detection_time: Option<f64>,
    clearance_time: Option<f64>,
    reformed_time: Option<f64>,
    ca_moves: Vec<(DroneId, Move)>,
    flight: f64,
    danger_zone: Option<Circle>,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let mut drones = sc.drones.clone();
        drones.sort_by_key(|d| d.0);
        let ids: Vec<DroneId> = drones.iter().map(|d| d.0).collect();
        let pos: Vec<Vec2> = drones.iter().map(|d| d.1).collect();
        let heading = (sc.destination - sc.spawn_centroid())
            .normalized()
            .ok_or(Error::ZeroDirection)?;
        let model_body = PointSet::new(sc.formation.clone())?;
        let c = registration::centroid(&model_body);
        let model_world = PointSet::new(
            sc.formation
                .iter()
                .map(|&v| (v - c).rotate_by(heading))
                .collect(),
        )?;
        let n = ids.len();
        let obstacles = if sc.mode == Mode::NoObstacle {
            Vec::new()
        } else {
            sc.obstacles.clone()
        };
        let cell = sc.grid.cell_size;
        let k_cruise = math::ceil(cell / (sc.control.cruise_speed * sc.tick_dt));
        let k_diag =
            math::ceil(cell * core::f64::consts::SQRT_2 / (sc.control.speed_limit * sc.tick_dt));
        let k_ticks = (k_cruise.max(k_diag) as usize).max(1);
        let mut e = Engine {
            sc,
            ids,
            pos,
            vel: alloc::vec![Vec2::ZERO; n],
            energy: alloc::vec![0; n],
            samples: obstacles.iter().map(|_| None).collect(),
            obstacles,
            model_world,
            heading,
            leader: 0,
            fixed_leader: None,
            phase: Phase::Cruise,
            plan: None,
            hold_obstacle: 0,
            handled: BTreeSet::new(),
            k_ticks,
            plans: 0,
            retreating: false,
            detection_time: None,
            clearance_time: None,
            reformed_time: None,
            ca_moves: Vec::new(),
            flight: 0.0,
            danger_zone: None,
        };
        let m = e.mapping()?;
        e.leader = m.new_leader;
        if sc.mode == Mode::UniqueLeader {
            e.fixed_leader = Some(m.new_leader);
        }
        Ok(e)
    }

    fn scene(&self) -> Result<PointSet> {
        PointSet::labelled(self.pos.clone(), self.ids.clone())
    }

    fn index_of(&self, id: DroneId) -> usize {
        self.ids
            .iter()
            .position(|&d| d == id)
            .expect("known drone id")
    }

    fn mapping(&self) -> Result<registration::MappingResult> {
        let scene = self.scene()?;
        let mut cfg = self.sc.registration.clone();
        cfg.leader_slot = self.sc.leader_slot;
        let mut m = registration::map_scene_to_model(&scene, &self.model_world, &cfg)?;
        if let Some(leader) = self.fixed_leader {
            let who = self.index_of(leader);
            registration::pin_to_slot(
                &scene,
                &self.model_world,
                &mut m.assignment,
                who,
                self.sc.leader_slot,
            );
            m.new_leader = leader;
            m.total_cost = registration::assignment_cost(&scene, &self.model_world, &m.assignment);
        }
        Ok(m)
    }

    fn centroid(&self) -> Vec2 {
        self.pos.iter().fold(Vec2::ZERO, |a, &p| a + p) / self.pos.len() as f64
    }

    fn formation_extent(&self) -> f64 {
        self.model_world
            .points()
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    fn run(mut self) -> Result<RunResult> {
        let dt = self.sc.tick_dt;
        let mut trace = Vec::with_capacity(self.sc.max_ticks.min(100_000) + 1);
        trace.push(self.record(0.0, false)?);
        let mut outcome = Outcome::Timeout;
        let mut mission_time = None;
        for tick in 0..self.sc.max_ticks {
            let t = (tick + 1) as f64 * dt;
            for o in &mut self.obstacles {
                *o = o.advanced(dt);
            }
            let before = self.pos.clone();
            let flag = self.step(t)?;
            self.emergency_stop(&before);
            for (i, p) in self.pos.iter().enumerate() {
                let d = *p - before[i];
                self.vel[i] = d / dt;
                self.flight += d.norm();
            }
            let rec = self.record(t, flag)?;
            if self.clearance_time.is_some()
                && self.reformed_time.is_none()
                && rec.d_rms < self.sc.reform_threshold()
            {
                self.reformed_time = Some(t);
            }
            let fault = self.collision();
            trace.push(rec);
            if fault {
                outcome = Outcome::CollisionFault;
                break;
            }
            if self.phase == Phase::Cruise
                && distance(self.centroid(), self.sc.destination) <= self.sc.arrival_radius()
            {
                outcome = Outcome::Arrived;
                mission_time = Some(t);
                break;
            }
        }
        let reformation_time = match (self.detection_time, self.reformed_time) {
            (None, _) => Some(0.0),
            (Some(d), Some(r)) => Some(r - d),
            (Some(_), None) => None,
        };
        Ok(RunResult {
            trace,
            outcome,
            mission_time,
            reformation_time,
            detection_time: self.detection_time,
            clearance_time: self.clearance_time,
            total_energy: self.energy.iter().sum(),
            ca_moves: self.ca_moves,
            flight_distance: self.flight,
            plans: self.plans,
        })
    }

    fn collision(&self) -> bool {
        let r = self.sc.control.safety_radius;
        for i in 0..self.pos.len() {
            for j in (i + 1)..self.pos.len() {
                if distance(self.pos[i], self.pos[j]) <= r {
                    return true;
                }
            }
            if self
                .obstacles
                .iter()
                .any(|o| distance(self.pos[i], o.center) < o.radius)
            {
                return true;
            }
        }
        false
    }

    /// One tick of decision making and motion. Returns FLAG_obs.
    fn step(&mut self, t: f64) -> Result<bool> {
        let mut flag = false;
        match self.phase {
            Phase::Cruise => {
                if let Some(threat) = self.detect_threat(t)? {
                    flag = true;
                    if self.detection_time.is_none() {
                        self.detection_time = Some(t);
                    }
                    if self.adopt_plan(&threat)? {
                        self.retreating = false;
                        self.advance_plan();
                    } else if threat.velocity.dot(self.heading) < 0.0 {
                        log::warn!("t={t:.2}: no feasible avoidance plan, backing off");
                        self.retreating = true;
                        let back = self.heading * (-self.sc.control.speed_limit * self.sc.tick_dt);
                        self.pos.iter_mut().for_each(|p| *p += back);
                    } else {
                        log::warn!("t={t:.2}: no feasible avoidance plan, holding position");
                    }
                } else {
                    self.cruise()?;
                }
            }
            // leadership is frozen while the plan runs
            Phase::Avoid => self.advance_plan(),
            Phase::Hold => self.hold(t),
        }
        Ok(flag)
    }

    fn detect_threat(&mut self, t: f64) -> Result<Option<Threat>> {
        let li = self.index_of(self.leader);
        let leader = self.drone_state(li);
        let c = self.centroid();
        let extent = self.formation_extent();
        let mut found = None;
        for (o, obs) in self.obstacles.iter().enumerate() {
            if self.handled.contains(&o) {
                continue;
            }
            let det = match sensing::detect(&leader, obs, self.sc.detection_range, t) {
                Ok(Some(d)) => d,
                Ok(None) | Err(Error::ObserverInsideObstacle) => {
                    self.samples[o] = None;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let prev = self.samples[o].take();
            self.samples[o] = Some(Sample {
                observer: leader.id,
                d_obs: det.d_obs,
                t,
                observer_pos: leader.position,
            });
            let Some(prev) = prev else { continue };
            if prev.observer != leader.id || found.is_some() {
                continue;
            }
            // observer speed toward the obstacle over the sampling interval
            let toward = (obs.center - prev.observer_pos)
                .normalized()
                .unwrap_or(self.heading);
            let v_uav = (leader.position - prev.observer_pos).dot(toward) / (t - prev.t);
            let v_obs = sensing::estimate_velocity(prev.d_obs, det.d_obs, v_uav, prev.t, t)?;
            let u = match (obs.center - leader.position).normalized() {
                Some(u) => u,
                None => continue,
            };
            let trigger = if self.retreating {
                self.sc.detection_range
            } else {
                self.sc.control.plan_trigger_distance
            };
            if u.dot(self.heading) <= 0.0 || det.d_obs > trigger {
                continue;
            }
            let est = match sensing::ObstacleEstimate::new(
                &leader,
                &det,
                v_obs,
                obs.radius,
                self.sc.control.safety_margin,
            ) {
                Ok(e) => e,
                Err(Error::NoClosing) => continue,
                Err(e) => return Err(e),
            };
            let closing = leader.speed()
                + if est.motion == sensing::Motion::Stationary {
                    0.0
                } else {
                    v_obs
                };
            let tau = det.d_obs / closing;
            let obs_vel = if est.motion == sensing::Motion::Stationary {
                Vec2::ZERO
            } else {
                -u * v_obs
            };
            let meet = obs.center + obs_vel * tau;
            let lateral = (meet - c).cross(self.heading).abs();
            if lateral
                > obs.radius
                    + self.sc.control.safety_margin
                    + extent
                    + self.sc.control.safety_radius
            {
                continue;
            }
            self.danger_zone = Some(est.danger_zone);
            found = Some(Threat {
                obstacle: o,
                center: obs.center,
                radius: obs.radius,
                velocity: obs_vel,
                meet,
                danger: est.danger_zone,
            });
        }
        Ok(found)
    }

    fn drone_state(&self, i: usize) -> crate::geometry::DroneState {
        let role = if self.ids[i] == self.leader {
            Role::Leader
        } else {
            Role::Follower
        };
        let mut d = crate::geometry::DroneState::new(
            self.ids[i],
            self.pos[i],
            self.sc.control.speed_limit,
            role,
        );
        d.velocity = self.vel[i];
        d
    }

    /// Plan around `threat`; on success the swarm enters the avoid phase.
    fn adopt_plan(&mut self, threat: &Threat) -> Result<bool> {
        let cell = self.sc.grid.cell_size;
        let h = self.heading;
        let side = h.perp();
        let inflate = threat.radius + self.sc.control.safety_margin;
        let extent = self.formation_extent();
        let c = self.centroid();
        let rear = self
            .pos
            .iter()
            .map(|&p| (p - threat.meet).dot(h))
            .fold(0.0f64, f64::min);
        let along_cells = (-rear + cell) / cell;
        let lateral_cells = (inflate + extent) / cell;
        let base_h = GaConfig::horizon_for(along_cells + lateral_cells);

        for attempt in 0..2 {
            let horizon = if attempt == 0 {
                base_h
            } else {
                base_h + base_h / 2 + 1
            };
            let duration = (horizon + 1) as f64 * self.k_ticks as f64 * self.sc.tick_dt;
            let tail = threat.center + threat.velocity * duration;

            let mut pts: Vec<Vec2> = self.pos.clone();
            let reach = inflate + extent + 2.0 * cell;
            for base in [threat.center, tail, threat.meet] {
                pts.push(base + side * reach);
                pts.push(base - side * reach);
            }
            pts.push(threat.meet + h * (extent + 3.0 * cell));
            pts.push(c - h * cell);
            let spec = window(&pts, cell, self.sc.grid.window_margin)?;

            let mut blocked = capsule_cells(&spec, threat.center, tail, inflate);
            blocked.extend(crate::grid::rasterize_blocked(&spec, &threat.danger));
            let Some(start_cells) = snap_cells(&spec, &self.pos, &blocked) else {
                log::debug!("no free start cell for some drone (horizon {horizon})");
                return Ok(false);
            };
            let start = GridState::new(
                spec,
                self.ids.iter().copied().zip(start_cells.iter().copied()),
                blocked.iter().copied(),
            )?;
            let problem = PlanProblem {
                start: &start,
                swarm_velocity: h,
                obstacle_center: threat.meet,
            };
            let mut cfg = self.sc.ga.clone();
            cfg.horizon = horizon;
            cfg.rng_seed = self.sc.rng_seed ^ ((self.plans as u64 + 1) << 32) ^ attempt as u64;
            if attempt > 0 {
                cfg.generations *= 2;
            }
            let seeds = rigid_seeds(&cfg, &problem, h);
            let evo = ga::evolve_seeded(&cfg, &problem, &seeds)?;
            self.plans += 1;
            if !evo.fitness.feasible {
                log::debug!(
                    "plan attempt {attempt} infeasible, cost {}",
                    evo.fitness.scalar_cost
                );
                continue;
            }
            log::info!(
                "adopted avoidance plan: {} steps, energy {}",
                evo.fitness.steps_to_hfd,
                evo.fitness.total_energy
            );
            let mut waypoints = alloc::vec![start_cells
                .iter()
                .map(|&c| spec.cell_to_world(c))
                .collect::<Vec<_>>()];
            let mut moves = Vec::new();
            for wp in ga::plan_to_tshape(&cfg, &evo.best, &problem)? {
                waypoints.push(wp.into_iter().map(|(_, p)| p).collect());
            }
            for s in 0..evo.fitness.steps_to_hfd {
                moves.push(evo.best.step_moves(s).to_vec());
            }
            self.plan = Some(AvoidPlan {
                waypoints,
                moves,
                seg: 0,
                tick_in_seg: 0,
                from: self.pos.clone(),
                obstacle: threat.obstacle,
            });
            self.handled.insert(threat.obstacle);
            self.phase = Phase::Avoid;
            return Ok(true);
        }
        Ok(false)
    }

    fn advance_plan(&mut self) {
        let k = self.k_ticks;
        let Some(plan) = self.plan.as_mut() else {
            self.phase = Phase::Cruise;
            return;
        };
        plan.tick_in_seg += 1;
        let target = &plan.waypoints[plan.seg];
        if plan.tick_in_seg >= k {
            self.pos.clone_from(target);
            if plan.seg > 0 {
                for (i, &m) in plan.moves[plan.seg - 1].iter().enumerate() {
                    self.energy[i] += m.energy();
                    self.ca_moves.push((self.ids[i], m));
                }
            }
            plan.from.clone_from(target);
            plan.seg += 1;
            plan.tick_in_seg = 0;
            if plan.seg == plan.waypoints.len() {
                self.hold_obstacle = plan.obstacle;
                self.plan = None;
                self.phase = Phase::Hold;
            }
        } else {
            let f = plan.tick_in_seg as f64 / k as f64;
            for (i, p) in self.pos.iter_mut().enumerate() {
                *p = plan.from[i].lerp(target[i], f);
            }
        }
    }

    fn cleared(&self, o: usize) -> bool {
        let obs = &self.obstacles[o];
        let need = obs.radius + self.sc.control.safety_margin + self.formation_extent();
        self.pos
            .iter()
            .all(|&p| (p - obs.center).dot(self.heading) > need)
    }

    fn hold(&mut self, t: f64) {
        if self.cleared(self.hold_obstacle) {
            self.phase = Phase::Cruise;
            self.danger_zone = None;
            self.clearance_time = Some(t);
            log::info!("t={t:.2}: clear of obstacle {}", self.hold_obstacle);
            // this tick still moves, under formation control
            if let Err(e) = self.cruise() {
                log::error!("cruise failed: {e}");
            }
            return;
        }
        let step = self.heading * (self.sc.control.cruise_speed * self.sc.tick_dt);
        for p in &mut self.pos {
            *p += step;
        }
    }

    /// Formation tracking toward the advancing anchor.
    fn cruise(&mut self) -> Result<()> {
        let m = self.mapping()?;
        if self.fixed_leader.is_none() {
            self.leader = m.new_leader;
        }
        let c = self.centroid();
        let to_dest = self.sc.destination - c;
        let dir = to_dest.normalized().unwrap_or(Vec2::ZERO);
        let ctl = &self.sc.control;
        let dt = self.sc.tick_dt;
        let slots = self.model_world.points();
        let errs: Vec<Vec2> = self
            .pos
            .iter()
            .zip(&m.assignment)
            .map(|(&x, &j)| x - c - slots[j])
            .collect();
        let loiter = self
            .fixed_leader
            .map(|l| self.index_of(l))
            .filter(|&li| errs[li].norm() > ctl.leader_tolerance);
        let mut advance = ctl.cruise_speed * dt;
        if loiter.is_some() {
            advance *= ctl.loiter_fraction;
        }
        let delta = advance.min(to_dest.norm());
        let g = ctl.gain * dt;
        let mut disp: Vec<Vec2> = errs.iter().map(|&e| -e * g + dir * delta).collect();
        let biggest = disp.iter().map(|d| d.norm()).fold(0.0, f64::max);
        let cap = ctl.speed_limit * dt;
        if biggest > cap {
            let a = cap / biggest;
            disp.iter_mut().for_each(|d| *d = *d * a);
        }
        if let Some(li) = loiter {
            let slow = ctl.loiter_fraction * ctl.cruise_speed * dt;
            for (i, d) in disp.iter_mut().enumerate() {
                if i != li {
                    *d = d.clamp_norm(slow);
                }
            }
        }
        self.separate(&mut disp);
        for (p, d) in self.pos.iter_mut().zip(disp) {
            *p += d;
        }
        Ok(())
    }

    /// Freeze drones whose step would bring a pair closer while already near.
    fn separate(&self, disp: &mut [Vec2]) {
        let near = 1.5 * self.sc.control.safety_radius;
        let n = self.pos.len();
        let leader = self.index_of(self.leader);
        // Drop the closing component first so crossing pairs can slide past.
        for i in 0..n {
            for j in (i + 1)..n {
                let now = distance(self.pos[i], self.pos[j]);
                let next = distance(self.pos[i] + disp[i], self.pos[j] + disp[j]);
                if next >= near || next >= now {
                    continue;
                }
                let Some(u) = (self.pos[j] - self.pos[i]).normalized() else {
                    continue;
                };
                let a = disp[i].dot(u);
                if a > 0.0 {
                    disp[i] -= u * a;
                }
                let b = disp[j].dot(u);
                if b < 0.0 {
                    disp[j] -= u * b;
                }
            }
        }
        loop {
            let mut froze = false;
            'pairs: for i in 0..n {
                for j in (i + 1)..n {
                    let now = distance(self.pos[i], self.pos[j]);
                    let next = distance(self.pos[i] + disp[i], self.pos[j] + disp[j]);
                    if next < near && next < now {
                        let k = if j == leader || disp[j] == Vec2::ZERO {
                            i
                        } else {
                            j
                        };
                        let k = if disp[k] == Vec2::ZERO { i + j - k } else { k };
                        if disp[k] == Vec2::ZERO {
                            continue;
                        }
                        disp[k] = Vec2::ZERO;
                        froze = true;
                        break 'pairs;
                    }
                }
            }
            if !froze {
                break;
            }
        }
    }

    /// Followers within one safety radius of an obstacle surface do not
    /// move closer to it this tick.
    #[allow(clippy::needless_range_loop)]
    fn emergency_stop(&mut self, before: &[Vec2]) {
        let r = self.sc.control.safety_radius;
        for i in 0..self.pos.len() {
            if self.ids[i] == self.leader || self.phase == Phase::Avoid {
                continue;
            }
            let closing = self.obstacles.iter().any(|o| {
                let now = distance(self.pos[i], o.center) - o.radius;
                now < r && now < distance(before[i], o.center) - o.radius
            });
            if closing {
                log::debug!("drone {} emergency stop", self.ids[i]);
                self.pos[i] = before[i];
            }
        }
    }

    fn record(&self, t: f64, flag: bool) -> Result<TickRecord> {
        let scene = self.scene()?;
        let m = self.mapping()?;
        let fe = registration::formation_error(&scene, &self.model_world, &m.assignment)?;
        let anchored: Vec<Vec2> = m
            .assignment
            .iter()
            .map(|&j| self.model_world.points()[j])
            .collect();
        let e_tps = registration::warp_energy(
            &scene,
            &PointSet::new(anchored)?,
            self.sc.control.lambda_metric,
        )?;
        let mut distances = Vec::new();
        for i in 0..self.ids.len() {
            for j in 0..i {
                distances.push((self.ids[i], self.ids[j], distance(self.pos[i], self.pos[j])));
            }
        }
        Ok(TickRecord {
            t,
            ids: self.ids.clone(),
            positions: self.pos.clone(),
            velocities: self.vel.clone(),
            roles: self
                .ids
                .iter()
                .map(|&id| {
                    if id == self.leader {
                        Role::Leader
                    } else {
                        Role::Follower
                    }
                })
                .collect(),
            energy: self.energy.clone(),
            flag_obs: flag,
            d_rms: fe.d_rms,
            e_tps,
            leader_id: self.leader,
            distances,
            danger_zone: if self.phase == Phase::Cruise && !flag {
                None
            } else {
                self.danger_zone
            },
            phase: self.phase,
        })
    }
}

struct Threat {
    obstacle: usize,
    center: Vec2,
    radius: f64,
    velocity: Vec2,
    meet: Vec2,
    danger: Circle,
}

/// Grid on the global lattice (cell corners at multiples of `cell`) covering
/// `pts` plus `margin` cells.
fn window(pts: &[Vec2], cell: f64, margin: i32) -> Result<GridSpec> {
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let c0 = math::floor(lo.x / cell) as i64 - margin as i64;
    let r0 = math::floor(lo.y / cell) as i64 - margin as i64;
    let c1 = math::floor(hi.x / cell) as i64 + margin as i64;
    let r1 = math::floor(hi.y / cell) as i64 + margin as i64;
    let w = c1 - c0 + 1;
    let hgt = r1 - r0 + 1;
    if w > 4096 || hgt > 4096 {
        return Err(Error::invalid(
            "cell_size",
            "planning window too large for the cell size",
        ));
    }
    GridSpec::new(
        cell,
        Vec2::new(c0 as f64 * cell, r0 as f64 * cell),
        w as i32,
        hgt as i32,
    )
}

/// Cells whose center lies within `radius + cell/2` of the segment `a`–`b`.
fn capsule_cells(spec: &GridSpec, a: Vec2, b: Vec2, radius: f64) -> BTreeSet<Cell> {
    let reach = radius + 0.5 * spec.cell_size;
    let mut out = BTreeSet::new();
    let ab = b - a;
    let len_sq = ab.norm_sq();
    for row in 0..spec.height {
        for col in 0..spec.width {
            let cell = Cell::new(col, row);
            let p = spec.cell_to_world(cell);
            let s = if len_sq > 0.0 {
                ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            if distance(p, a + ab * s) <= reach {
                out.insert(cell);
            }
        }
    }
    out
}

/// Start cell per drone: its own cell, or the nearest free unblocked one.
fn snap_cells(spec: &GridSpec, pos: &[Vec2], blocked: &BTreeSet<Cell>) -> Option<Vec<Cell>> {
    let mut taken = BTreeSet::new();
    let mut out = Vec::with_capacity(pos.len());
    for &p in pos {
        let home = spec.world_to_cell(p).ok()?;
        let mut best: Option<(f64, Cell)> = None;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let c = Cell::new(home.col + dc, home.row + dr);
                if !spec.contains(c) || blocked.contains(&c) || taken.contains(&c) {
                    continue;
                }
                let d = distance(spec.cell_to_world(c), p);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        let (_, c) = best?;
        taken.insert(c);
        out.push(c);
    }
    Some(out)
}

/// Grid move closest in direction to `v`.
fn nearest_move(v: Vec2) -> Move {
    let mut best = Move::Stay;
    let mut score = f64::NEG_INFINITY;
    for m in Move::ALL {
        let (dx, dy) = m.offset();
        if m == Move::Stay {
            continue;
        }
        let d = Vec2::new(dx as f64, dy as f64);
        let s = d.dot(v) / d.norm();
        if s > score {
            score = s;
            best = m;
        }
    }
    best
}

/// Rigid-translation plans: sidestep for a while, then fly forward. The best
/// half-population of these seeds the GA.
fn rigid_seeds(cfg: &GaConfig, problem: &PlanProblem<'_>, heading: Vec2) -> Vec<Chromosome> {
    let fwd = nearest_move(heading);
    let sides = [
        nearest_move(heading.perp()),
        nearest_move(-heading.perp()),
        nearest_move(heading + heading.perp()),
        nearest_move(heading - heading.perp()),
    ];
    let ids = problem.start.ids();
    let mut cands: Vec<(f64, Chromosome)> = Vec::new();
    for &s in &sides {
        for m in 0..=cfg.horizon {
            let moves: Vec<Move> = (0..cfg.horizon)
                .map(|k| if k < m { s } else { fwd })
                .collect();
            if let Ok(ch) = Chromosome::uniform(ids, &moves) {
                let f = ga::evaluate(cfg, &ch, problem);
                cands.push((f.scalar_cost, ch));
            }
        }
    }
    for rule in [SideRule::Away, SideRule::Left, SideRule::Right] {
        if let Ok(ch) = greedy_seed(cfg, problem, heading, rule) {
            let f = ga::evaluate(cfg, &ch, problem);
            cands.push((f.scalar_cost, ch));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    cands.dedup_by(|a, b| a.1 == b.1);
    cands.truncate(cfg.population_size / 2);
    cands.into_iter().map(|c| c.1).collect()
}

#[derive(Clone, Copy, Debug)]
enum SideRule {
    /// Each drone steps away from the obstacle's track; drones on it go right.
    Away,
    Left,
    Right,
}

/// Step-synchronous greedy plan: each drone flies forward while its lane to
/// the highest-disturbance line is clear, otherwise sidesteps, and stops once
/// past the line. Conflicts are resolved by moving the drone further ahead
/// down its list of alternatives.
fn greedy_seed(
    cfg: &GaConfig,
    problem: &PlanProblem<'_>,
    heading: Vec2,
    rule: SideRule,
) -> Result<Chromosome> {
    let start = problem.start;
    let spec = *start.spec();
    let line = problem.obstacle_center;
    let left = heading.perp();
    let fwd = nearest_move(heading);
    let past = |c: Cell| (spec.cell_to_world(c) - line).dot(heading) > crate::geometry::EPS_SIDE;
    let free = |c: Cell| spec.contains(c) && !start.is_blocked(c);
    let lane_clear = |mut c: Cell| {
        for _ in 0..(spec.width + spec.height) {
            if past(c) {
                return true;
            }
            c = crate::grid::offset_cell(c, fwd);
            if !free(c) {
                return false;
            }
        }
        false
    };
    let n = start.len();
    let sides: Vec<Vec2> = start
        .cells()
        .iter()
        .map(|&c0| {
            let lat = (spec.cell_to_world(c0) - line).dot(left);
            let go_left = match rule {
                SideRule::Away => lat > 0.25 * spec.cell_size,
                SideRule::Left => true,
                SideRule::Right => false,
            };
            if go_left {
                left
            } else {
                -left
            }
        })
        .collect();
    // rear drones first
    let along = |c: Cell| (spec.cell_to_world(c) - line).dot(heading);
    let mut state = start.clone();
    let mut genes: Vec<Vec<Move>> = alloc::vec![Vec::with_capacity(cfg.horizon); n];
    for _ in 0..cfg.horizon {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            along(state.cells()[a])
                .total_cmp(&along(state.cells()[b]))
                .then(a.cmp(&b))
        });
        let options: Vec<Vec<Move>> = (0..n)
            .map(|i| {
                let c = state.cells()[i];
                let side = nearest_move(sides[i]);
                let diag = nearest_move(heading + sides[i]);
                let mut list = Vec::with_capacity(10);
                if past(c) {
                    list.push(Move::Stay);
                } else {
                    let f = crate::grid::offset_cell(c, fwd);
                    if free(f) && lane_clear(f) {
                        list.push(fwd);
                    }
                    list.extend([diag, side, fwd, Move::Stay]);
                }
                for m in Move::ALL {
                    if !list.contains(&m) {
                        list.push(m);
                    }
                }
                list
            })
            .collect();
        let mut pick = alloc::vec![0usize; n];
        let chosen = loop {
            let moves: Vec<Move> = (0..n).map(|i| options[i][pick[i]]).collect();
            match state.step_ordered(&moves) {
                Ok(next) => break Some((moves, next)),
                Err(conflict) => {
                    let idx: Vec<usize> = conflict
                        .drones
                        .iter()
                        .filter_map(|id| start.ids().iter().position(|d| d == id))
                        .collect();
                    // the lowest-priority drone involved yields
                    let Some(&yield_i) = order.iter().rev().find(|i| idx.contains(i)) else {
                        break None;
                    };
                    pick[yield_i] += 1;
                    if pick[yield_i] >= options[yield_i].len() {
                        break None;
                    }
                }
            }
        };
        let Some((moves, next)) = chosen else {
            return Err(Error::InfeasiblePlan);
        };
        for (g, m) in genes.iter_mut().zip(moves) {
            g.push(m);
        }
        state = next;
    }
    let plans: Vec<(DroneId, Vec<Move>)> = start.ids().iter().copied().zip(genes).collect();
    Chromosome::from_plans(&plans)
}
