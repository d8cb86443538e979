//! Centroid-based point-set registration for re-formation.
//!
//! The disturbed swarm (scene) is matched to the golden formation (model) on
//! centroid-aligned coordinates. Correspondence comes from deterministic
//! annealing: Gaussian affinities at a falling temperature, balanced toward a
//! doubly-stochastic matrix by alternating row/column normalization, then
//! hardened to a permutation. The hardened permutation is finished with
//! negative-cycle cancellation so it is the exact minimum of the
//! sum-of-squared-distances objective.
//!
//! Formation quality is tracked as `d_rms`, the root-sum-square over drones
//! of the difference between the slot's distance to the model centroid and
//! the drone's distance to the scene centroid.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{DroneId, Vec2};
use crate::linalg;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec2>,
    labels: Vec<u32>,
}

impl PointSet {
    /// Points labelled `0..n`.
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        let labels = (0..points.len() as u32).collect();
        Self::labelled(points, labels)
    }

    pub fn labelled(points: Vec<Vec2>, labels: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid(
                "points",
                "a point set needs at least one point",
            ));
        }
        if labels.len() != points.len() {
            return Err(Error::invalid("labels", "one label per point"));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("labels", "labels must be unique"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(PointSet { points, labels })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn centered(&self) -> Vec<Vec2> {
        let c = centroid(self);
        self.points.iter().map(|&p| p - c).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// TPS regularization used for the reported energy; 0 means plain
    /// closest-point matching.
    pub lambda: f64,
    /// Starting temperature; defaults to the mean pairwise squared distance of
    /// the model.
    pub t_init: Option<f64>,
    /// Final temperature; defaults to `t_init / 500`.
    pub t_final: Option<f64>,
    pub anneal_rate: f64,
    /// Row/column normalization sweeps per temperature.
    pub max_iters: usize,
    /// Model slot whose occupant leads the swarm.
    pub leader_slot: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            lambda: 0.0,
            t_init: None,
            t_final: None,
            anneal_rate: 0.93,
            max_iters: 30,
            leader_slot: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", "must be >= 0"));
        }
        if !(self.anneal_rate > 0.0 && self.anneal_rate < 1.0) {
            return Err(Error::invalid("anneal_rate", "must lie in (0, 1)"));
        }
        if let (Some(ti), Some(tf)) = (self.t_init, self.t_final) {
            if !(ti > tf && tf > 0.0) {
                return Err(Error::invalid("t_final", "need t_init > t_final > 0"));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        Ok(())
    }

    fn schedule(&self, model: &[Vec2]) -> (f64, f64) {
        let t_init = self
            .t_init
            .unwrap_or_else(|| mean_pairwise_sq(model).max(1e-9));
        let t_final = self.t_final.unwrap_or(t_init / 500.0);
        (t_init, t_final)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingResult {
    /// `assignment[i]` is the model index matched to scene index `i`.
    pub assignment: Vec<usize>,
    /// Σ ‖x_i − v_σ(i)‖² on raw coordinates.
    pub total_cost: f64,
    pub e_tps: f64,
    /// Scene label placed in the leader slot.
    pub new_leader: DroneId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationError {
    pub centroid: Vec2,
    /// Per scene point, in scene order.
    pub deltas: Vec<f64>,
    pub d_rms: f64,
}

pub fn centroid(ps: &PointSet) -> Vec2 {
    let sum = ps.points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    sum / ps.points.len() as f64
}

fn mean_pairwise_sq(points: &[Vec2]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 1.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += (points[i] - points[j]).norm_sq();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

fn check_bijection(assignment: &[usize], n: usize) -> Result<()> {
    if assignment.len() != n {
        return Err(Error::SizeMismatch {
            scene: assignment.len(),
            model: n,
        });
    }
    let mut seen = alloc::vec![false; n];
    for &j in assignment {
        if j >= n || core::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid("assignment", "not a bijection"));
        }
    }
    Ok(())
}

pub fn assignment_cost(scene: &PointSet, model: &PointSet, assignment: &[usize]) -> f64 {
    scene
        .points
        .iter()
        .zip(assignment)
        .map(|(&x, &j)| (x - model.points[j]).norm_sq())
        .sum()
}

pub fn formation_error(
    scene: &PointSet,
    model: &PointSet,
    assignment: &[usize],
) -> Result<FormationError> {
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    check_bijection(assignment, model.len())?;
    let c_scene = centroid(scene);
    let c_model = centroid(model);
    let deltas: Vec<f64> = scene
        .points
        .iter()
        .zip(assignment)
        .map(|(&x, &j)| (model.points[j] - c_model).norm() - (x - c_scene).norm())
        .collect();
    let d_rms = math::sqrt(deltas.iter().map(|d| d * d).sum());
    Ok(FormationError {
        centroid: c_scene,
        deltas,
        d_rms,
    })
}

/// Thin-plate kernel r² ln r, zero at the origin.
fn kernel(r_sq: f64) -> f64 {
    if r_sq <= 0.0 {
        0.0
    } else {
        0.5 * r_sq * math::ln(r_sq)
    }
}

/// Planar thin-plate spline `f(p) = a0 + ax·p.x + ay·p.y + Σ w_j U(‖p − c_j‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsMap {
    controls: Vec<Vec2>,
    weights: Vec<Vec2>,
    a0: Vec2,
    ax: Vec2,
    ay: Vec2,
}

impl TpsMap {
    pub fn identity(controls: &[Vec2]) -> Self {
        Self::affine(
            controls,
            Vec2::ZERO,
            Vec2 { x: 1.0, y: 0.0 },
            Vec2 { x: 0.0, y: 1.0 },
        )
    }

    /// Purely affine map; `ax`/`ay` are the images of the unit axes.
    pub fn affine(controls: &[Vec2], a0: Vec2, ax: Vec2, ay: Vec2) -> Self {
        TpsMap {
            controls: controls.to_vec(),
            weights: alloc::vec![Vec2::ZERO; controls.len()],
            a0,
            ax,
            ay,
        }
    }

    /// Map with explicit kernel weights. Weights should satisfy Σw = 0 and
    /// Σ w·c = 0 for the bending energy to be finite.
    pub fn with_weights(
        controls: &[Vec2],
        weights: &[Vec2],
        a0: Vec2,
        ax: Vec2,
        ay: Vec2,
    ) -> Result<Self> {
        if controls.len() != weights.len() {
            return Err(Error::SizeMismatch {
                scene: weights.len(),
                model: controls.len(),
            });
        }
        Ok(TpsMap {
            controls: controls.to_vec(),
            weights: weights.to_vec(),
            a0,
            ax,
            ay,
        })
    }

    /// Regularized fit of `model[i] ↦ scene[i]` minimizing
    /// Σ‖x_i − f(v_i)‖² + λ·bending(f).
    pub fn fit(model: &[Vec2], scene: &[Vec2], lambda: f64) -> Result<Self> {
        if model.len() != scene.len() {
            return Err(Error::SizeMismatch {
                scene: scene.len(),
                model: model.len(),
            });
        }
        let n = model.len();
        if n < 3 {
            return Err(Error::DegenerateKernel);
        }
        let size = n + 3;
        let mut a = alloc::vec![0.0; size * size];
        let mut b = alloc::vec![0.0; size * 2];
        let reg = 8.0 * PI * lambda;
        for i in 0..n {
            for j in 0..n {
                a[i * size + j] =
                    kernel((model[i] - model[j]).norm_sq()) + if i == j { reg } else { 0.0 };
            }
            let p = [1.0, model[i].x, model[i].y];
            for (k, &pk) in p.iter().enumerate() {
                a[i * size + n + k] = pk;
                a[(n + k) * size + i] = pk;
            }
            b[i * 2] = scene[i].x;
            b[i * 2 + 1] = scene[i].y;
        }
        linalg::solve(&mut a, &mut b, size, 2)?;
        let at = |r: usize| Vec2 {
            x: b[r * 2],
            y: b[r * 2 + 1],
        };
        Ok(TpsMap {
            controls: model.to_vec(),
            weights: (0..n).map(at).collect(),
            a0: at(n),
            ax: Vec2 {
                x: b[(n + 1) * 2],
                y: b[(n + 1) * 2 + 1],
            },
            ay: Vec2 {
                x: b[(n + 2) * 2],
                y: b[(n + 2) * 2 + 1],
            },
        })
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let mut out = self.a0 + self.ax * p.x + self.ay * p.y;
        for (c, w) in self.controls.iter().zip(&self.weights) {
            out += *w * kernel((p - *c).norm_sq());
        }
        out
    }

    /// ∬ f_xx² + 2 f_xy² + f_yy² over the plane, summed over both output
    /// coordinates, in closed form: 8π Σ_ij w_i·w_j U(‖c_i − c_j‖).
    pub fn bending_energy(&self) -> f64 {
        let mut e = 0.0;
        for (i, ci) in self.controls.iter().enumerate() {
            for (j, cj) in self.controls.iter().enumerate() {
                e += self.weights[i].dot(self.weights[j]) * kernel((*ci - *cj).norm_sq());
            }
        }
        8.0 * PI * e
    }

    pub fn is_affine(&self) -> bool {
        self.weights.iter().all(|w| w.norm_sq() == 0.0)
    }
}

/// Σ‖x_i − f(v_i)‖² + λ·bending(f), with scene and model matched by index.
pub fn tps_energy(scene: &PointSet, model: &PointSet, f: &TpsMap, lambda: f64) -> Result<f64> {
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    let data: f64 = scene
        .points
        .iter()
        .zip(&model.points)
        .map(|(&x, &v)| (x - f.apply(v)).norm_sq())
        .sum();
    if lambda == 0.0 {
        return Ok(data);
    }
    Ok(data + lambda * f.bending_energy())
}

/// Energy of the best regularized warp from `model` onto `scene`
/// (index-matched) whose affine part is a pure translation:
/// min over `a0`, `w` of Σ‖x_i − v_i − a0 − Σ_j w_j U(‖v_i − v_j‖)‖² + λ·bending.
///
/// The model is placed with a fixed orientation, so rotation and scaling of
/// the swarm count as disturbance rather than being absorbed by an affine
/// fit. Kernel weights are confined to the subspace with finite bending
/// energy; with three or fewer points (or collinear points) that subspace is
/// empty and the result is the centroid-aligned squared residual.
pub fn warp_energy(scene: &PointSet, model: &PointSet, lambda: f64) -> Result<f64> {
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    let n = scene.len();
    let v = &model.points;
    let y: Vec<Vec2> = scene.points.iter().zip(v).map(|(&x, &m)| x - m).collect();
    let mean = y.iter().fold(Vec2::ZERO, |acc, &d| acc + d) / n as f64;
    let rigid: f64 = y.iter().map(|&d| (d - mean).norm_sq()).sum();

    let basis = null_space_of_affine(v);
    let m = basis.len();
    if m == 0 {
        return Ok(rigid);
    }
    let mut k = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = kernel((v[i] - v[j]).norm_sq());
        }
    }
    // Design matrix columns: constant, then K·N_c for each basis vector.
    let cols = m + 1;
    let mut design = alloc::vec![0.0; n * cols];
    for i in 0..n {
        design[i * cols] = 1.0;
        for (c, nc) in basis.iter().enumerate() {
            design[i * cols + c + 1] = (0..n).map(|j| k[i * n + j] * nc[j]).sum();
        }
    }
    // Bending Gram matrix Nᵀ K N.
    let mut bend = alloc::vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            bend[a * m + b] = (0..n).map(|i| basis[a][i] * design[i * cols + b + 1]).sum();
        }
    }
    let reg = 8.0 * PI * lambda;
    let mut g = alloc::vec![0.0; cols * cols];
    let mut rhs = alloc::vec![0.0; cols * 2];
    for a in 0..cols {
        for b in 0..cols {
            let mut s: f64 = (0..n)
                .map(|i| design[i * cols + a] * design[i * cols + b])
                .sum();
            if a > 0 && b > 0 {
                s += reg * bend[(a - 1) * m + (b - 1)];
            }
            g[a * cols + b] = s;
        }
        rhs[a * 2] = (0..n).map(|i| design[i * cols + a] * y[i].x).sum();
        rhs[a * 2 + 1] = (0..n).map(|i| design[i * cols + a] * y[i].y).sum();
    }
    if linalg::solve(&mut g, &mut rhs, cols, 2).is_err() {
        return Ok(rigid);
    }
    let mut e = 0.0;
    for coord in 0..2 {
        let theta: Vec<f64> = (0..cols).map(|a| rhs[a * 2 + coord]).collect();
        for i in 0..n {
            let fit: f64 = (0..cols).map(|a| design[i * cols + a] * theta[a]).sum();
            let target = if coord == 0 { y[i].x } else { y[i].y };
            e += (target - fit) * (target - fit);
        }
        for a in 0..m {
            for b in 0..m {
                e += reg * theta[a + 1] * bend[a * m + b] * theta[b + 1];
            }
        }
    }
    // The rigid residual is always attainable (w = 0); guard rounding.
    Ok(e.min(rigid))
}

/// Orthonormal basis of { w : Σ w_i = 0, Σ w_i v_i = 0 }.
fn null_space_of_affine(v: &[Vec2]) -> Vec<Vec<f64>> {
    let n = v.len();
    let mut span: Vec<Vec<f64>> = Vec::new();
    let push = |mut c: Vec<f64>, span: &mut Vec<Vec<f64>>| -> bool {
        let before = math::sqrt(c.iter().map(|x| x * x).sum());
        for b in span.iter() {
            let d: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in c.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let after = math::sqrt(c.iter().map(|x| x * x).sum());
        if after <= 1e-9 * before.max(1.0) {
            return false;
        }
        c.iter_mut().for_each(|x| *x /= after);
        span.push(c);
        true
    };
    push(alloc::vec![1.0; n], &mut span);
    push(v.iter().map(|p| p.x).collect(), &mut span);
    push(v.iter().map(|p| p.y).collect(), &mut span);
    if span.len() < 3 {
        // collinear or coincident: no finite-energy kernel directions
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = alloc::vec![0.0; n];
        e[i] = 1.0;
        if push(e, &mut span) {
            out.push(span.last().cloned().unwrap_or_default());
        }
        if span.len() == n {
            break;
        }
    }
    out
}

/// Soft correspondence by deterministic annealing on centroid-aligned sets.
/// Returns the row-major `n × n` match matrix at the final temperature.
pub fn softassign(
    scene: &PointSet,
    model: &PointSet,
    cfg: &RegistrationConfig,
) -> Result<Vec<f64>> {
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    cfg.validate()?;
    let n = scene.len();
    let xs = scene.centered();
    let vs = model.centered();
    let mut cost = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = (xs[i] - vs[j]).norm_sq();
        }
    }
    let (mut t, t_final) = cfg.schedule(&vs);
    // Log-domain potentials absorbed after every temperature keep the
    // affinities representable as the temperature falls.
    let mut f = alloc::vec![0.0; n];
    let mut g = alloc::vec![0.0; n];
    let mut m = alloc::vec![0.0; n * n];
    let mut a = alloc::vec![1.0; n];
    let mut b = alloc::vec![1.0; n];
    loop {
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = math::exp((f[i] + g[j] - cost[i * n + j]) / t);
            }
        }
        a.fill(1.0);
        b.fill(1.0);
        for _ in 0..cfg.max_iters {
            for i in 0..n {
                let s: f64 = (0..n).map(|j| m[i * n + j] * b[j]).sum();
                a[i] = if s > 0.0 { 1.0 / s } else { 1.0 };
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| m[i * n + j] * a[i]).sum();
                b[j] = if s > 0.0 { 1.0 / s } else { 1.0 };
            }
        }
        for i in 0..n {
            f[i] += t * math::ln(a[i]);
        }
        for j in 0..n {
            g[j] += t * math::ln(b[j]);
        }
        if t <= t_final {
            break;
        }
        t = (t * cfg.anneal_rate).max(t_final);
    }
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] *= a[i] * b[j];
        }
    }
    Ok(m)
}

/// Greedy row-maximum hardening: rows claim their best column in order of
/// confidence; a row whose column is taken falls back to its best free one.
pub fn harden(soft: &[f64], n: usize) -> Vec<usize> {
    let row_max = |i: usize| {
        (0..n)
            .map(|j| soft[i * n + j])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| row_max(b).total_cmp(&row_max(a)).then(a.cmp(&b)));
    let mut taken = alloc::vec![false; n];
    let mut out = alloc::vec![usize::MAX; n];
    for i in rows {
        let j = (0..n)
            .filter(|&j| !taken[j])
            .max_by(|&a, &b| soft[i * n + a].total_cmp(&soft[i * n + b]).then(b.cmp(&a)))
            .expect("a free column remains for every row");
        taken[j] = true;
        out[i] = j;
    }
    out
}

/// Cancel negative cycles in the reassignment graph until none remain,
/// which makes `assignment` a minimum-cost permutation for `cost`.
pub fn cancel_negative_cycles(cost: &[f64], n: usize, assignment: &mut [usize]) {
    let scale = cost
        .iter()
        .filter(|c| c.is_finite())
        .fold(0.0f64, |s, c| s.max(c.abs()))
        .max(1e-300);
    let eps = 1e-12 * scale;
    loop {
        let mut owner = alloc::vec![0usize; n];
        for (i, &j) in assignment.iter().enumerate() {
            owner[j] = i;
        }
        // Edge j -> k: the row sitting in column j moves to column k.
        let weight = |j: usize, k: usize| cost[owner[j] * n + k] - cost[owner[j] * n + j];
        let mut dist = alloc::vec![0.0f64; n];
        let mut pred = alloc::vec![usize::MAX; n];
        let mut last = None;
        for _ in 0..n {
            last = None;
            for j in 0..n {
                for k in 0..n {
                    if j == k {
                        continue;
                    }
                    let cand = dist[j] + weight(j, k);
                    if cand < dist[k] - eps {
                        dist[k] = cand;
                        pred[k] = j;
                        last = Some(k);
                    }
                }
            }
            if last.is_none() {
                break;
            }
        }
        let Some(mut v) = last else { return };
        for _ in 0..n {
            v = pred[v];
        }
        let mut cycle = alloc::vec![v];
        let mut u = pred[v];
        while u != v {
            cycle.push(u);
            u = pred[u];
        }
        cycle.reverse();
        // cycle[k] -> cycle[k+1] are edges; rows shift one column forward.
        let delta: f64 = (0..cycle.len())
            .map(|k| weight(cycle[k], cycle[(k + 1) % cycle.len()]))
            .sum();
        if delta >= -eps {
            return;
        }
        let moves: Vec<(usize, usize)> = (0..cycle.len())
            .map(|k| (owner[cycle[k]], cycle[(k + 1) % cycle.len()]))
            .collect();
        for (row, col) in moves {
            assignment[row] = col;
        }
    }
}

/// Scene → model correspondence, its cost and the elected leader.
pub fn map_scene_to_model(
    scene: &PointSet,
    model: &PointSet,
    cfg: &RegistrationConfig,
) -> Result<MappingResult> {
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    if cfg.leader_slot >= model.len() {
        return Err(Error::invalid("leader_slot", "outside the model"));
    }
    let n = scene.len();
    let soft = softassign(scene, model, cfg)?;
    let mut assignment = harden(&soft, n);
    let mut cost = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = (scene.points[i] - model.points[j]).norm_sq();
        }
    }
    cancel_negative_cycles(&cost, n, &mut assignment);
    let leader = elect_leader_index(scene, model, &mut assignment, cfg.leader_slot);

    let ordered_model: Vec<Vec2> = assignment.iter().map(|&j| model.points[j]).collect();
    let ordered = PointSet {
        points: ordered_model,
        labels: scene.labels.clone(),
    };
    let e_tps = warp_energy(scene, &ordered, cfg.lambda)?;
    Ok(MappingResult {
        total_cost: assignment_cost(scene, model, &assignment),
        assignment,
        e_tps,
        new_leader: scene.labels[leader],
    })
}

/// Minimum-cost assignment subject to scene index `who` taking `slot`.
pub fn pin_to_slot(
    scene: &PointSet,
    model: &PointSet,
    assignment: &mut [usize],
    who: usize,
    slot: usize,
) {
    let n = scene.len();
    if let Some(holder) = assignment.iter().position(|&j| j == slot) {
        assignment.swap(holder, who);
    }
    let mut cost = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = if (i == who) != (j == slot) {
                f64::INFINITY
            } else {
                (scene.points[i] - model.points[j]).norm_sq()
            };
        }
    }
    cancel_negative_cycles(&cost, n, assignment);
}

/// Resolve the leader slot's occupant, preferring the lowest label among
/// drones that can hold the slot in some minimum-cost assignment. May
/// rewrite `assignment`; returns the scene index of the leader.
fn elect_leader_index(
    scene: &PointSet,
    model: &PointSet,
    assignment: &mut [usize],
    leader_slot: usize,
) -> usize {
    let n = scene.len();
    let holder = assignment
        .iter()
        .position(|&j| j == leader_slot)
        .expect("bijection covers the leader slot");
    let base = assignment_cost(scene, model, assignment);
    let tol = 1e-9 * base.max(1.0);
    let mut best = holder;
    let mut best_assignment: Option<Vec<usize>> = None;
    for k in 0..n {
        if k == holder || scene.labels[k] >= scene.labels[best] {
            continue;
        }
        let mut trial = assignment.to_vec();
        pin_to_slot(scene, model, &mut trial, k, leader_slot);
        if assignment_cost(scene, model, &trial) <= base + tol {
            best = k;
            best_assignment = Some(trial);
        }
    }
    if let Some(a) = best_assignment {
        assignment.copy_from_slice(&a);
    }
    best
}

/// Drone in the model's leader slot under `mapping`, with the lowest id
/// winning exact ties.
pub fn elect_leader(
    scene: &PointSet,
    model: &PointSet,
    mapping: &MappingResult,
    leader_slot: usize,
) -> Result<DroneId> {
    check_bijection(&mapping.assignment, model.len())?;
    if scene.len() != model.len() {
        return Err(Error::SizeMismatch {
            scene: scene.len(),
            model: model.len(),
        });
    }
    let mut a = mapping.assignment.clone();
    let idx = elect_leader_index(scene, model, &mut a, leader_slot);
    Ok(scene.labels[idx])
}

/// Model slots placed rigidly in the world: centroid at `anchor`, body +x
/// axis along the unit vector `heading`.
pub fn anchor_model(model: &PointSet, anchor: Vec2, heading: Vec2) -> Vec<Vec2> {
    let c = centroid(model);
    model
        .points
        .iter()
        .map(|&v| anchor + (v - c).rotate_by(heading))
        .collect()
}

/// Per-drone world target: the anchored position of its assigned slot.
pub fn reformation_targets(
    scene: &PointSet,
    model: &PointSet,
    mapping: &MappingResult,
    anchor: Vec2,
    heading: Vec2,
) -> Result<Vec<(DroneId, Vec2)>> {
    check_bijection(&mapping.assignment, model.len())?;
    let slots = anchor_model(model, anchor, heading);
    Ok(scene
        .labels
        .iter()
        .zip(&mapping.assignment)
        .map(|(&id, &j)| (id, slots[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(pts: &[(f64, f64)]) -> PointSet {
        PointSet::new(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn centroid_examples() {
        let c = centroid(&ps(&[(0.0, 0.0), (2.0, 0.0), (1.0, 2.0)]));
        assert!(close(c.x, 1.0, 1e-15) && close(c.y, 2.0 / 3.0, 1e-15));
        assert_eq!(centroid(&ps(&[(3.0, -4.0)])), Vec2::new(3.0, -4.0));
        assert_eq!(
            centroid(&ps(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)])),
            Vec2::new(1.0, 1.0)
        );
    }

    #[test]
    fn point_set_validation() {
        assert!(PointSet::new(Vec::new()).is_err());
        assert!(
            PointSet::labelled(alloc::vec![Vec2::ZERO, Vec2::ZERO], alloc::vec![1, 1]).is_err()
        );
    }

    fn equilateral(side: f64) -> Vec<Vec2> {
        let h = side * math::sqrt(3.0) / 2.0;
        alloc::vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(side, 0.0),
            Vec2::new(side / 2.0, h)
        ]
    }

    #[test]
    fn formation_error_examples() {
        let model = PointSet::new(equilateral(2.0)).unwrap();
        let shifted = PointSet::new(
            equilateral(2.0)
                .into_iter()
                .map(|p| p + Vec2::new(7.0, -3.0))
                .collect(),
        )
        .unwrap();
        let e = formation_error(&shifted, &model, &[0, 1, 2]).unwrap();
        assert!(e.d_rms < 1e-12);

        // radial +1 on every drone keeps the centroid, each Δd = −1
        let c = centroid(&model);
        let pushed: Vec<Vec2> = model
            .points()
            .iter()
            .map(|&p| p + (p - c).normalized().unwrap())
            .collect();
        let e = formation_error(&PointSet::new(pushed).unwrap(), &model, &[0, 1, 2]).unwrap();
        assert!(close(e.d_rms, math::sqrt(3.0), 1e-12), "{}", e.d_rms);

        assert_eq!(
            formation_error(&model, &ps(&[(0.0, 0.0)]), &[0]).unwrap_err(),
            Error::SizeMismatch { scene: 3, model: 1 }
        );
    }

    /// One drone pulled radially by 1 m. Pulling moves the scene centroid
    /// too, so the oracle evaluates the definition directly: re-centre on the
    /// displaced set and compare per-drone centroid distances by hand.
    #[test]
    fn formation_error_single_displacement() {
        let model = equilateral(2.0);
        let c = (model[0] + model[1] + model[2]) / 3.0;
        let r = (model[0] - c).norm();
        let mut scene = model.clone();
        scene[2] = scene[2] + (scene[2] - c).normalized().unwrap();
        let c2 = (scene[0] + scene[1] + scene[2]) / 3.0;
        let by_hand: f64 = (0..3)
            .map(|i| (r - (scene[i] - c2).norm()).powi(2))
            .sum::<f64>()
            .sqrt();
        let e = formation_error(
            &PointSet::new(scene).unwrap(),
            &PointSet::new(model).unwrap(),
            &[0, 1, 2],
        )
        .unwrap();
        assert!(close(e.d_rms, by_hand, 1e-12));
        assert!(e.d_rms > 0.5);
    }

    #[test]
    fn tps_energy_examples() {
        let model = ps(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0), (5.0, 5.0)]);
        let id = TpsMap::identity(model.points());
        assert_eq!(tps_energy(&model, &model, &id, 0.0).unwrap(), 0.0);

        let scene = ps(&[(3.0, 4.0), (4.0, 0.0), (0.0, 3.0), (5.0, 5.0)]);
        assert_eq!(tps_energy(&scene, &model, &id, 0.0).unwrap(), 25.0);

        let t = TpsMap::affine(
            model.points(),
            Vec2::new(2.0, -1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        );
        let zero = tps_energy(&scene, &model, &t, 0.0).unwrap();
        assert_eq!(tps_energy(&scene, &model, &t, 3.5).unwrap(), zero);
        assert_eq!(t.bending_energy(), 0.0);
    }

    #[test]
    fn fit_recovers_affine_maps() {
        let model = [
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(0.0, 3.0),
            Vec2::new(5.0, 5.0),
            Vec2::new(2.0, 1.0),
        ];
        let scene: Vec<Vec2> = model
            .iter()
            .map(|p| p.rotate(0.4) * 1.7 + Vec2::new(3.0, -2.0))
            .collect();
        let f = TpsMap::fit(&model, &scene, 0.2).unwrap();
        assert!(f.bending_energy().abs() < 1e-9);
        for (v, x) in model.iter().zip(&scene) {
            assert!((f.apply(*v) - *x).norm() < 1e-9);
        }
        assert_eq!(
            TpsMap::fit(&model[..2], &scene[..2], 0.1),
            Err(Error::DegenerateKernel)
        );
        let line = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
        ];
        assert_eq!(TpsMap::fit(&line, &line, 0.0), Err(Error::DegenerateKernel));
    }

    #[test]
    fn warp_energy_properties() {
        let model = ps(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0), (5.0, 5.0), (2.0, -1.0)]);
        let moved = PointSet::new(
            model
                .points()
                .iter()
                .map(|&p| p + Vec2::new(3.0, 1.0))
                .collect(),
        )
        .unwrap();
        assert!(warp_energy(&moved, &model, 0.1).unwrap() < 1e-9);

        let turned =
            PointSet::new(model.points().iter().map(|&p| p.rotate(0.3)).collect()).unwrap();
        let rigid = {
            let c = centroid(&turned) - centroid(&model);
            turned
                .points()
                .iter()
                .zip(model.points())
                .map(|(&x, &v)| (x - v - c).norm_sq())
                .sum::<f64>()
        };
        let loose = warp_energy(&turned, &model, 0.01).unwrap();
        let stiff = warp_energy(&turned, &model, 1e6).unwrap();
        assert!(loose > 0.0 && loose < stiff && stiff <= rigid + 1e-9);
        assert!((stiff - rigid).abs() / rigid < 1e-3);

        // three points: nothing but the translation is free
        let tri = ps(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        let bent = ps(&[(1.0, 0.0), (4.0, 1.0), (0.0, 3.0)]);
        let c = centroid(&bent) - centroid(&tri);
        let rigid: f64 = bent
            .points()
            .iter()
            .zip(tri.points())
            .map(|(&x, &v)| (x - v - c).norm_sq())
            .sum();
        assert!((warp_energy(&bent, &tri, 0.1).unwrap() - rigid).abs() < 1e-12);
    }

    #[test]
    fn mapping_examples() {
        let cfg = RegistrationConfig::default();
        let model = ps(&[(0.0, 0.0), (-3.0, 3.0), (-3.0, -3.0), (-6.0, 6.0)]);
        let m = map_scene_to_model(&model, &model, &cfg).unwrap();
        assert_eq!(m.assignment, [0, 1, 2, 3]);
        assert_eq!(m.total_cost, 0.0);
        assert_eq!(m.new_leader, 0);

        let swapped = ps(&[(0.0, 0.0), (-3.0, -3.0), (-3.0, 3.0), (-6.0, 6.0)]);
        let m = map_scene_to_model(&swapped, &model, &cfg).unwrap();
        assert_eq!(m.assignment, [0, 2, 1, 3]);
        assert_eq!(m.total_cost, 0.0);

        assert_eq!(
            map_scene_to_model(&swapped, &ps(&[(0.0, 0.0)]), &cfg).unwrap_err(),
            Error::SizeMismatch { scene: 4, model: 1 }
        );
    }

    #[test]
    fn leader_tie_goes_to_lowest_id() {
        let model = ps(&[(0.0, 0.0), (-2.0, -2.0), (2.0, -2.0)]);
        let scene = PointSet::labelled(
            alloc::vec![
                Vec2::new(-1.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, -4.0)
            ],
            alloc::vec![5, 3, 7],
        )
        .unwrap();
        let m = map_scene_to_model(&scene, &model, &RegistrationConfig::default()).unwrap();
        assert_eq!(m.total_cost, 14.0);
        assert_eq!(m.new_leader, 3);
        assert_eq!(elect_leader(&scene, &model, &m, 0).unwrap(), 3);
    }

    #[test]
    fn targets_follow_heading() {
        let model = ps(&[(0.0, 0.0), (-2.0, 2.0), (-2.0, -2.0)]);
        let c = centroid(&model);
        let m = map_scene_to_model(&model, &model, &RegistrationConfig::default()).unwrap();
        let anchor = Vec2::new(10.0, 0.0);
        let north = Vec2::new(0.0, 1.0);
        let t = reformation_targets(&model, &model, &m, anchor, north).unwrap();
        // apex offset from the centroid is (4/3, 0); a quarter turn maps it to (0, 4/3)
        let apex = t[0].1;
        assert!(close(apex.x, 10.0, 1e-12) && close(apex.y, (model.points()[0] - c).x, 1e-12));
        // untouched formation: targets are the drones shifted by anchor − centroid
        let east = Vec2::new(1.0, 0.0);
        let t = reformation_targets(&model, &model, &m, c + Vec2::new(0.5, 0.0), east).unwrap();
        for ((_, target), p) in t.iter().zip(model.points()) {
            assert!((*target - (*p + Vec2::new(0.5, 0.0))).norm() < 1e-12);
        }
    }

    #[test]
    fn negative_cycles_are_cancelled() {
        // 3-cycle improvement that no single swap finds
        let cost = [
            5.0, 0.0, 9.0, //
            9.0, 5.0, 0.0, //
            0.0, 9.0, 5.0,
        ];
        let mut a = alloc::vec![0, 1, 2];
        cancel_negative_cycles(&cost, 3, &mut a);
        assert_eq!(a, [1, 2, 0]);
    }
}
