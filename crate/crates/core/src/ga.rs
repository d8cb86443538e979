//! Genetic search over per-drone CA rule sequences.
//!
//! A chromosome holds one move per drone per step for a fixed horizon. A plan
//! is feasible when it reaches the highest-disturbance state (every drone
//! past the obstacle line) without a grid conflict; its cost is a weighted
//! sum of steps taken and CA energy spent up to that point. The loop is
//! elitism + tournament selection + per-gene resampling. There is no
//! crossover.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{DroneId, Vec2};
use crate::grid::{GridState, Move};

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub horizon: usize,
    pub generations: usize,
    /// Probability that a gene is resampled when a child is bred.
    pub mutation_rate: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub w_t: f64,
    pub w_e: f64,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 100,
            horizon: 8,
            generations: 60,
            mutation_rate: 0.08,
            elite_count: 4,
            tournament_size: 3,
            w_t: 10.0,
            w_e: 1.0,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if self.elite_count < 1 || self.population_size < self.elite_count {
            return Err(Error::invalid(
                "elite_count",
                "need population_size >= elite_count >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::invalid("mutation_rate", "must lie in [0, 1]"));
        }
        if self.tournament_size < 1 {
            return Err(Error::invalid("tournament_size", "must be >= 1"));
        }
        if !(self.w_t > 0.0 && self.w_e > 0.0) {
            return Err(Error::invalid("w_t", "time and energy weights must be > 0"));
        }
        Ok(())
    }

    /// Default horizon: one and a half times the cells the rearmost drone
    /// must cover to pass the obstacle line, at least one step.
    pub fn horizon_for(cells_to_clear: f64) -> usize {
        let h = crate::math::ceil(1.5 * cells_to_clear.max(1.0));
        (h as usize).max(1)
    }
}

/// Move plan for every drone over the horizon. Genes are step-major:
/// `genes[step * n + k]` is the move of the k-th drone (id order) at `step`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    ids: Vec<DroneId>,
    genes: Vec<Move>,
}

impl Chromosome {
    /// Build from per-drone sequences, all of length H ≥ 1.
    pub fn from_plans(plans: &[(DroneId, Vec<Move>)]) -> Result<Self> {
        let mut sorted: Vec<&(DroneId, Vec<Move>)> = plans.iter().collect();
        sorted.sort_by_key(|p| p.0);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("plan", "duplicate drone id"));
        }
        let horizon = sorted.first().map(|p| p.1.len()).unwrap_or(0);
        if horizon == 0 || sorted.iter().any(|p| p.1.len() != horizon) {
            return Err(Error::invalid(
                "plan",
                "all sequences need the same length >= 1",
            ));
        }
        let n = sorted.len();
        let mut genes = alloc::vec![Move::Stay; n * horizon];
        for (k, (_, seq)) in sorted.iter().enumerate() {
            for (step, &m) in seq.iter().enumerate() {
                genes[step * n + k] = m;
            }
        }
        Ok(Chromosome {
            ids: sorted.iter().map(|p| p.0).collect(),
            genes,
        })
    }

    pub fn ids(&self) -> &[DroneId] {
        &self.ids
    }

    /// Every drone performs `moves[step]` at each step, so the formation
    /// translates rigidly.
    pub fn uniform(ids: &[DroneId], moves: &[Move]) -> Result<Self> {
        let plans: Vec<(DroneId, Vec<Move>)> = ids.iter().map(|&id| (id, moves.to_vec())).collect();
        Self::from_plans(&plans)
    }

    pub fn horizon(&self) -> usize {
        self.genes.len() / self.ids.len().max(1)
    }

    pub fn step_moves(&self, step: usize) -> &[Move] {
        let n = self.ids.len();
        &self.genes[step * n..(step + 1) * n]
    }

    /// The move sequence of one drone.
    pub fn plan(&self, id: DroneId) -> Option<Vec<Move>> {
        let k = self.ids.iter().position(|&d| d == id)?;
        Some((0..self.horizon()).map(|s| self.step_moves(s)[k]).collect())
    }

    pub fn genes(&self) -> &[Move] {
        &self.genes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub feasible: bool,
    /// First step (1-based) at which the highest-disturbance state holds, or
    /// H + 1 when it is never reached.
    pub steps_to_hfd: usize,
    pub total_energy: u64,
    pub scalar_cost: f64,
}

/// Scalar cost of a feasible plan.
pub fn feasible_cost(cfg: &GaConfig, steps: usize, energy: u64) -> f64 {
    cfg.w_t * steps as f64 + cfg.w_e * energy as f64
}

/// Infeasible plans rank after every feasible one, ordered first by how late
/// the first conflict happened and then by distance left to the line.
fn infeasible_cost(
    cfg: &GaConfig,
    n: usize,
    conflict_step: usize,
    distance: f64,
    max_distance: f64,
) -> f64 {
    let h = cfg.horizon;
    let ceiling = feasible_cost(cfg, h, 2 * (n * h) as u64) + 1.0;
    ceiling + (h + 1 - conflict_step) as f64 * (max_distance + 1.0) + distance
}

/// Problem instance the planner searches over.
#[derive(Debug, Clone)]
pub struct PlanProblem<'a> {
    pub start: &'a GridState,
    pub swarm_velocity: Vec2,
    pub obstacle_center: Vec2,
}

impl PlanProblem<'_> {
    fn max_distance(&self) -> f64 {
        let s = self.start.spec();
        self.start.len() as f64 * ((s.width + s.height) as f64 + 1.0)
    }
}

/// Scratch buffers reused across evaluations.
struct Evaluator {
    a: GridState,
    b: GridState,
}

impl Evaluator {
    fn new(start: &GridState) -> Self {
        Evaluator {
            a: start.clone(),
            b: start.clone(),
        }
    }

    fn run(&mut self, cfg: &GaConfig, ch: &Chromosome, p: &PlanProblem<'_>) -> Fitness {
        let n = p.start.len();
        let horizon = ch.horizon();
        self.a.clone_from(p.start);
        self.b.clone_from(p.start);
        for step in 0..horizon {
            if self.a.step_into(ch.step_moves(step), &mut self.b).is_err() {
                let dist = self.a.distance_to_hfd(p.swarm_velocity, p.obstacle_center);
                return Fitness {
                    feasible: false,
                    steps_to_hfd: horizon + 1,
                    total_energy: self.a.total_energy(),
                    scalar_cost: infeasible_cost(cfg, n, step + 1, dist, p.max_distance()),
                };
            }
            core::mem::swap(&mut self.a, &mut self.b);
            if self
                .a
                .is_highest_disturbance(p.swarm_velocity, p.obstacle_center)
                .unwrap_or(false)
            {
                let energy = self.a.total_energy();
                return Fitness {
                    feasible: true,
                    steps_to_hfd: step + 1,
                    total_energy: energy,
                    scalar_cost: feasible_cost(cfg, step + 1, energy),
                };
            }
        }
        let dist = self.a.distance_to_hfd(p.swarm_velocity, p.obstacle_center);
        Fitness {
            feasible: false,
            steps_to_hfd: horizon + 1,
            total_energy: self.a.total_energy(),
            scalar_cost: infeasible_cost(cfg, n, horizon + 1, dist, p.max_distance()),
        }
    }
}

/// Simulate `ch` from the start state and score it.
pub fn evaluate(cfg: &GaConfig, ch: &Chromosome, problem: &PlanProblem<'_>) -> Fitness {
    Evaluator::new(problem.start).run(cfg, ch, problem)
}

fn random_chromosome(rng: &mut ChaCha8Rng, ids: &[DroneId], horizon: usize) -> Chromosome {
    let genes = (0..ids.len() * horizon)
        .map(|_| Move::ALL[rng.random_range(0..9)])
        .collect();
    Chromosome {
        ids: ids.to_vec(),
        genes,
    }
}

/// `population_size` uniformly random chromosomes, reproducible under the seed.
pub fn init_population(cfg: &GaConfig, ids: &[DroneId]) -> Vec<Chromosome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    init_with(&mut rng, cfg, ids)
}

fn init_with(rng: &mut ChaCha8Rng, cfg: &GaConfig, ids: &[DroneId]) -> Vec<Chromosome> {
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    (0..cfg.population_size)
        .map(|_| random_chromosome(rng, &ids, cfg.horizon))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub best: Chromosome,
    pub fitness: Fitness,
    /// Best-ever cost after initialization and after each generation.
    pub best_cost_history: Vec<f64>,
}

/// Run the GA. Fails with [`Error::NoFeasiblePlan`] when no evaluated plan
/// reached the highest-disturbance state conflict-free.
pub fn evolve(cfg: &GaConfig, problem: &PlanProblem<'_>) -> Result<Evolution> {
    let evo = evolve_best_effort(cfg, problem)?;
    if evo.fitness.feasible {
        Ok(evo)
    } else {
        Err(Error::NoFeasiblePlan)
    }
}

/// Like [`evolve`] but returns the best chromosome even when infeasible.
pub fn evolve_best_effort(cfg: &GaConfig, problem: &PlanProblem<'_>) -> Result<Evolution> {
    evolve_seeded(cfg, problem, &[])
}

/// [`evolve_best_effort`] with `seeds` replacing the first members of the
/// random initial population.
pub fn evolve_seeded(
    cfg: &GaConfig,
    problem: &PlanProblem<'_>,
    seeds: &[Chromosome],
) -> Result<Evolution> {
    cfg.validate()?;
    if problem.start.is_empty() {
        return Err(Error::invalid("drones", "at least one drone is required"));
    }
    for s in seeds {
        if s.ids != problem.start.ids() || s.horizon() != cfg.horizon {
            return Err(Error::invalid(
                "seeds",
                "seed chromosome does not match the drones or horizon",
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut eval = Evaluator::new(problem.start);
    let mut pop = init_with(&mut rng, cfg, problem.start.ids());
    for (slot, s) in pop.iter_mut().zip(seeds) {
        slot.clone_from(s);
    }
    let mut scores: Vec<Fitness> = pop.iter().map(|c| eval.run(cfg, c, problem)).collect();

    let mut order: Vec<usize> = (0..pop.len()).collect();
    rank(&mut order, &scores);
    let mut best = pop[order[0]].clone();
    let mut best_fit = scores[order[0]];
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(best_fit.scalar_cost);

    let n_genes = pop[0].genes.len();
    for _ in 0..cfg.generations {
        // Breed the whole next generation before scoring any of it so the
        // random stream does not depend on evaluation order.
        let mut next: Vec<Chromosome> = order[..cfg.elite_count]
            .iter()
            .map(|&i| pop[i].clone())
            .collect();
        while next.len() < cfg.population_size {
            let parent = tournament(&mut rng, cfg.tournament_size, &scores);
            let mut child = pop[parent].clone();
            for g in 0..n_genes {
                if rng.random_bool(cfg.mutation_rate) {
                    child.genes[g] = Move::ALL[rng.random_range(0..9)];
                }
            }
            next.push(child);
        }
        pop = next;
        scores = pop.iter().map(|c| eval.run(cfg, c, problem)).collect();
        order.clear();
        order.extend(0..pop.len());
        rank(&mut order, &scores);
        let top = order[0];
        if scores[top].scalar_cost < best_fit.scalar_cost {
            best = pop[top].clone();
            best_fit = scores[top];
        }
        history.push(best_fit.scalar_cost);
    }
    Ok(Evolution {
        best,
        fitness: best_fit,
        best_cost_history: history,
    })
}

fn rank(order: &mut [usize], scores: &[Fitness]) {
    order.sort_by(|&a, &b| {
        scores[a]
            .scalar_cost
            .total_cmp(&scores[b].scalar_cost)
            .then(a.cmp(&b))
    });
}

fn tournament(rng: &mut ChaCha8Rng, size: usize, scores: &[Fitness]) -> usize {
    let mut winner = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        let better = scores[c]
            .scalar_cost
            .total_cmp(&scores[winner].scalar_cost)
            .then(c.cmp(&winner))
            .is_lt();
        if better {
            winner = c;
        }
    }
    winner
}

/// Drone id and world-space cell-center target.
pub type Waypoints = Vec<(DroneId, Vec2)>;

/// Per-step world waypoints of a feasible plan, truncated at the
/// highest-disturbance step.
pub fn plan_to_tshape(
    cfg: &GaConfig,
    ch: &Chromosome,
    problem: &PlanProblem<'_>,
) -> Result<Vec<Waypoints>> {
    let fit = evaluate(cfg, ch, problem);
    if !fit.feasible {
        return Err(Error::InfeasiblePlan);
    }
    let spec = *problem.start.spec();
    let mut state = problem.start.clone();
    let mut out = Vec::with_capacity(fit.steps_to_hfd);
    for step in 0..fit.steps_to_hfd {
        state = state
            .step_ordered(ch.step_moves(step))
            .map_err(|_| Error::InfeasiblePlan)?;
        out.push(
            state
                .ids()
                .iter()
                .zip(state.cells())
                .map(|(&id, &c)| (id, spec.cell_to_world(c)))
                .collect(),
        );
    }
    Ok(out)
}
