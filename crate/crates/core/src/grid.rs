//! Cellular-automata view of the plane.
//!
//! Each cell holds at most one drone. A drone's per-step rule is one of nine
//! moves (stay, four cardinal, four inter-cardinal) costing 0, 1 or 2
//! energy units. Rows grow along +y (north), columns along +x (east).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::geometry::{Circle, DroneId, Vec2, EPS_SIDE};
use crate::math;

/// Two drones whose interpolated paths come closer than this many cell
/// widths within one step are in conflict. Adjacent cells passing at a
/// right angle sit exactly on the bound and are allowed.
const MIN_PASS_CELLS: f64 = core::f64::consts::FRAC_1_SQRT_2 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cell_size: f64,
    pub origin: Vec2,
    pub width: i32,
    pub height: i32,
}

impl GridSpec {
    pub fn new(cell_size: f64, origin: Vec2, width: i32, height: i32) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::invalid("cell_size", "must be > 0"));
        }
        if width < 1 || height < 1 {
            return Err(Error::invalid("grid", "width and height must be >= 1"));
        }
        Ok(GridSpec {
            cell_size,
            origin,
            width,
            height,
        })
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.col >= 0 && c.row >= 0 && c.col < self.width && c.row < self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn index(&self, c: Cell) -> usize {
        c.row as usize * self.width as usize + c.col as usize
    }

    /// Center of `c` in world coordinates.
    pub fn cell_to_world(&self, c: Cell) -> Vec2 {
        self.origin
            + Vec2 {
                x: (c.col as f64 + 0.5) * self.cell_size,
                y: (c.row as f64 + 0.5) * self.cell_size,
            }
    }

    pub fn world_to_cell(&self, p: Vec2) -> Result<Cell> {
        let rel = (p - self.origin) / self.cell_size;
        let (cf, rf) = (math::floor(rel.x), math::floor(rel.y));
        if !(cf >= 0.0 && rf >= 0.0 && cf < self.width as f64 && rf < self.height as f64) {
            return Err(Error::OutOfBounds);
        }
        Ok(Cell {
            col: cf as i32,
            row: rf as i32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub const fn new(col: i32, row: i32) -> Self {
        Cell { col, row }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Stay,
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Move {
    pub const ALL: [Move; 9] = [
        Move::Stay,
        Move::N,
        Move::NE,
        Move::E,
        Move::SE,
        Move::S,
        Move::SW,
        Move::W,
        Move::NW,
    ];

    pub const fn offset(self) -> (i32, i32) {
        match self {
            Move::Stay => (0, 0),
            Move::N => (0, 1),
            Move::NE => (1, 1),
            Move::E => (1, 0),
            Move::SE => (1, -1),
            Move::S => (0, -1),
            Move::SW => (-1, -1),
            Move::W => (-1, 0),
            Move::NW => (-1, 1),
        }
    }

    pub const fn energy(self) -> u64 {
        match self {
            Move::Stay => 0,
            Move::N | Move::E | Move::S | Move::W => 1,
            Move::NE | Move::SE | Move::SW | Move::NW => 2,
        }
    }

    pub const fn opposite(self) -> Move {
        match self {
            Move::Stay => Move::Stay,
            Move::N => Move::S,
            Move::NE => Move::SW,
            Move::E => Move::W,
            Move::SE => Move::NW,
            Move::S => Move::N,
            Move::SW => Move::NE,
            Move::W => Move::E,
            Move::NW => Move::SE,
        }
    }

    pub const fn symbol(self) -> &'static str {
        match self {
            Move::Stay => "0",
            Move::N => "N",
            Move::NE => "NE",
            Move::E => "E",
            Move::SE => "SE",
            Move::S => "S",
            Move::SW => "SW",
            Move::W => "W",
            Move::NW => "NW",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Move> {
        Move::ALL
            .iter()
            .copied()
            .find(|m| m.symbol().eq_ignore_ascii_case(s) || (s == "Stay" && *m == Move::Stay))
    }
}

/// Cell reached by `m` from `c`; no bounds check.
pub fn offset_cell(c: Cell, m: Move) -> Cell {
    let (dc, dr) = m.offset();
    Cell {
        col: c.col + dc,
        row: c.row + dr,
    }
}

pub fn apply_move(spec: &GridSpec, c: Cell, m: Move) -> Result<Cell> {
    let next = offset_cell(c, m);
    if spec.contains(next) {
        Ok(next)
    } else {
        Err(Error::OutOfBounds)
    }
}

/// Cells whose center lies within `zone.radius + cell_size / 2` of the zone
/// center.
pub fn rasterize_blocked(spec: &GridSpec, zone: &Circle) -> BTreeSet<Cell> {
    let reach = zone.radius + 0.5 * spec.cell_size;
    let mut out = BTreeSet::new();
    let lo = (zone.center - Vec2 { x: reach, y: reach } - spec.origin) / spec.cell_size;
    let hi = (zone.center + Vec2 { x: reach, y: reach } - spec.origin) / spec.cell_size;
    let c0 = (math::floor(lo.x) as i64).max(0);
    let c1 = (math::ceil(hi.x) as i64).min(spec.width as i64 - 1);
    let r0 = (math::floor(lo.y) as i64).max(0);
    let r1 = (math::ceil(hi.y) as i64).min(spec.height as i64 - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let cell = Cell {
                col: col as i32,
                row: row as i32,
            };
            if (spec.cell_to_world(cell) - zone.center).norm() <= reach {
                out.insert(cell);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConflictKind {
    /// Two drones target the same cell.
    Vertex,
    /// Two drones swap or cross paths within one step.
    Crossing,
    Blocked,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub drones: Vec<DroneId>,
}

/// Occupancy snapshot. Drones are kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    spec: GridSpec,
    ids: Vec<DroneId>,
    cells: Vec<Cell>,
    energy: Vec<u64>,
    blocked: Vec<bool>,
}

impl GridState {
    pub fn new(
        spec: GridSpec,
        drones: impl IntoIterator<Item = (DroneId, Cell)>,
        blocked: impl IntoIterator<Item = Cell>,
    ) -> Result<Self> {
        let mut mask = alloc::vec![false; spec.cell_count()];
        for c in blocked {
            if spec.contains(c) {
                mask[spec.index(c)] = true;
            }
        }
        let sorted: BTreeMap<DroneId, Cell> = {
            let mut m = BTreeMap::new();
            for (id, c) in drones {
                if m.insert(id, c).is_some() {
                    return Err(Error::DuplicateDrone(id));
                }
            }
            m
        };
        let mut seen = BTreeSet::new();
        for (&id, &c) in &sorted {
            if !spec.contains(c) {
                return Err(Error::OutOfBounds);
            }
            if mask[spec.index(c)] {
                return Err(Error::invalid(
                    "drone_cells",
                    alloc::format!("drone {id} starts in a blocked cell {c}"),
                ));
            }
            if !seen.insert(c) {
                return Err(Error::invalid(
                    "drone_cells",
                    alloc::format!("two drones share cell {c}"),
                ));
            }
        }
        let n = sorted.len();
        Ok(GridState {
            spec,
            ids: sorted.keys().copied().collect(),
            cells: sorted.values().copied().collect(),
            energy: alloc::vec![0; n],
            blocked: mask,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn ids(&self) -> &[DroneId] {
        &self.ids
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn energies(&self) -> &[u64] {
        &self.energy
    }

    pub fn total_energy(&self) -> u64 {
        self.energy.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cell_of(&self, id: DroneId) -> Option<Cell> {
        self.ids.binary_search(&id).ok().map(|i| self.cells[i])
    }

    pub fn drone_cells(&self) -> BTreeMap<DroneId, Cell> {
        self.ids
            .iter()
            .copied()
            .zip(self.cells.iter().copied())
            .collect()
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.spec.contains(c) && self.blocked[self.spec.index(c)]
    }

    pub fn blocked_cells(&self) -> BTreeSet<Cell> {
        let mut out = BTreeSet::new();
        for row in 0..self.spec.height {
            for col in 0..self.spec.width {
                let c = Cell { col, row };
                if self.blocked[self.spec.index(c)] {
                    out.insert(c);
                }
            }
        }
        out
    }

    /// Synchronous step with moves keyed by drone id.
    pub fn step(
        &self,
        moves: &BTreeMap<DroneId, Move>,
    ) -> Result<core::result::Result<GridState, Conflict>> {
        let missing: Vec<DroneId> = self
            .ids
            .iter()
            .copied()
            .filter(|id| !moves.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingMove(missing));
        }
        if let Some(&extra) = moves.keys().find(|id| self.ids.binary_search(id).is_err()) {
            return Err(Error::UnknownDrone(extra));
        }
        let ordered: Vec<Move> = self.ids.iter().map(|id| moves[id]).collect();
        Ok(self.step_ordered(&ordered))
    }

    /// Synchronous step with `moves[i]` applied to the i-th drone in id order.
    pub fn step_ordered(&self, moves: &[Move]) -> core::result::Result<GridState, Conflict> {
        let mut next = self.clone();
        self.step_into(moves, &mut next)?;
        Ok(next)
    }

    /// Allocation-free step used by the planner: writes the successor into
    /// `out`, which must have been cloned from a state on the same grid with
    /// the same drones.
    #[allow(clippy::needless_range_loop)]
    pub fn step_into(
        &self,
        moves: &[Move],
        out: &mut GridState,
    ) -> core::result::Result<(), Conflict> {
        debug_assert_eq!(moves.len(), self.ids.len());
        let n = self.ids.len();
        for i in 0..n {
            let target = offset_cell(self.cells[i], moves[i]);
            if !self.spec.contains(target) {
                return Err(Conflict {
                    kind: ConflictKind::OutOfBounds,
                    drones: alloc::vec![self.ids[i]],
                });
            }
            if self.blocked[self.spec.index(target)] {
                return Err(Conflict {
                    kind: ConflictKind::Blocked,
                    drones: alloc::vec![self.ids[i]],
                });
            }
            out.cells[i] = target;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if out.cells[i] == out.cells[j] {
                    return Err(Conflict {
                        kind: ConflictKind::Vertex,
                        drones: alloc::vec![self.ids[i], self.ids[j]],
                    });
                }
                if paths_cross(self.cells[i], out.cells[i], self.cells[j], out.cells[j]) {
                    return Err(Conflict {
                        kind: ConflictKind::Crossing,
                        drones: alloc::vec![self.ids[i], self.ids[j]],
                    });
                }
            }
        }
        for i in 0..n {
            out.energy[i] = self.energy[i] + moves[i].energy();
        }
        Ok(())
    }

    /// All drones strictly past the line through `obstacle_center`
    /// perpendicular to `swarm_velocity`.
    pub fn is_highest_disturbance(
        &self,
        swarm_velocity: Vec2,
        obstacle_center: Vec2,
    ) -> Result<bool> {
        let dir = swarm_velocity.normalized().ok_or(Error::ZeroVelocity)?;
        Ok(self
            .cells
            .iter()
            .all(|&c| (self.spec.cell_to_world(c) - obstacle_center).dot(dir) > EPS_SIDE))
    }

    /// Total distance, in cells, the drones still need to cover along
    /// `swarm_velocity` to pass the line through `obstacle_center`.
    pub fn distance_to_hfd(&self, swarm_velocity: Vec2, obstacle_center: Vec2) -> f64 {
        let dir = swarm_velocity
            .normalized()
            .unwrap_or(Vec2 { x: 1.0, y: 0.0 });
        self.cells
            .iter()
            .map(|&c| {
                let along =
                    (self.spec.cell_to_world(c) - obstacle_center).dot(dir) / self.spec.cell_size;
                (0.5 - along).max(0.0)
            })
            .sum()
    }
}

/// Free function form of [`GridState::is_highest_disturbance`].
pub fn is_highest_disturbance(
    state: &GridState,
    swarm_velocity: Vec2,
    obstacle_center: Vec2,
) -> Result<bool> {
    state.is_highest_disturbance(swarm_velocity, obstacle_center)
}

/// Whether two drones moving in straight lines from `a0`→`a1` and `b0`→`b1`
/// over the same step pass closer than [`MIN_PASS_CELLS`].
fn paths_cross(a0: Cell, a1: Cell, b0: Cell, b1: Cell) -> bool {
    // relative position of b seen from a, in cell units, at start and end
    let p = ((b0.col - a0.col) as f64, (b0.row - a0.row) as f64);
    let q = ((b1.col - a1.col) as f64, (b1.row - a1.row) as f64);
    let d = (q.0 - p.0, q.1 - p.1);
    let dd = d.0 * d.0 + d.1 * d.1;
    let t = if dd == 0.0 {
        0.0
    } else {
        (-(p.0 * d.0 + p.1 * d.1) / dd).clamp(0.0, 1.0)
    };
    let (x, y) = (p.0 + t * d.0, p.1 + t * d.1);
    math::sqrt(x * x + y * y) < MIN_PASS_CELLS
}
