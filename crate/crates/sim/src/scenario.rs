//! TOML scenario files.
//!
//! Every section except `formation`, `drones` and the top-level mission
//! fields is optional and falls back to the library defaults. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use swarm_core::ga::GaConfig;
use swarm_core::registration::RegistrationConfig;
use swarm_core::sensing::ObstacleTruth;
use swarm_core::sim::{ControlConfig, GridConfig, Mode, Scenario};
use swarm_core::{DroneId, Vec2};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field for validation failures.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl From<swarm_core::Error> for ScenarioError {
    fn from(e: swarm_core::Error) -> Self {
        match e {
            swarm_core::Error::Invalid { field, reason } => ScenarioError::invalid(field, reason),
            other => ScenarioError::invalid("scenario", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Cpsr,
    UniqueLeader,
    NoObstacle,
}

impl From<ModeName> for Mode {
    fn from(m: ModeName) -> Mode {
        match m {
            ModeName::Cpsr => Mode::Cpsr,
            ModeName::UniqueLeader => Mode::UniqueLeader,
            ModeName::NoObstacle => Mode::NoObstacle,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub mode: ModeName,
    pub seed: u64,
    pub tick_dt: f64,
    pub max_ticks: usize,
    pub detection_range: f64,
    pub destination: [f64; 2],
    pub formation: FormationSection,
    pub drones: Vec<DroneEntry>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleEntry>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub ga: GaSection,
    #[serde(default)]
    pub registration: RegistrationSection,
    #[serde(default)]
    pub control: ControlSection,
    /// Path (relative to this file) of the eight-drone companion scenario.
    #[serde(default)]
    pub eight_drone_variant: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    /// Slots in the body frame; +x points along the mission heading.
    pub slots: Vec<[f64; 2]>,
    #[serde(default)]
    pub leader_slot: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneEntry {
    pub id: DroneId,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleEntry {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub cell_size: f64,
    pub window_margin: i32,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridConfig::default();
        GridSection {
            cell_size: g.cell_size,
            window_margin: g.window_margin,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaSection {
    pub population_size: usize,
    pub horizon: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub w_t: f64,
    pub w_e: f64,
}

impl Default for GaSection {
    fn default() -> Self {
        let g = GaConfig::default();
        GaSection {
            population_size: g.population_size,
            horizon: g.horizon,
            generations: g.generations,
            mutation_rate: g.mutation_rate,
            elite_count: g.elite_count,
            tournament_size: g.tournament_size,
            w_t: g.w_t,
            w_e: g.w_e,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationSection {
    pub lambda: f64,
    pub t_init: Option<f64>,
    pub t_final: Option<f64>,
    pub anneal_rate: f64,
    pub max_iters: usize,
}

impl Default for RegistrationSection {
    fn default() -> Self {
        let r = RegistrationConfig::default();
        RegistrationSection {
            lambda: r.lambda,
            t_init: r.t_init,
            t_final: r.t_final,
            anneal_rate: r.anneal_rate,
            max_iters: r.max_iters,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub cruise_speed: f64,
    pub speed_limit: f64,
    pub gain: f64,
    pub loiter_fraction: f64,
    pub leader_tolerance: f64,
    pub lambda_metric: f64,
    pub safety_radius: f64,
    pub safety_margin: f64,
    pub plan_trigger_distance: f64,
    pub arrival_radius: Option<f64>,
    pub reform_fraction: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ControlConfig::default();
        ControlSection {
            cruise_speed: c.cruise_speed,
            speed_limit: c.speed_limit,
            gain: c.gain,
            loiter_fraction: c.loiter_fraction,
            leader_tolerance: c.leader_tolerance,
            lambda_metric: c.lambda_metric,
            safety_radius: c.safety_radius,
            safety_margin: c.safety_margin,
            plan_trigger_distance: c.plan_trigger_distance,
            arrival_radius: c.arrival_radius,
            reform_fraction: c.reform_fraction,
        }
    }
}

fn vec2(field: &str, p: [f64; 2]) -> Result<Vec2, ScenarioError> {
    Vec2::try_new(p[0], p[1])
        .map_err(|_| ScenarioError::invalid(field, "coordinates must be finite"))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Schema(file.schema_version));
        }
        Ok(file)
    }

    /// Build and validate the library scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ScenarioError> {
        let drones = self
            .drones
            .iter()
            .map(|d| Ok((d.id, vec2("drones.position", d.position)?)))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let formation = self
            .formation
            .slots
            .iter()
            .map(|&s| vec2("formation.slots", s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for o in &self.obstacles {
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(ScenarioError::invalid(
                    "obstacles.radius",
                    "must be a finite number > 0",
                ));
            }
            let center = vec2("obstacles.center", o.center)?;
            let velocity = vec2("obstacles.velocity", o.velocity)?;
            obstacles.push(ObstacleTruth::new(center, o.radius, velocity)?);
        }
        let sc = Scenario {
            drones,
            formation,
            leader_slot: self.formation.leader_slot,
            obstacles,
            destination: vec2("destination", self.destination)?,
            detection_range: self.detection_range,
            tick_dt: self.tick_dt,
            mode: self.mode.into(),
            grid: GridConfig {
                cell_size: self.grid.cell_size,
                window_margin: self.grid.window_margin,
            },
            ga: GaConfig {
                population_size: self.ga.population_size,
                horizon: self.ga.horizon,
                generations: self.ga.generations,
                mutation_rate: self.ga.mutation_rate,
                elite_count: self.ga.elite_count,
                tournament_size: self.ga.tournament_size,
                w_t: self.ga.w_t,
                w_e: self.ga.w_e,
                rng_seed: self.seed,
            },
            registration: RegistrationConfig {
                lambda: self.registration.lambda,
                t_init: self.registration.t_init,
                t_final: self.registration.t_final,
                anneal_rate: self.registration.anneal_rate,
                max_iters: self.registration.max_iters,
                leader_slot: self.formation.leader_slot,
            },
            control: ControlConfig {
                cruise_speed: self.control.cruise_speed,
                speed_limit: self.control.speed_limit,
                gain: self.control.gain,
                loiter_fraction: self.control.loiter_fraction,
                leader_tolerance: self.control.leader_tolerance,
                lambda_metric: self.control.lambda_metric,
                safety_radius: self.control.safety_radius,
                safety_margin: self.control.safety_margin,
                plan_trigger_distance: self.control.plan_trigger_distance,
                arrival_radius: self.control.arrival_radius,
                reform_fraction: self.control.reform_fraction,
            },
            rng_seed: self.seed,
            max_ticks: self.max_ticks,
        };
        sc.validate()?;
        sc.ga.validate()?;
        sc.registration.validate()?;
        Ok(sc)
    }
}

/// A scenario file together with where it was loaded from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub file: ScenarioFile,
    pub scenario: Scenario,
}

impl Loaded {
    /// Resolve the eight-drone companion, if the file declares one.
    pub fn eight_drone(&self) -> Result<Option<Loaded>, ScenarioError> {
        let Some(rel) = &self.file.eight_drone_variant else {
            return Ok(None);
        };
        let base = self.path.parent().unwrap_or(Path::new("."));
        load(&base.join(rel)).map(Some)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.file.seed = seed;
        self.scenario.rng_seed = seed;
        self.scenario.ga.rng_seed = seed;
        self
    }
}

pub fn load(path: &Path) -> Result<Loaded, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = ScenarioFile::parse(&text)?;
    let scenario = file.to_scenario()?;
    Ok(Loaded {
        path: path.to_path_buf(),
        file,
        scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 3
tick_dt = 0.1
max_ticks = 100
detection_range = 20.0
destination = [50.0, 0.0]

[formation]
slots = [[0.0, 0.0], [-4.0, 3.0]]

[[drones]]
id = 1
position = [0.0, 0.0]

[[drones]]
id = 2
position = [-4.0, 3.0]
"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let sc = ScenarioFile::parse(MINIMAL).unwrap().to_scenario().unwrap();
        assert_eq!(sc.mode, Mode::Cpsr);
        assert_eq!(sc.ga.population_size, GaConfig::default().population_size);
        assert_eq!(
            sc.control.cruise_speed,
            ControlConfig::default().cruise_speed
        );
        assert!(sc.obstacles.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("seed = 3", "seed = 3\ncolour = \"red\"");
        assert!(matches!(
            ScenarioFile::parse(&text),
            Err(ScenarioError::Parse(_))
        ));
        let text = format!("{MINIMAL}\n[control]\ngian = 0.3\n");
        assert!(matches!(
            ScenarioFile::parse(&text),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn bad_values_name_their_field() {
        let text = MINIMAL.replace("tick_dt = 0.1", "tick_dt = 0.0");
        let err = ScenarioFile::parse(&text)
            .unwrap()
            .to_scenario()
            .unwrap_err();
        assert_eq!(err.field(), Some("tick_dt"));
        assert!(err.to_string().contains("tick_dt"));

        let text = format!("{MINIMAL}\n[[obstacles]]\ncenter = [10.0, 0.0]\nradius = -1.0\n");
        let err = ScenarioFile::parse(&text)
            .unwrap()
            .to_scenario()
            .unwrap_err();
        assert_eq!(err.field(), Some("obstacles.radius"));
    }

    #[test]
    fn schema_version_is_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(
            ScenarioFile::parse(&text),
            Err(ScenarioError::Schema(2))
        ));
    }
}
