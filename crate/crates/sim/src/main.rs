use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use swarm_core::sim::{self, Mode, Outcome};
use swarm_sim::scenario::{self, Loaded};
use swarm_sim::{compare, oracle, output};

/// Leader-follower drone swarm simulator.
///
/// Logging is controlled by the SWARM_LOG environment variable
/// (e.g. SWARM_LOG=info).
#[derive(Parser)]
#[command(name = "swarm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    ///
    /// Exit status: 0 arrived, 1 invalid input, 2 timeout, 3 collision fault.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run every mode with the same seed and write comparison.json.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Grade the planner or the registration solver against brute force on
    /// one instance file. Exit status 0 when the solver hits the optimum.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cpsr,
    UniqueLeader,
    NoObstacle,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Cpsr => Mode::Cpsr,
            ModeArg::UniqueLeader => Mode::UniqueLeader,
            ModeArg::NoObstacle => Mode::NoObstacle,
        }
    }
}

const EXIT_INVALID: u8 = 1;

fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, ExitCode> {
    match scenario::load(path) {
        Ok(l) => Ok(match seed {
            Some(s) => l.with_seed(s),
            None => l,
        }),
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(EXIT_INVALID))
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            mode,
        } => {
            let loaded = match load(&scenario, seed) {
                Ok(l) => l,
                Err(code) => return Ok(code),
            };
            let mut sc = loaded.scenario;
            if let Some(m) = mode {
                sc.mode = m.into();
            }
            let result = sim::run(&sc)?;
            let summary = sim::metrics(&result, &sc)?;
            let json = output::write_run(&out, &sc, &result, &summary)?;
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(ExitCode::from(match summary.outcome {
                Outcome::Arrived => 0,
                Outcome::Timeout => 2,
                Outcome::CollisionFault => 3,
            }))
        }
        Command::Compare {
            scenario,
            out,
            seed,
        } => {
            let loaded = match load(&scenario, seed) {
                Ok(l) => l,
                Err(code) => return Ok(code),
            };
            let cmp = compare::compare(&loaded, &out)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { scenario } => match load(&scenario, None) {
            Ok(l) => {
                println!(
                    "ok: {} drones, {} obstacles, mode {}",
                    l.scenario.drones.len(),
                    l.scenario.obstacles.len(),
                    output::mode_name(l.scenario.mode)
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(code) => Ok(code),
        },
        Command::Oracle { instance } => {
            let inst = oracle::load_instance(&instance)?;
            let report = oracle::grade(&inst)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.hit {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARM_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
