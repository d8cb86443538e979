//! trace.csv and summary.json writers.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use swarm_core::sim::{Mode, Outcome, RunResult, Scenario, Summary, TickRecord};
use swarm_core::Role;

pub fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Cpsr => "cpsr",
        Mode::UniqueLeader => "unique_leader",
        Mode::NoObstacle => "no_obstacle",
    }
}

pub fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Arrived => "arrived",
        Outcome::Timeout => "timeout",
        Outcome::CollisionFault => "collision_fault",
    }
}

/// Column names in output order.
pub fn trace_header(first: &TickRecord) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for id in &first.ids {
        h.push(format!("drone{id}_x"));
        h.push(format!("drone{id}_y"));
        h.push(format!("drone{id}_role"));
    }
    h.extend(["flag_obs", "d_rms", "e_tps", "leader_id"].map(String::from));
    for (i, j, _) in &first.distances {
        h.push(format!("dist_{i}_{j}"));
    }
    h.push("energy_total".into());
    h
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn trace_row(r: &TickRecord) -> Vec<String> {
    let mut row = vec![format!("{:.3}", r.t)];
    for ((p, role), _) in r.positions.iter().zip(&r.roles).zip(&r.ids) {
        row.push(f(p.x));
        row.push(f(p.y));
        row.push(match role {
            Role::Leader => "leader".into(),
            Role::Follower => "follower".into(),
        });
    }
    row.push(u8::from(r.flag_obs).to_string());
    row.push(f(r.d_rms));
    row.push(f(r.e_tps));
    row.push(r.leader_id.to_string());
    for &(_, _, d) in &r.distances {
        row.push(f(d));
    }
    row.push(r.energy.iter().sum::<u64>().to_string());
    row
}

pub fn write_trace<W: Write>(out: W, trace: &[TickRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = trace.first() {
        w.write_record(trace_header(first))?;
    }
    for r in trace {
        w.write_record(trace_row(r))?;
    }
    w.flush()?;
    Ok(())
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SummaryJson {
    pub mode: &'static str,
    pub seed: u64,
    pub outcome: &'static str,
    pub mission_time: Option<f64>,
    pub reformation_time: Option<f64>,
    pub detection_time: Option<f64>,
    pub clearance_time: Option<f64>,
    pub peak_d_rms: f64,
    pub peak_e_tps: f64,
    pub total_energy: u64,
    pub flight_distance: f64,
    pub min_inter_drone_distance: Option<f64>,
    pub min_obstacle_clearance: Option<f64>,
    pub leader_changes: usize,
    pub avoidance_plans: usize,
    pub ticks: usize,
}

impl SummaryJson {
    pub fn new(sc: &Scenario, r: &RunResult, s: &Summary) -> Self {
        SummaryJson {
            mode: mode_name(sc.mode),
            seed: sc.rng_seed,
            outcome: outcome_name(s.outcome),
            mission_time: s.mission_time,
            reformation_time: s.reformation_time,
            detection_time: r.detection_time,
            clearance_time: r.clearance_time,
            peak_d_rms: s.peak_d_rms,
            peak_e_tps: s.peak_e_tps,
            total_energy: s.total_energy,
            flight_distance: s.flight_distance,
            min_inter_drone_distance: finite(s.min_inter_drone_distance),
            min_obstacle_clearance: finite(s.min_obstacle_clearance),
            leader_changes: s.leader_changes,
            avoidance_plans: r.plans,
            ticks: s.ticks,
        }
    }
}

/// Write `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, sc: &Scenario, r: &RunResult, s: &Summary) -> Result<SummaryJson> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_path = dir.join("trace.csv");
    let file = std::fs::File::create(&trace_path)
        .with_context(|| format!("creating {}", trace_path.display()))?;
    write_trace(std::io::BufWriter::new(file), &r.trace)?;
    let summary = SummaryJson::new(sc, r, s);
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}
