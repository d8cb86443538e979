//! Same scenario, same seed, every mode.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use swarm_core::sim::{self, Mode, RunResult, Scenario, Summary};

use crate::output;
use crate::scenario::Loaded;

#[derive(Debug, Clone)]
pub struct ModeRun {
    /// Directory name, e.g. `cpsr` or `cpsr_8`.
    pub label: String,
    pub scenario: Scenario,
    pub result: RunResult,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeTimes {
    pub mode: String,
    pub outcome: &'static str,
    pub mission_time: Option<f64>,
    pub reformation_time: Option<f64>,
    pub total_energy: u64,
    pub leader_changes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub modes: Vec<ModeTimes>,
    /// Three-drone modes sorted by mission time, e.g. `no_obstacle < cpsr < unique_leader`.
    pub ordering: String,
    /// True when no_obstacle < cpsr < unique_leader strictly.
    pub ordering_holds: bool,
    /// Eight-drone checks, present when the scenario declares the variant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eight_drone: Option<EightDroneVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EightDroneVerdict {
    /// cpsr_8 mission time >= cpsr mission time.
    pub cpsr8_not_faster_than_cpsr3: bool,
    /// cpsr_8 mission time < unique_leader_8 mission time.
    pub cpsr8_faster_than_unique8: bool,
    /// cpsr_8 reformation time > cpsr reformation time.
    pub cpsr8_reforms_slower_than_cpsr3: bool,
}

fn run_mode(label: &str, base: &Scenario, mode: Mode) -> Result<ModeRun> {
    let sc = base.with_mode(mode);
    let result = sim::run(&sc)?;
    let summary = sim::metrics(&result, &sc)?;
    log::info!(
        "{label}: {} mission {:?}",
        output::outcome_name(summary.outcome),
        summary.mission_time
    );
    Ok(ModeRun {
        label: label.to_string(),
        scenario: sc,
        result,
        summary,
    })
}

fn time_key(t: Option<f64>) -> f64 {
    t.unwrap_or(f64::INFINITY)
}

fn lt(a: Option<f64>, b: Option<f64>) -> bool {
    a.is_some() && time_key(a) < time_key(b)
}

fn ordering(runs: &[&ModeRun]) -> String {
    let mut sorted: Vec<&ModeRun> = runs.to_vec();
    sorted.sort_by(|a, b| {
        time_key(a.summary.mission_time).total_cmp(&time_key(b.summary.mission_time))
    });
    let mut s = sorted[0].label.clone();
    for w in sorted.windows(2) {
        let same = time_key(w[0].summary.mission_time) == time_key(w[1].summary.mission_time);
        s.push_str(if same { " = " } else { " < " });
        s.push_str(&w[1].label);
    }
    s
}

/// Run every mode in memory.
pub fn compare_runs(loaded: &Loaded) -> Result<Vec<ModeRun>> {
    let base = &loaded.scenario;
    let mut runs = vec![
        run_mode("no_obstacle", base, Mode::NoObstacle)?,
        run_mode("cpsr", base, Mode::Cpsr)?,
        run_mode("unique_leader", base, Mode::UniqueLeader)?,
    ];
    if let Some(eight) = loaded.eight_drone()? {
        let eight = eight.with_seed(base.rng_seed);
        runs.push(run_mode("cpsr_8", &eight.scenario, Mode::Cpsr)?);
        runs.push(run_mode(
            "unique_leader_8",
            &eight.scenario,
            Mode::UniqueLeader,
        )?);
    }
    Ok(runs)
}

pub fn verdict(runs: &[ModeRun], seed: u64) -> Comparison {
    let get = |l: &str| runs.iter().find(|r| r.label == l);
    let three: Vec<&ModeRun> = ["no_obstacle", "cpsr", "unique_leader"]
        .iter()
        .filter_map(|l| get(l))
        .collect();
    let t = |l: &str| get(l).and_then(|r| r.summary.mission_time);
    let holds = lt(t("no_obstacle"), t("cpsr")) && lt(t("cpsr"), t("unique_leader"));
    let eight_drone = match (get("cpsr"), get("cpsr_8"), get("unique_leader_8")) {
        (Some(c3), Some(c8), Some(u8)) => Some(EightDroneVerdict {
            cpsr8_not_faster_than_cpsr3: c8.summary.mission_time.is_some()
                && time_key(c8.summary.mission_time) >= time_key(c3.summary.mission_time),
            cpsr8_faster_than_unique8: lt(c8.summary.mission_time, u8.summary.mission_time),
            cpsr8_reforms_slower_than_cpsr3: lt(
                c3.summary.reformation_time,
                c8.summary.reformation_time,
            ),
        }),
        _ => None,
    };
    Comparison {
        seed,
        modes: runs
            .iter()
            .map(|r| ModeTimes {
                mode: r.label.clone(),
                outcome: output::outcome_name(r.summary.outcome),
                mission_time: r.summary.mission_time,
                reformation_time: r.summary.reformation_time,
                total_energy: r.summary.total_energy,
                leader_changes: r.summary.leader_changes,
            })
            .collect(),
        ordering: ordering(&three),
        ordering_holds: holds,
        eight_drone,
    }
}

/// Run every mode and write `<out>/<mode>/{trace.csv,summary.json}` plus
/// `<out>/comparison.json`.
pub fn compare(loaded: &Loaded, out: &Path) -> Result<Comparison> {
    let runs = compare_runs(loaded)?;
    for r in &runs {
        output::write_run(&out.join(&r.label), &r.scenario, &r.result, &r.summary)?;
    }
    let cmp = verdict(&runs, loaded.scenario.rng_seed);
    std::fs::write(
        out.join("comparison.json"),
        serde_json::to_string_pretty(&cmp)? + "\n",
    )?;
    Ok(cmp)
}
