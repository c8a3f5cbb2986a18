//! Artifact writers. CSV schemas are fixed and pinned by tests; floats are
//! rendered with Rust's shortest round-trip formatting so identical inputs
//! produce identical bytes. Wall-clock time appears only in the JSON report,
//! keeping the CSV outputs reproducible across reruns.

use crate::scenario::Scenario;
use crate::sim::{BenchRow, EpisodeMetrics, GridResult, RiskLogRow, TrajectoryRow};

pub const METRICS_CSV_HEADER: &str = "controller,laps_completed,collisions_total,boundary_collisions,obstacle_collisions,collisions_per_lap,mean_lap_time_s,iterations,trajectories_evaluated,nonfinite_rollouts,resamples,aborted,abort_reason";

pub const TRAJECTORY_CSV_HEADER: &str = "t,x,y,psi,v,s,e,d,collision";

pub const BENCH_CSV_HEADER: &str = "threads,total_trajectories,iterations_per_s,trajectories_per_s";

pub const RISK_CSV_HEADER: &str = "iteration,t,cvar_min,cvar_mean,cvar_max,violations";

fn opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

/// Single-row episode summary.
pub fn metrics_csv(m: &EpisodeMetrics) -> String {
    let mut out = String::new();
    out.push_str(METRICS_CSV_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        m.controller,
        m.laps_completed,
        m.total_collisions(),
        m.boundary_collisions,
        m.obstacle_collisions,
        opt(m.collisions_per_lap),
        opt(m.mean_lap_time),
        m.iterations,
        m.trajectories_evaluated,
        m.nonfinite_rollouts,
        m.resamples,
        m.aborted,
        m.abort_reason.as_deref().unwrap_or(""),
    ));
    out
}

/// Full state log, one row per plant step (including the initial state).
pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + 64);
    out.push_str(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let collision = match r.collision {
            Some(k) => k.to_string(),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.t, r.state.x, r.state.y, r.state.psi, r.state.v, r.s, r.e, r.d, collision
        ));
    }
    out
}

/// Per-iteration risk summaries.
pub fn risk_csv(rows: &[RiskLogRow]) -> String {
    let mut out = String::new();
    out.push_str(RISK_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration,
            r.t,
            r.summary.cvar_min,
            r.summary.cvar_mean,
            r.summary.cvar_max,
            r.summary.violations
        ));
    }
    out
}

/// Episode report: the effective scenario (after overrides) plus all metrics.
pub fn metrics_json(scenario: &Scenario, metrics: &EpisodeMetrics) -> String {
    let value = serde_json::json!({
        "scenario": scenario,
        "metrics": metrics,
    });
    serde_json::to_string_pretty(&value).expect("metrics serialize")
}

/// Fig.-5-style table: rows are alpha values, columns are C_u values, cells
/// are collision ratios against the matched MPPI baseline (`NA` when a cell
/// failed or the baseline saw no collisions).
pub fn grid_csv(grid: &GridResult) -> String {
    let mut out = String::new();
    out.push_str("alpha/c_u");
    for c_u in &grid.c_u {
        out.push_str(&format!(",{c_u}"));
    }
    out.push('\n');
    for (i, alpha) in grid.alpha.iter().enumerate() {
        out.push_str(&format!("{alpha}"));
        for cell in &grid.cells[i] {
            out.push_str(&format!(",{}", opt(cell.ratio)));
        }
        out.push('\n');
    }
    out
}

pub fn grid_json(grid: &GridResult) -> String {
    serde_json::to_string_pretty(grid).expect("grid serialize")
}

/// Throughput table, one row per (threads, total) configuration.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    out.push_str(BENCH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.threads, r.total_trajectories, r.iterations_per_s, r.trajectories_per_s
        ));
    }
    out
}
