//! Closed-loop execution: receding-horizon control against a disturbed plant,
//! collision and lap metrics, the C_u/alpha grid search, and the throughput
//! benchmark. Episodes are pure functions of their scenario (master seed
//! included) at any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::RiskSummary;
use crate::dynamics::{sample_disturbance, step_disturbed, State};
use crate::rng::{StreamDomain, Streams};
use crate::scenario::Scenario;
use crate::track::Track;
use crate::{ControllerKind, CoreError};

/// Kind of infeasible region entered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionKind {
    Boundary,
    Obstacle,
}

impl std::fmt::Display for CollisionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CollisionKind::Boundary => f.write_str("boundary"),
            CollisionKind::Obstacle => f.write_str("obstacle"),
        }
    }
}

/// Instantaneous infeasibility check. Simultaneous boundary and obstacle
/// containment classifies as obstacle.
pub fn infeasible_kind(track: &Track, point: [f64; 2]) -> Option<CollisionKind> {
    if track.obstacle_cost(point) > 0.0 {
        Some(CollisionKind::Obstacle)
    } else if track.boundary_distance(point) < 0.0 {
        Some(CollisionKind::Boundary)
    } else {
        None
    }
}

/// Rising-edge collision counter: a feasible-to-infeasible transition is one
/// event; continuous infeasible dwell is not re-counted.
#[derive(Clone, Copy, Debug)]
pub struct CollisionCounter {
    infeasible: bool,
}

impl CollisionCounter {
    /// Start from the feasibility of the initial state.
    pub fn new(initially_infeasible: bool) -> Self {
        Self { infeasible: initially_infeasible }
    }

    /// Feed the next state's classification; returns the event, if any.
    pub fn observe(&mut self, kind: Option<CollisionKind>) -> Option<CollisionKind> {
        let event = match (self.infeasible, kind) {
            (false, Some(k)) => Some(k),
            _ => None,
        };
        self.infeasible = kind.is_some();
        event
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub kind: CollisionKind,
}

/// One logged plant state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub state: State,
    pub s: f64,
    pub e: f64,
    pub d: f64,
    pub collision: Option<CollisionKind>,
}

/// Per-iteration risk summary row (present when `run.log_risk` is set).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RiskLogRow {
    pub iteration: u64,
    pub t: f64,
    #[serde(flatten)]
    pub summary: RiskSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeMetrics {
    pub controller: ControllerKind,
    pub laps_completed: u32,
    pub lap_times: Vec<f64>,
    /// Mean of `lap_times`; absent until a lap completes.
    pub mean_lap_time: Option<f64>,
    pub collision_events: Vec<CollisionEvent>,
    pub boundary_collisions: u64,
    pub obstacle_collisions: u64,
    /// Total events over completed laps; absent until a lap completes.
    pub collisions_per_lap: Option<f64>,
    pub iterations: u64,
    pub trajectories_evaluated: u64,
    /// Wall-clock seconds; informational only, excluded from CSV output.
    pub wall_time: f64,
    pub nonfinite_rollouts: u64,
    pub resamples: u64,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

impl EpisodeMetrics {
    pub fn total_collisions(&self) -> u64 {
        self.boundary_collisions + self.obstacle_collisions
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub trajectory: Vec<TrajectoryRow>,
    pub risk_log: Vec<RiskLogRow>,
}

/// Tracks cumulative centerline progress and lap completions.
struct LapTracker {
    total_length: f64,
    prev_s: f64,
    cumulative: f64,
    best: f64,
    last_progress_t: f64,
    last_lap_t: f64,
    lap_times: Vec<f64>,
}

impl LapTracker {
    fn new(total_length: f64, s0: f64) -> Self {
        Self {
            total_length,
            prev_s: s0,
            cumulative: 0.0,
            best: 0.0,
            last_progress_t: 0.0,
            last_lap_t: 0.0,
            lap_times: Vec::new(),
        }
    }

    /// Advance to the next observed arc position; returns true when a lap
    /// completed on this step.
    fn observe(&mut self, track: &Track, s: f64, t: f64) -> bool {
        self.cumulative += track.progress_delta(self.prev_s, s);
        self.prev_s = s;
        if self.cumulative > self.best + 1e-12 {
            self.best = self.cumulative;
            self.last_progress_t = t;
        }
        let next_lap = (self.lap_times.len() + 1) as f64 * self.total_length;
        if self.cumulative >= next_lap {
            self.lap_times.push(t - self.last_lap_t);
            self.last_lap_t = t;
            true
        } else {
            false
        }
    }

    fn laps(&self) -> u32 {
        self.lap_times.len() as u32
    }

    fn stalled_since(&self, t: f64) -> f64 {
        t - self.last_progress_t
    }
}

/// Run one closed-loop episode. Deterministic given the scenario.
pub fn run_episode(scenario: &Scenario) -> Result<EpisodeOutcome, CoreError> {
    scenario.validate()?;
    let started = std::time::Instant::now();
    let track = scenario.build_track()?;
    let plant_model = scenario.plant_model()?;
    let mut controller = scenario.build_controller()?;
    let plant_streams = Streams::new(scenario.run.seed);
    let dt = scenario.vehicle.dt;

    let mut x = scenario.initial_state(&track);
    let probe0 = track.probe(x.position());
    let mut lap = LapTracker::new(track.total_length(), probe0.s);
    let mut counter = CollisionCounter::new(infeasible_kind(&track, x.position()).is_some());

    let mut trajectory = vec![TrajectoryRow {
        t: 0.0,
        state: x,
        s: probe0.s,
        e: probe0.e,
        d: probe0.d,
        collision: None,
    }];
    let mut risk_log = Vec::new();
    let mut events = Vec::new();
    let mut boundary = 0u64;
    let mut obstacle = 0u64;
    let mut trajectories = 0u64;
    let mut iterations = 0u64;
    let mut abort_reason = None;

    while lap.laps() < scenario.run.laps {
        let step = iterations;
        let output = match controller.iterate(&x, &track) {
            Ok(out) => out,
            Err(e) => {
                abort_reason = Some(e.to_string());
                break;
            }
        };
        iterations += 1;
        trajectories += output.trajectories;
        let t = (step + 1) as f64 * dt;
        if scenario.run.log_risk {
            if let Some(summary) = output.risk {
                risk_log.push(RiskLogRow { iteration: step, t, summary });
            }
        }

        let w = match &plant_model {
            Some(model) => {
                let mut rng = plant_streams.stream(StreamDomain::PlantDisturbance, step, 0, 0);
                sample_disturbance(model, &mut rng)
            }
            None => [0.0; 4],
        };
        x = step_disturbed(&x, &output.command, &w, &scenario.vehicle);

        let position = x.position();
        let probe = track.probe(position);
        let kind = infeasible_kind(&track, position);
        let event = counter.observe(kind);
        if let Some(k) = event {
            match k {
                CollisionKind::Boundary => boundary += 1,
                CollisionKind::Obstacle => obstacle += 1,
            }
            events.push(CollisionEvent { t, x: position[0], y: position[1], kind: k });
        }
        lap.observe(&track, probe.s, t);
        trajectory.push(TrajectoryRow {
            t,
            state: x,
            s: probe.s,
            e: probe.e,
            d: probe.d,
            collision: event,
        });

        if lap.stalled_since(t) > scenario.run.stuck_timeout {
            abort_reason = Some(format!(
                "stuck: no lap progress for {}s of simulated time",
                scenario.run.stuck_timeout
            ));
            break;
        }
    }

    let laps_completed = lap.laps();
    let total_events = boundary + obstacle;
    let metrics = EpisodeMetrics {
        controller: scenario.controller,
        laps_completed,
        mean_lap_time: if laps_completed > 0 {
            Some(lap.lap_times.iter().sum::<f64>() / laps_completed as f64)
        } else {
            None
        },
        lap_times: lap.lap_times,
        collision_events: events,
        boundary_collisions: boundary,
        obstacle_collisions: obstacle,
        collisions_per_lap: if laps_completed > 0 {
            Some(total_events as f64 / laps_completed as f64)
        } else {
            None
        },
        iterations,
        trajectories_evaluated: trajectories,
        wall_time: started.elapsed().as_secs_f64(),
        nonfinite_rollouts: controller.diagnostics.nonfinite_costs,
        resamples: controller.diagnostics.resamples,
        aborted: abort_reason.is_some(),
        abort_reason,
    };
    Ok(EpisodeOutcome { metrics, trajectory, risk_log })
}

/// One cell of the grid search.
#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub c_u: f64,
    pub alpha: f64,
    /// Total RA-MPPI collisions over the cell's seeds; absent if a run failed.
    pub collisions: Option<u64>,
    /// `N_R / N_M`; absent when the baseline count is zero or the cell failed.
    pub ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridResult {
    pub c_u: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Seeds used per cell (same family as the baseline).
    pub seeds: Vec<u64>,
    /// Total baseline MPPI collisions over the seed family.
    pub baseline_collisions: u64,
    /// Rows indexed by alpha, columns by C_u.
    pub cells: Vec<Vec<GridCell>>,
}

/// Sweep `C_u x alpha`, each cell aggregated over the seed family, divided by
/// the matched MPPI baseline.
pub fn grid_search(
    base: &Scenario,
    c_u_values: &[f64],
    alpha_values: &[f64],
    seeds_per_cell: u32,
) -> Result<GridResult, CoreError> {
    if c_u_values.is_empty() || alpha_values.is_empty() || seeds_per_cell == 0 {
        return Err(CoreError::Config(
            "grid search needs non-empty C_u and alpha lists and at least one seed".into(),
        ));
    }
    let seeds: Vec<u64> = (0..seeds_per_cell as u64).map(|i| base.run.seed + i).collect();

    let episode_total = |scenario: Scenario| -> Result<u64, String> {
        let outcome = run_episode(&scenario).map_err(|e| e.to_string())?;
        if outcome.metrics.aborted {
            return Err(outcome
                .metrics
                .abort_reason
                .unwrap_or_else(|| "aborted".into()));
        }
        Ok(outcome.metrics.total_collisions())
    };

    let baseline_totals: Vec<Result<u64, String>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = base.clone();
            s.controller = ControllerKind::Mppi;
            s.run.seed = seed;
            episode_total(s)
        })
        .collect();
    let mut baseline_collisions = 0u64;
    for r in baseline_totals {
        baseline_collisions += r.map_err(CoreError::Config)?;
    }

    let mut flat: Vec<(usize, usize)> = Vec::new();
    for i in 0..alpha_values.len() {
        for j in 0..c_u_values.len() {
            flat.push((i, j));
        }
    }
    let cell_results: Vec<GridCell> = flat
        .par_iter()
        .map(|&(i, j)| {
            let alpha = alpha_values[i];
            let c_u = c_u_values[j];
            let mut total = 0u64;
            let mut error = None;
            for &seed in &seeds {
                let mut s = base.clone();
                s.controller = ControllerKind::RaMppi;
                s.risk.alpha = alpha;
                s.risk.c_u = c_u;
                s.run.seed = seed;
                match episode_total(s) {
                    Ok(n) => total += n,
                    Err(e) => {
                        error = Some(e);
                        break;
                    }
                }
            }
            match error {
                Some(e) => GridCell { c_u, alpha, collisions: None, ratio: None, error: Some(e) },
                None => GridCell {
                    c_u,
                    alpha,
                    collisions: Some(total),
                    ratio: if baseline_collisions > 0 {
                        Some(total as f64 / baseline_collisions as f64)
                    } else {
                        None
                    },
                    error: None,
                },
            }
        })
        .collect();

    let mut cells: Vec<Vec<GridCell>> = Vec::with_capacity(alpha_values.len());
    let mut it = cell_results.into_iter();
    for _ in 0..alpha_values.len() {
        cells.push(it.by_ref().take(c_u_values.len()).collect());
    }

    Ok(GridResult {
        c_u: c_u_values.to_vec(),
        alpha: alpha_values.to_vec(),
        seeds,
        baseline_collisions,
        cells,
    })
}

/// One throughput measurement.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BenchRow {
    pub threads: usize,
    /// Trajectories simulated per controller iteration, `M * (N + 1)`.
    pub total_trajectories: u64,
    pub iterations_per_s: f64,
    pub trajectories_per_s: f64,
}

/// Measure full RA-MPPI iterations per second for each requested total
/// trajectory count and thread count. `M` is fixed at 1024 (the count is
/// split as `M * (N + 1)`); totals must be multiples of 1024.
pub fn throughput_benchmark(
    base: &Scenario,
    totals: &[u64],
    thread_counts: &[usize],
    measured_iterations: u32,
) -> Result<Vec<BenchRow>, CoreError> {
    const M: u64 = 1024;
    let track = base.build_track()?;
    let mut rows = Vec::new();
    for &threads in thread_counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CoreError::Config(format!("thread pool: {e}")))?;
        for &total in totals {
            if total < M || total % M != 0 {
                return Err(CoreError::Config(format!(
                    "bench total {total} must be a positive multiple of M = {M}"
                )));
            }
            let risk_samples = (total / M - 1) as usize;
            let mut scenario = base.clone();
            scenario.controller = ControllerKind::RaMppi;
            scenario.mppi.samples = M as usize;
            scenario.risk.samples = risk_samples.max(1);
            if risk_samples == 0 {
                scenario.controller = ControllerKind::Mppi;
            }
            let mut controller = scenario.build_controller()?;
            let x0 = scenario.initial_state(&track);
            pool.install(|| -> Result<(), CoreError> {
                controller
                    .iterate(&x0, &track)
                    .map_err(|e| CoreError::Config(e.to_string()))?;
                Ok(())
            })?;
            let started = std::time::Instant::now();
            pool.install(|| -> Result<(), CoreError> {
                for _ in 0..measured_iterations {
                    controller
                        .iterate(&x0, &track)
                        .map_err(|e| CoreError::Config(e.to_string()))?;
                }
                Ok(())
            })?;
            let elapsed = started.elapsed().as_secs_f64();
            let iterations_per_s = measured_iterations as f64 / elapsed;
            rows.push(BenchRow {
                threads,
                total_trajectories: total,
                iterations_per_s,
                trajectories_per_s: iterations_per_s * total as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_scenario, PlantKind};

    fn tiny_scenario() -> Scenario {
        let mut s = default_scenario();
        s.mppi.samples = 24;
        s.mppi.horizon = 12;
        s.risk.samples = 6;
        s.run.laps = 1;
        s.plant.kind = PlantKind::None;
        s.plant.scale = None;
        s.controller = ControllerKind::Mppi;
        s.track.obstacle_placement = None;
        s
    }

    #[test]
    fn collision_counter_counts_rising_edges_once() {
        let mut c = CollisionCounter::new(false);
        let seq = [
            None,
            Some(CollisionKind::Boundary),
            Some(CollisionKind::Boundary),
            None,
            Some(CollisionKind::Obstacle),
        ];
        let events: Vec<_> = seq.iter().map(|k| c.observe(*k)).collect();
        assert_eq!(
            events,
            vec![None, Some(CollisionKind::Boundary), None, None, Some(CollisionKind::Obstacle)]
        );
    }

    #[test]
    fn obstacle_takes_priority_over_boundary() {
        let mut config = crate::track::TrackConfig::stadium_clear();
        // Obstacle centered outside the boundary edge: a point inside it is
        // both out of track and inside the obstacle.
        config.obstacles = vec![crate::track::Obstacle { x: 1.0, y: 0.35, radius: 0.1 }];
        let track = Track::build(&config).unwrap();
        assert_eq!(infeasible_kind(&track, [1.0, 0.35]), Some(CollisionKind::Obstacle));
        assert_eq!(infeasible_kind(&track, [2.5, 0.40]), Some(CollisionKind::Boundary));
        assert_eq!(infeasible_kind(&track, [2.5, 0.0]), None);
    }

    #[test]
    fn lap_tracker_requires_forward_progress() {
        let track = Track::build(&crate::track::TrackConfig::stadium_clear()).unwrap();
        let length = track.total_length();
        let mut lap = LapTracker::new(length, 0.0);
        // Forward motion across the start line completes the lap.
        let mut t = 0.0;
        let mut pos = 0.0;
        let mut completed = false;
        while pos < length + 0.2 {
            pos += 0.1;
            t += 0.05;
            completed |= lap.observe(&track, pos % length, t);
        }
        assert!(completed);
        assert_eq!(lap.laps(), 1);

        // Backward motion across the start line does not increment laps.
        let mut lap = LapTracker::new(length, 0.1);
        lap.observe(&track, 0.05, 0.05);
        lap.observe(&track, length - 0.05, 0.10);
        assert_eq!(lap.laps(), 0);
    }

    #[test]
    fn lap_times_match_constant_speed_arithmetic() {
        // Two laps at constant 1.5 m/s on the 10.9 m centerline.
        let track = Track::build(&crate::track::TrackConfig::stadium_clear()).unwrap();
        let length = track.total_length();
        let dt = 0.05;
        let speed = 1.5;
        let mut lap = LapTracker::new(length, 0.0);
        let mut t = 0.0;
        let mut pos = 0.0;
        while lap.laps() < 2 {
            t += dt;
            pos += speed * dt;
            lap.observe(&track, pos % length, t);
        }
        for lap_time in &lap.lap_times {
            assert!((lap_time - 10.9 / 1.5).abs() <= dt + 1e-9, "lap time {lap_time}");
        }
    }

    #[test]
    fn noise_free_wide_track_episode_is_collision_free() {
        let s = tiny_scenario();
        let outcome = run_episode(&s).unwrap();
        assert!(!outcome.metrics.aborted, "{:?}", outcome.metrics.abort_reason);
        assert_eq!(outcome.metrics.total_collisions(), 0);
        assert_eq!(outcome.metrics.laps_completed, 1);
        assert_eq!(outcome.metrics.collisions_per_lap, Some(0.0));
    }

    #[test]
    fn episodes_are_reproducible() {
        let mut s = tiny_scenario();
        s.plant.kind = PlantKind::Gaussian;
        s.plant.scale = Some(0.0002);
        let a = run_episode(&s).unwrap();
        let b = run_episode(&s).unwrap();
        assert_eq!(a.metrics.laps_completed, b.metrics.laps_completed);
        assert_eq!(a.metrics.total_collisions(), b.metrics.total_collisions());
        assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (ra, rb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(ra.state, rb.state);
        }
    }

    #[test]
    fn stuck_episode_aborts_with_partial_metrics() {
        let mut s = tiny_scenario();
        // No propulsion: clamp acceleration to zero so the car never moves.
        s.vehicle.accel_limits = [-0.0001, 0.0];
        s.run.stuck_timeout = 2.0;
        let outcome = run_episode(&s).unwrap();
        assert!(outcome.metrics.aborted);
        assert_eq!(outcome.metrics.laps_completed, 0);
        assert_eq!(outcome.metrics.mean_lap_time, None);
        assert!(outcome.metrics.abort_reason.unwrap().contains("stuck"));
    }

    #[test]
    fn metrics_conservation_holds() {
        let mut s = tiny_scenario();
        s.plant.kind = PlantKind::Gaussian;
        s.plant.scale = Some(0.001);
        s.track = crate::track::TrackConfig::stadium();
        s.run.laps = 2;
        let outcome = run_episode(&s).unwrap();
        let m = &outcome.metrics;
        assert_eq!(m.collision_events.len() as u64, m.total_collisions());
        if m.laps_completed > 0 {
            let expected = m.total_collisions() as f64 / m.laps_completed as f64;
            assert_eq!(m.collisions_per_lap, Some(expected));
            let mean = m.lap_times.iter().sum::<f64>() / m.lap_times.len() as f64;
            assert_eq!(m.mean_lap_time, Some(mean));
        }
        // Logged collision flags agree with the event list.
        let flagged = outcome.trajectory.iter().filter(|r| r.collision.is_some()).count();
        assert_eq!(flagged as u64, m.total_collisions());
    }
}
