//! Receding-horizon controller: one object drives both the baseline MPPI and
//! the risk-aware variant. Per iteration it samples M candidates, rolls them
//! out on the nominal model, optionally evaluates each candidate's CVaR over
//! N disturbed rollouts and penalizes violators, then returns the first
//! control of the weighted update and shifts the mean for the next cycle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, DisturbanceModel, State, VehicleParams};
use crate::mppi::{
    compute_weights, rollout_nominal, sample_control_batch, shift_mean, weighted_update,
    ControlSequence, MppiParams, NominalRollout,
};
use crate::rng::{StreamDomain, Streams};
use crate::risk::{evaluate_risk, filter_costs, risk_rollout, RiskParams, RiskReport};
use crate::track::{CostWeights, Track};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Mppi,
    RaMppi,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerKind::Mppi => f.write_str("mppi"),
            ControllerKind::RaMppi => f.write_str("ra-mppi"),
        }
    }
}

/// Risk-evaluation configuration for the RA variant.
#[derive(Clone, Debug)]
pub struct RiskStage {
    pub params: RiskParams,
    /// Disturbance model for the risk rollouts; `None` replays noise-free.
    pub model: Option<DisturbanceModel>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Diagnostics {
    /// Rollouts rejected for non-finite cost.
    pub nonfinite_costs: u64,
    /// Batches re-sampled after a degenerate weight sum.
    pub resamples: u64,
}

/// Per-iteration aggregate of the candidate risk reports.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RiskSummary {
    pub cvar_min: f64,
    pub cvar_mean: f64,
    pub cvar_max: f64,
    /// Candidates whose CVaR exceeded the constraint bound.
    pub violations: u64,
}

pub struct IterationOutput {
    /// First control of the optimized sequence; execute this.
    pub command: ControlInput,
    /// Present when the risk stage ran.
    pub risk: Option<RiskSummary>,
    /// Trajectories simulated this iteration (nominal plus disturbed).
    pub trajectories: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ControllerError {
    #[error("degenerate batch: no finite trajectory costs after {0} sampling attempts")]
    DegenerateBatch(u32),
}

const MAX_SAMPLING_ATTEMPTS: u32 = 3;

pub struct Controller {
    kind: ControllerKind,
    mppi: MppiParams,
    vehicle: VehicleParams,
    cost_weights: CostWeights,
    risk: RiskStage,
    mean: ControlSequence,
    iteration: u64,
    streams: Streams,
    pub diagnostics: Diagnostics,
}

impl Controller {
    pub fn new(
        kind: ControllerKind,
        mppi: MppiParams,
        vehicle: VehicleParams,
        cost_weights: CostWeights,
        risk: RiskStage,
        master_seed: u64,
    ) -> Self {
        let mean = vec![ControlInput::default(); mppi.horizon];
        Self {
            kind,
            mppi,
            vehicle,
            cost_weights,
            risk,
            mean,
            iteration: 0,
            streams: Streams::new(master_seed),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn mean(&self) -> &[ControlInput] {
        &self.mean
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// One optimization cycle from the measured state. Returns the command to
    /// execute; the internal mean is shifted for the next cycle.
    pub fn iterate(&mut self, x0: &State, track: &Track) -> Result<IterationOutput, ControllerError> {
        for attempt in 0..MAX_SAMPLING_ATTEMPTS {
            let batch = sample_control_batch(
                &self.mean,
                &self.mppi,
                &self.vehicle,
                &self.streams,
                self.iteration,
                attempt as u64,
            );
            let rollouts: Vec<NominalRollout> = batch
                .into_par_iter()
                .map(|candidate| {
                    rollout_nominal(
                        x0,
                        candidate,
                        &self.mean,
                        track,
                        &self.cost_weights,
                        &self.mppi,
                        &self.vehicle,
                    )
                })
                .collect();
            let mut costs: Vec<f64> = rollouts.iter().map(|r| r.cost).collect();
            let mut trajectories = self.mppi.samples as u64;
            let mut risk_summary = None;

            if self.kind == ControllerKind::RaMppi {
                let reports: Vec<RiskReport> = rollouts
                    .par_iter()
                    .enumerate()
                    .map(|(m, rollout)| {
                        let mut sample_costs = Vec::with_capacity(self.risk.params.samples);
                        for n in 0..self.risk.params.samples {
                            let mut rng = self.streams.stream4(
                                StreamDomain::RiskDisturbance,
                                self.iteration,
                                m as u64,
                                n as u64,
                                attempt as u64,
                            );
                            sample_costs.push(risk_rollout(
                                x0,
                                &rollout.controls,
                                self.risk.model.as_ref(),
                                track,
                                &self.cost_weights,
                                &self.vehicle,
                                &mut rng,
                            ));
                        }
                        evaluate_risk(&sample_costs, &self.risk.params)
                    })
                    .collect();
                costs = filter_costs(&costs, &reports);
                trajectories += (self.mppi.samples * self.risk.params.samples) as u64;
                risk_summary = Some(summarize(&reports, &self.risk.params));
            }

            let weights = compute_weights(&costs, self.mppi.lambda);
            self.diagnostics.nonfinite_costs += weights.rejected as u64;
            let sequences: Vec<&[ControlInput]> =
                rollouts.iter().map(|r| r.controls.as_slice()).collect();
            match weighted_update(&sequences, &weights.values) {
                Ok(v_plus) => {
                    let command = v_plus[0];
                    self.mean = shift_mean(&v_plus);
                    self.iteration += 1;
                    return Ok(IterationOutput { command, risk: risk_summary, trajectories });
                }
                Err(_) => {
                    self.diagnostics.resamples += 1;
                }
            }
        }
        Err(ControllerError::DegenerateBatch(MAX_SAMPLING_ATTEMPTS))
    }
}

fn summarize(reports: &[RiskReport], params: &RiskParams) -> RiskSummary {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut violations = 0;
    for r in reports {
        min = min.min(r.cvar);
        max = max.max(r.cvar);
        sum += r.cvar;
        if r.cvar > params.c_u {
            violations += 1;
        }
    }
    RiskSummary {
        cvar_min: min,
        cvar_mean: sum / reports.len() as f64,
        cvar_max: max,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DisturbanceModel;
    use crate::track::TrackConfig;

    fn small_mppi() -> MppiParams {
        MppiParams { samples: 32, horizon: 12, ..Default::default() }
    }

    fn make(kind: ControllerKind, a: f64, seed: u64) -> Controller {
        Controller::new(
            kind,
            small_mppi(),
            VehicleParams::default(),
            CostWeights::default(),
            RiskStage {
                params: RiskParams { samples: 8, a, ..Default::default() },
                model: Some(DisturbanceModel::gaussian(0.0004)),
            },
            seed,
        )
    }

    #[test]
    fn iterations_are_deterministic_for_a_fixed_seed() {
        let track = Track::build(&TrackConfig::stadium()).unwrap();
        let x0 = State::new(0.0, 0.0, 0.0, 0.0);
        let mut a = make(ControllerKind::RaMppi, 10.0, 42);
        let mut b = make(ControllerKind::RaMppi, 10.0, 42);
        for _ in 0..5 {
            let ca = a.iterate(&x0, &track).unwrap();
            let cb = b.iterate(&x0, &track).unwrap();
            assert_eq!(ca.command, cb.command);
        }
        assert_eq!(a.mean(), b.mean());
    }

    #[test]
    fn inert_filter_reproduces_the_baseline_command() {
        // With A = 0 the violation cost is identically zero, and the risk
        // stage draws from its own stream domain, so the RA controller must
        // match the baseline bit for bit.
        let track = Track::build(&TrackConfig::stadium()).unwrap();
        let mut x = State::new(0.0, 0.0, 0.0, 0.0);
        let mut baseline = make(ControllerKind::Mppi, 10.0, 7);
        let mut inert = make(ControllerKind::RaMppi, 0.0, 7);
        for _ in 0..6 {
            let cb = baseline.iterate(&x, &track).unwrap();
            let ci = inert.iterate(&x, &track).unwrap();
            assert_eq!(cb.command, ci.command);
            assert!(ci.risk.is_some());
            x = crate::dynamics::step_nominal(&x, &cb.command, &VehicleParams::default());
        }
    }

    #[test]
    fn risk_stage_reports_per_iteration_summaries() {
        let track = Track::build(&TrackConfig::stadium()).unwrap();
        let mut c = make(ControllerKind::RaMppi, 10.0, 3);
        let out = c.iterate(&State::new(0.0, 0.0, 0.0, 0.4), &track).unwrap();
        let summary = out.risk.expect("risk stage ran");
        assert!(summary.cvar_min <= summary.cvar_mean);
        assert!(summary.cvar_mean <= summary.cvar_max);
        assert_eq!(out.trajectories, 32 + 32 * 8);
    }

    #[test]
    fn baseline_counts_only_nominal_trajectories() {
        let track = Track::build(&TrackConfig::stadium()).unwrap();
        let mut c = make(ControllerKind::Mppi, 10.0, 3);
        let out = c.iterate(&State::new(0.0, 0.0, 0.0, 0.0), &track).unwrap();
        assert!(out.risk.is_none());
        assert_eq!(out.trajectories, 32);
    }
}
