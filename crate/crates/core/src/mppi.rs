//! Baseline MPPI primitives: control-noise sampling, nominal rollouts and
//! their trajectory cost, exponential weighting with the min-cost shift, the
//! weighted control update, and the receding-horizon warm start.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_nominal, ControlInput, State, VehicleParams};
use crate::rng::{StreamDomain, Streams};
use crate::track::{terminal_cost, CostWeights, Track};

pub type ControlSequence = Vec<ControlInput>;

#[derive(Debug, thiserror::Error)]
pub enum MppiError {
    #[error("degenerate batch: the weight sum is zero")]
    DegenerateBatch,
}

/// MPPI controller constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiParams {
    /// Control horizon K (steps).
    pub horizon: usize,
    /// Number of sampled control sequences M.
    pub samples: usize,
    /// Inverse temperature of the exponential weighting.
    pub lambda: f64,
    /// Control-cost weight, in `[0, lambda]`.
    pub gamma: f64,
    /// Fraction eta of samples drawn around zero instead of the mean.
    pub zero_mean_fraction: f64,
    /// Control-noise standard deviation, acceleration channel.
    pub noise_std_accel: f64,
    /// Control-noise standard deviation, steering channel.
    pub noise_std_steer: f64,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            horizon: 30,
            samples: 256,
            lambda: 0.35,
            gamma: 0.1,
            zero_mean_fraction: 0.2,
            noise_std_accel: 1.2,
            noise_std_steer: 0.18,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.horizon < 1 {
            return Err("horizon must be >= 1".into());
        }
        if self.samples < 1 {
            return Err("samples must be >= 1".into());
        }
        if !(self.lambda > 0.0) {
            return Err(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(0.0..=self.lambda).contains(&self.gamma) {
            return Err(format!(
                "gamma must be in [0, lambda={}], got {}",
                self.lambda, self.gamma
            ));
        }
        if !(0.0..=1.0).contains(&self.zero_mean_fraction) {
            return Err(format!(
                "zero_mean_fraction must be in [0, 1], got {}",
                self.zero_mean_fraction
            ));
        }
        if !(self.noise_std_accel > 0.0) || !(self.noise_std_steer > 0.0) {
            return Err("control-noise standard deviations must be > 0".into());
        }
        Ok(())
    }

    /// Number of samples drawn around the warm-start mean; the remaining
    /// `samples - warm_sample_count()` are zero-mean.
    pub fn warm_sample_count(&self) -> usize {
        ((1.0 - self.zero_mean_fraction) * self.samples as f64).floor() as usize
    }

    /// Diagonal of the inverse control-noise covariance.
    #[inline]
    pub fn sigma_inv(&self) -> [f64; 2] {
        [
            1.0 / (self.noise_std_accel * self.noise_std_accel),
            1.0 / (self.noise_std_steer * self.noise_std_steer),
        ]
    }
}

/// One sampled candidate: the clamped control sequence and its raw noise.
#[derive(Clone, Debug)]
pub struct SampledControls {
    pub controls: ControlSequence,
    pub noise: ControlSequence,
}

/// One evaluated candidate: trajectory, cost, and the controls that made it.
#[derive(Clone, Debug)]
pub struct NominalRollout {
    /// K+1 states, starting at the measured state.
    pub states: Vec<State>,
    /// Trajectory cost S_m.
    pub cost: f64,
    pub controls: ControlSequence,
    pub noise: ControlSequence,
}

/// Draw M candidate sequences around `mean`. Samples below the warm count get
/// `mean + noise`; the rest are pure noise. Controls are clamped to the
/// actuator bounds after noise injection. Noise is addressed per
/// `(iteration, attempt, sample)`, so the batch is identical at any thread
/// count.
pub fn sample_control_batch(
    mean: &[ControlInput],
    params: &MppiParams,
    vehicle: &VehicleParams,
    streams: &Streams,
    iteration: u64,
    attempt: u64,
) -> Vec<SampledControls> {
    debug_assert_eq!(mean.len(), params.horizon);
    let warm = params.warm_sample_count();
    (0..params.samples)
        .map(|m| {
            let mut rng = streams.stream4(
                StreamDomain::ControlNoise,
                iteration,
                m as u64,
                attempt,
                0,
            );
            let mut controls = Vec::with_capacity(params.horizon);
            let mut noise = Vec::with_capacity(params.horizon);
            for k in 0..params.horizon {
                let eps = ControlInput {
                    accel: params.noise_std_accel * rng.normal(),
                    steer: params.noise_std_steer * rng.normal(),
                };
                let raw = if m < warm {
                    ControlInput {
                        accel: mean[k].accel + eps.accel,
                        steer: mean[k].steer + eps.steer,
                    }
                } else {
                    eps
                };
                controls.push(raw.clamped(vehicle));
                noise.push(eps);
            }
            SampledControls { controls, noise }
        })
        .collect()
}

/// Propagate the nominal dynamics under one candidate and accumulate its
/// trajectory cost: running costs over `k = 0..K-1`, the control alignment
/// term against the current mean, and the terminal cost on centerline
/// progress gained over the horizon.
pub fn rollout_nominal(
    x0: &State,
    candidate: SampledControls,
    mean: &[ControlInput],
    track: &Track,
    weights: &CostWeights,
    params: &MppiParams,
    vehicle: &VehicleParams,
) -> NominalRollout {
    let k_steps = candidate.controls.len();
    let sigma_inv = params.sigma_inv();
    let mut states = Vec::with_capacity(k_steps + 1);
    let mut x = *x0;
    let mut cost = 0.0;
    let mut progress = 0.0;
    let mut prev_s = 0.0;
    for k in 0..=k_steps {
        let (q, s) = track.step_cost(x.position(), weights);
        if k == 0 {
            prev_s = s;
        } else {
            progress += track.progress_delta(prev_s, s);
            prev_s = s;
        }
        states.push(x);
        if k < k_steps {
            let u = candidate.controls[k];
            let v = mean[k];
            cost += q
                + params.gamma
                    * (v.accel * sigma_inv[0] * u.accel + v.steer * sigma_inv[1] * u.steer);
            x = step_nominal(&x, &u, vehicle);
        }
    }
    cost += terminal_cost(progress, weights);
    NominalRollout {
        states,
        cost,
        controls: candidate.controls,
        noise: candidate.noise,
    }
}

/// Exponential weights with the minimum-cost shift.
#[derive(Clone, Debug)]
pub struct Weights {
    pub values: Vec<f64>,
    /// Batch entries rejected for non-finite cost (weight forced to zero).
    pub rejected: usize,
}

/// `w_m = exp(-(S_m - beta) / lambda)` with `beta = min S_m` over finite
/// costs. Non-finite entries get weight zero and are counted in `rejected`.
pub fn compute_weights(costs: &[f64], lambda: f64) -> Weights {
    let beta = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    let mut rejected = 0;
    let values = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - beta) / lambda).exp()
            } else {
                rejected += 1;
                0.0
            }
        })
        .collect();
    Weights { values, rejected }
}

/// Fixed-order pairwise sum; deterministic regardless of worker scheduling.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Weighted average of the sampled control sequences, per step and channel.
/// Weights are normalized up front, so a single-sample batch returns its
/// controls unchanged regardless of the weight value.
pub fn weighted_update<S: AsRef<[ControlInput]>>(
    controls: &[S],
    weights: &[f64],
) -> Result<ControlSequence, MppiError> {
    assert_eq!(controls.len(), weights.len());
    let total = pairwise_sum(weights);
    if !(total > 0.0) || !total.is_finite() {
        return Err(MppiError::DegenerateBatch);
    }
    let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let horizon = controls.first().map(|c| c.as_ref().len()).unwrap_or(0);
    let mut scratch = vec![0.0; controls.len()];
    let mut out = Vec::with_capacity(horizon);
    for k in 0..horizon {
        for (slot, (seq, w)) in scratch.iter_mut().zip(controls.iter().zip(&normalized)) {
            *slot = w * seq.as_ref()[k].accel;
        }
        let accel = pairwise_sum(&scratch);
        for (slot, (seq, w)) in scratch.iter_mut().zip(controls.iter().zip(&normalized)) {
            *slot = w * seq.as_ref()[k].steer;
        }
        let steer = pairwise_sum(&scratch);
        out.push(ControlInput { accel, steer });
    }
    Ok(out)
}

/// Receding-horizon warm start: drop the executed first control, shift the
/// rest forward, and repeat the last entry to keep the length at K.
pub fn shift_mean(v_plus: &[ControlInput]) -> ControlSequence {
    if v_plus.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(v_plus.len());
    out.extend_from_slice(&v_plus[1..]);
    out.push(*v_plus.last().unwrap());
    out
}
