//! Vehicle dynamics: a kinematic bicycle stepped with forward Euler, plus the
//! disturbance models used for risk rollouts and the closed-loop plant.
//!
//! The disturbed step adds state-space noise after the nominal update, so the
//! nominal model is the mean of the disturbed one by construction.

use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;

/// Number of state channels: `x, y, psi, v`.
pub const STATE_DIM: usize = 4;

/// Vehicle pose and longitudinal speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Position east (m).
    pub x: f64,
    /// Position north (m).
    pub y: f64,
    /// Heading (rad), kept in `(-pi, pi]`.
    pub psi: f64,
    /// Longitudinal speed (m/s).
    pub v: f64,
}

impl State {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite() && self.v.is_finite()
    }
}

/// Actuator command: commanded acceleration and front steering angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Commanded acceleration (m/s^2).
    pub accel: f64,
    /// Front steering angle (rad).
    pub steer: f64,
}

impl ControlInput {
    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    /// Clamp both channels to the actuator bounds.
    #[inline]
    pub fn clamped(&self, p: &VehicleParams) -> ControlInput {
        ControlInput {
            accel: self.accel.clamp(p.accel_limits[0], p.accel_limits[1]),
            steer: self.steer.clamp(p.steer_limits[0], p.steer_limits[1]),
        }
    }
}

/// Geometry, integration step, and actuator bounds of the vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Wheelbase (m).
    pub wheelbase: f64,
    /// Integration step (s).
    pub dt: f64,
    /// `[min, max]` commanded acceleration (m/s^2).
    pub accel_limits: [f64; 2],
    /// `[min, max]` steering angle (rad).
    pub steer_limits: [f64; 2],
}

impl Default for VehicleParams {
    fn default() -> Self {
        // 1/28-scale car on a desk-scale track.
        Self {
            wheelbase: 0.09,
            dt: 0.05,
            accel_limits: [-3.0, 3.0],
            steer_limits: [-0.45, 0.45],
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.wheelbase > 0.0) {
            return Err(format!("wheelbase must be > 0, got {}", self.wheelbase));
        }
        if !(self.dt > 0.0) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.accel_limits[0] < self.accel_limits[1]) {
            return Err("accel_limits must be ordered [min, max]".into());
        }
        if !(self.steer_limits[0] < self.steer_limits[1]) {
            return Err("steer_limits must be ordered [min, max]".into());
        }
        Ok(())
    }
}

/// Wrap an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    // Fast path: per-step heading increments are small, so one tau shift
    // almost always lands in range.
    if a > std::f64::consts::PI {
        let shifted = a - std::f64::consts::TAU;
        if shifted > std::f64::consts::PI {
            return wrap_angle_slow(a);
        }
        return shifted;
    }
    if a <= -std::f64::consts::PI {
        let shifted = a + std::f64::consts::TAU;
        if shifted <= -std::f64::consts::PI {
            return wrap_angle_slow(a);
        }
        return shifted;
    }
    a
}

#[cold]
fn wrap_angle_slow(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// One Euler step of the kinematic bicycle. Total on finite inputs; controls
/// are clamped to the actuator bounds before integration.
#[inline]
pub fn step_nominal(s: &State, u: &ControlInput, p: &VehicleParams) -> State {
    let u = u.clamped(p);
    let (sin_psi, cos_psi) = s.psi.sin_cos();
    State {
        x: s.x + s.v * cos_psi * p.dt,
        y: s.y + s.v * sin_psi * p.dt,
        psi: wrap_angle(s.psi + s.v / p.wheelbase * u.steer.tan() * p.dt),
        v: s.v + u.accel * p.dt,
    }
}

/// Nominal step plus an additive state-space disturbance; heading rewrapped.
#[inline]
pub fn step_disturbed(s: &State, u: &ControlInput, w: &[f64; STATE_DIM], p: &VehicleParams) -> State {
    let n = step_nominal(s, u, p);
    State {
        x: n.x + w[0],
        y: n.y + w[1],
        psi: wrap_angle(n.psi + w[2]),
        v: n.v + w[3],
    }
}

/// Zero-mean state disturbance; the mask selects which channels are hit.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceModel {
    pub kind: DisturbanceKind,
    pub mask: [bool; STATE_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub enum DisturbanceKind {
    /// Independent normal per masked channel; entries are covariance (not std).
    Gaussian { covariance: [f64; STATE_DIM] },
    /// Symmetric uniform per masked channel.
    Uniform { half_width: [f64; STATE_DIM] },
    /// With probability `probability` per step, a jump of Euclidean norm
    /// `magnitude` in a uniformly random direction over the masked channels.
    Impulse { probability: f64, magnitude: f64 },
}

impl DisturbanceModel {
    /// Gaussian on all four channels with a shared covariance scale.
    pub fn gaussian(covariance: f64) -> Self {
        Self {
            kind: DisturbanceKind::Gaussian {
                covariance: [covariance; STATE_DIM],
            },
            mask: [true; STATE_DIM],
        }
    }

    /// Uniform on all four channels with a shared half-width.
    pub fn uniform(half_width: f64) -> Self {
        Self {
            kind: DisturbanceKind::Uniform {
                half_width: [half_width; STATE_DIM],
            },
            mask: [true; STATE_DIM],
        }
    }

    /// Positional jump noise on `{x, y}`.
    pub fn impulse(probability: f64, magnitude: f64) -> Self {
        Self {
            kind: DisturbanceKind::Impulse { probability, magnitude },
            mask: [true, true, false, false],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.kind {
            DisturbanceKind::Gaussian { covariance } => {
                if covariance.iter().any(|c| !(*c >= 0.0)) {
                    return Err("gaussian covariance entries must be >= 0".into());
                }
            }
            DisturbanceKind::Uniform { half_width } => {
                if half_width.iter().any(|h| !(*h >= 0.0)) {
                    return Err("uniform half-widths must be >= 0".into());
                }
            }
            DisturbanceKind::Impulse { probability, magnitude } => {
                if !(0.0..=1.0).contains(probability) {
                    return Err(format!("impulse probability must be in [0,1], got {probability}"));
                }
                if !(*magnitude >= 0.0) {
                    return Err("impulse magnitude must be >= 0".into());
                }
            }
        }
        Ok(())
    }

    /// Per-channel standard deviation of the marginal disturbance. Used by
    /// tests to size standard-error tolerances.
    pub fn channel_std(&self) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        match &self.kind {
            DisturbanceKind::Gaussian { covariance } => {
                for i in 0..STATE_DIM {
                    if self.mask[i] {
                        out[i] = covariance[i].sqrt();
                    }
                }
            }
            DisturbanceKind::Uniform { half_width } => {
                for i in 0..STATE_DIM {
                    if self.mask[i] {
                        out[i] = half_width[i] / 3f64.sqrt();
                    }
                }
            }
            DisturbanceKind::Impulse { probability, magnitude } => {
                let dims = self.mask.iter().filter(|m| **m).count().max(1) as f64;
                // E[w_c^2] = p * mag^2 / dims by symmetry of the direction draw.
                let std = magnitude * (probability / dims).sqrt();
                for i in 0..STATE_DIM {
                    if self.mask[i] {
                        out[i] = std;
                    }
                }
            }
        }
        out
    }
}

impl DisturbanceModel {
    /// Precompute the per-channel constants so the rollout loops avoid
    /// re-deriving them on every draw.
    pub fn sampler(&self) -> DisturbanceSampler {
        let dims: Vec<usize> = (0..STATE_DIM).filter(|i| self.mask[*i]).collect();
        let kind = match &self.kind {
            DisturbanceKind::Gaussian { covariance } => {
                let mut std = [0.0; STATE_DIM];
                for &i in &dims {
                    std[i] = covariance[i].sqrt();
                }
                SamplerKind::Gaussian { std }
            }
            DisturbanceKind::Uniform { half_width } => SamplerKind::Uniform { half_width: *half_width },
            DisturbanceKind::Impulse { probability, magnitude } => SamplerKind::Impulse {
                probability: *probability,
                magnitude: *magnitude,
            },
        };
        DisturbanceSampler { kind, dims }
    }
}

/// Draw-ready form of a [`DisturbanceModel`]; produces exactly the same
/// stream of vectors as [`sample_disturbance`].
#[derive(Clone, Debug)]
pub struct DisturbanceSampler {
    kind: SamplerKind,
    dims: Vec<usize>,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Gaussian { std: [f64; STATE_DIM] },
    Uniform { half_width: [f64; STATE_DIM] },
    Impulse { probability: f64, magnitude: f64 },
}

impl DisturbanceSampler {
    pub fn sample(&self, rng: &mut CounterRng) -> [f64; STATE_DIM] {
        let mut w = [0.0; STATE_DIM];
        match &self.kind {
            SamplerKind::Gaussian { std } => {
                for &i in &self.dims {
                    w[i] = std[i] * rng.normal();
                }
            }
            SamplerKind::Uniform { half_width } => {
                for &i in &self.dims {
                    w[i] = rng.symmetric(half_width[i]);
                }
            }
            SamplerKind::Impulse { probability, magnitude } => {
                if rng.chance(*probability) {
                    match self.dims.len() {
                        0 => {}
                        1 => {
                            let sign = if rng.uniform() <= 0.5 { -1.0 } else { 1.0 };
                            w[self.dims[0]] = sign * magnitude;
                        }
                        2 => {
                            let theta = std::f64::consts::TAU * rng.uniform();
                            let (sin_t, cos_t) = theta.sin_cos();
                            w[self.dims[0]] = magnitude * cos_t;
                            w[self.dims[1]] = magnitude * sin_t;
                        }
                        _ => {
                            // Uniform direction on the sphere via normalized normals.
                            let mut norm_sq = 0.0;
                            let mut g = [0.0; STATE_DIM];
                            for &i in &self.dims {
                                g[i] = rng.normal();
                                norm_sq += g[i] * g[i];
                            }
                            let norm = norm_sq.sqrt().max(1e-300);
                            for &i in &self.dims {
                                w[i] = magnitude * g[i] / norm;
                            }
                        }
                    }
                }
            }
        }
        w
    }
}

/// Draw one disturbance vector; unmasked channels are exactly zero.
pub fn sample_disturbance(model: &DisturbanceModel, rng: &mut CounterRng) -> [f64; STATE_DIM] {
    model.sampler().sample(rng)
}
