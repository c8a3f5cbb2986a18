//! Monte-Carlo CVaR over disturbed rollouts and the soft trajectory filter.
//!
//! Each sampled candidate gets N disturbed rollouts; their accumulated running
//! costs form an empirical loss distribution. The tail mean at confidence
//! `alpha` (CVaR) is compared against the constraint bound, and violating
//! candidates have `A * CVaR` added to their trajectory cost, which the
//! exponential weighting then suppresses.

use serde::{Deserialize, Serialize};

use crate::dynamics::{sample_disturbance, step_disturbed, ControlInput, DisturbanceModel, State, VehicleParams};
use crate::rng::CounterRng;
use crate::track::{CostWeights, Track};

/// Risk-evaluation constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskParams {
    /// Disturbed rollouts per candidate (N).
    pub samples: usize,
    /// CVaR confidence level, in (0, 1).
    pub alpha: f64,
    /// CVaR constraint upper bound.
    pub c_u: f64,
    /// Violation-cost weight A.
    pub a: f64,
    /// Variance scaling factor B (mean-preserving).
    pub b: f64,
    /// Which empirical tail estimator to use.
    pub estimator: CvarEstimator,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            samples: 64,
            alpha: 0.7,
            c_u: 0.6,
            a: 10.0,
            b: 1.0,
            estimator: CvarEstimator::ThresholdInclusive,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples < 1 {
            return Err("risk samples must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(self.a >= 0.0) {
            return Err(format!("violation weight a must be >= 0, got {}", self.a));
        }
        if !(self.b >= 0.0) {
            return Err(format!("scaling factor b must be >= 0, got {}", self.b));
        }
        if self.c_u.is_nan() {
            return Err("c_u must not be NaN".into());
        }
        Ok(())
    }
}

/// Choice of empirical tail estimator.
///
/// `ThresholdInclusive` averages every sample with value >= VaR (the
/// indicator-function definition). `UpperQuantile` averages the top
/// `ceil((1-alpha) N)` samples; the two differ under ties or when `alpha N`
/// is not integral, e.g. {1..10} at alpha 0.7 gives 8.5 vs 9.0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvarEstimator {
    #[default]
    ThresholdInclusive,
    UpperQuantile,
}

/// Tail statistics of one candidate's risk-cost sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// Empirical value-at-risk at the configured confidence.
    pub var: f64,
    /// Empirical conditional value-at-risk (tail mean).
    pub cvar: f64,
    /// `A * cvar` when the constraint bound is exceeded, else zero.
    pub violation_cost: f64,
    /// Number of samples in the averaged tail.
    pub n_tail: usize,
}

/// Propagate the disturbed dynamics under a fixed candidate control sequence
/// and accumulate the running risk cost over `k = 0..K-1` (initial state
/// included, terminal state excluded). `None` disturbance means a noise-free
/// replay of the nominal path.
pub fn risk_rollout(
    x0: &State,
    controls: &[ControlInput],
    model: Option<&DisturbanceModel>,
    track: &Track,
    weights: &CostWeights,
    vehicle: &VehicleParams,
    rng: &mut CounterRng,
) -> f64 {
    let mut x = *x0;
    let mut loss = 0.0;
    for u in controls {
        loss += track.step_cost(x.position(), weights).0;
        let w = match model {
            Some(m) => sample_disturbance(m, rng),
            None => [0.0; 4],
        };
        x = step_disturbed(&x, u, &w, vehicle);
    }
    loss
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean(xs: &[f64]) -> f64 {
    neumaier_sum(xs) / xs.len() as f64
}

/// Mean-preserving variance scaling: `L_a = B (L - mean) + mean`.
/// `B = 1` is the identity.
pub fn scale_costs(costs: &[f64], b: f64) -> Vec<f64> {
    if b == 1.0 {
        return costs.to_vec();
    }
    let m = mean(costs);
    costs.iter().map(|&c| b.mul_add(c - m, m)).collect()
}

/// Smallest sample whose empirical CDF rank reaches `alpha`:
/// the element at ascending rank `ceil(alpha N)`.
pub fn var_empirical(costs: &[f64], alpha: f64) -> f64 {
    debug_assert!(!costs.is_empty());
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("risk costs must be comparable"));
    sorted[var_rank(costs.len(), alpha) - 1]
}

/// 1-based ascending rank of the VaR sample: smallest `r` with `r/N >= alpha`.
fn var_rank(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let mut r = ((alpha * nf).ceil() as usize).clamp(1, n);
    // Pin the count-based definition against ceil rounding at exact multiples.
    while r > 1 && (r - 1) as f64 / nf >= alpha {
        r -= 1;
    }
    while (r as f64) / nf < alpha && r < n {
        r += 1;
    }
    r
}

/// Empirical VaR and CVaR of a sample set.
pub fn cvar_empirical(costs: &[f64], alpha: f64, estimator: CvarEstimator) -> RiskReport {
    debug_assert!(!costs.is_empty());
    let n = costs.len();
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("risk costs must be comparable"));
    let (var, tail_start) = match estimator {
        CvarEstimator::ThresholdInclusive => {
            let var = sorted[var_rank(n, alpha) - 1];
            // Ties at the threshold are all included.
            (var, sorted.partition_point(|&c| c < var))
        }
        CvarEstimator::UpperQuantile => {
            // ceil((1 - alpha) N) with a snap against fp noise at integers.
            let raw = (1.0 - alpha) * n as f64;
            let count = ((raw - 1e-9).ceil() as usize).clamp(1, n);
            (sorted[n - count], n - count)
        }
    };
    let n_tail = n - tail_start;
    // Plain ascending sum: exactly the arithmetic of the indicator-sum
    // definition, so brute-force oracles reproduce it bit for bit.
    let cvar = sorted[tail_start..].iter().sum::<f64>() / n_tail as f64;
    RiskReport { var, cvar, violation_cost: 0.0, n_tail }
}

/// Constraint-violation penalty: `A * cvar` iff `cvar > c_u` (strict).
pub fn violation_cost(cvar: f64, params: &RiskParams) -> f64 {
    if cvar > params.c_u {
        params.a * cvar
    } else {
        0.0
    }
}

/// Full per-candidate risk evaluation: variance scaling, tail estimation,
/// and the constraint-violation penalty.
pub fn evaluate_risk(costs: &[f64], params: &RiskParams) -> RiskReport {
    let scaled = scale_costs(costs, params.b);
    let mut report = cvar_empirical(&scaled, params.alpha, params.estimator);
    report.violation_cost = violation_cost(report.cvar, params);
    report
}

/// Add each candidate's violation cost to its trajectory cost.
pub fn filter_costs(costs: &[f64], reports: &[RiskReport]) -> Vec<f64> {
    assert_eq!(costs.len(), reports.len());
    costs
        .iter()
        .zip(reports)
        .map(|(&s, r)| s + r.violation_cost)
        .collect()
}
