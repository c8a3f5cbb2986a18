//! Sampling-based model-predictive control for a small race car on a closed
//! track: the baseline MPPI controller, a risk-aware variant that softly
//! filters sampled trajectories by their Monte-Carlo CVaR, and the
//! closed-loop simulator, grid search, and throughput benchmark built on top.
//!
//! Everything is deterministic given a scenario and master seed: all noise is
//! drawn from counter-addressed streams, so results are independent of thread
//! count and scheduling.

pub mod controller;
pub mod dynamics;
pub mod mppi;
pub mod report;
pub mod rng;
pub mod risk;
pub mod scenario;
pub mod sim;
pub mod track;

pub use controller::{Controller, ControllerKind};
pub use scenario::Scenario;
pub use sim::{run_episode, EpisodeMetrics};

/// Errors surfaced by scenario loading, track building, and episode runs.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("config error: {0}")]
    Config(String),
    #[error("track error: {0}")]
    Track(#[from] track::TrackError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
