//! Scenario files: everything one episode needs, in one TOML document with
//! sections for track, vehicle, costs, controller sampling, risk, plant
//! noise, and run control. Overrides use dotted paths (`risk.alpha=0.9`) and
//! are applied to the parsed document before deserialization, so unknown keys
//! are rejected with the offending name.

use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerKind, RiskStage};
use crate::dynamics::{DisturbanceKind, DisturbanceModel, State, VehicleParams, STATE_DIM};
use crate::mppi::MppiParams;
use crate::risk::RiskParams;
use crate::track::{CostWeights, Track, TrackConfig};
use crate::CoreError;

/// Plant-noise section of the scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub kind: PlantKind,
    /// Gaussian covariance per masked channel.
    pub scale: Option<f64>,
    /// Uniform half-width per masked channel.
    pub half_width: Option<f64>,
    /// Impulse probability per step.
    pub probability: Option<f64>,
    /// Impulse jump magnitude.
    pub magnitude: Option<f64>,
    /// Perturbed state channels; defaults to all four for gaussian/uniform
    /// and `[x, y]` for impulse.
    pub mask: Option<Vec<Channel>>,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            kind: PlantKind::None,
            scale: None,
            half_width: None,
            probability: None,
            magnitude: None,
            mask: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    #[default]
    None,
    Gaussian,
    Uniform,
    Impulse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    X,
    Y,
    Psi,
    V,
}

impl Channel {
    fn index(self) -> usize {
        match self {
            Channel::X => 0,
            Channel::Y => 1,
            Channel::Psi => 2,
            Channel::V => 3,
        }
    }
}

impl PlantConfig {
    /// Build the disturbance model this section describes.
    pub fn model(&self) -> Result<Option<DisturbanceModel>, String> {
        let mask_from = |default: [bool; STATE_DIM]| -> [bool; STATE_DIM] {
            match &self.mask {
                None => default,
                Some(channels) => {
                    let mut m = [false; STATE_DIM];
                    for c in channels {
                        m[c.index()] = true;
                    }
                    m
                }
            }
        };
        let model = match self.kind {
            PlantKind::None => return Ok(None),
            PlantKind::Gaussian => {
                let scale = self.scale.ok_or("plant.kind = gaussian requires plant.scale")?;
                DisturbanceModel {
                    kind: DisturbanceKind::Gaussian { covariance: [scale; STATE_DIM] },
                    mask: mask_from([true; STATE_DIM]),
                }
            }
            PlantKind::Uniform => {
                let hw = self
                    .half_width
                    .ok_or("plant.kind = uniform requires plant.half_width")?;
                DisturbanceModel {
                    kind: DisturbanceKind::Uniform { half_width: [hw; STATE_DIM] },
                    mask: mask_from([true; STATE_DIM]),
                }
            }
            PlantKind::Impulse => {
                let probability = self
                    .probability
                    .ok_or("plant.kind = impulse requires plant.probability")?;
                let magnitude = self
                    .magnitude
                    .ok_or("plant.kind = impulse requires plant.magnitude")?;
                DisturbanceModel {
                    kind: DisturbanceKind::Impulse { probability, magnitude },
                    mask: mask_from([true, true, false, false]),
                }
            }
        };
        model.validate()?;
        Ok(Some(model))
    }
}

/// Run-control section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub laps: u32,
    pub seed: u64,
    /// Abort after this many simulated seconds without lap progress.
    pub stuck_timeout: f64,
    /// Also emit per-iteration risk summaries.
    pub log_risk: bool,
    /// Start state override; defaults to rest on the start line.
    pub initial_state: Option<[f64; 4]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            laps: 20,
            seed: 1,
            stuck_timeout: 30.0,
            log_risk: false,
            initial_state: None,
        }
    }
}

/// A full experiment description; serializable both ways so run artifacts can
/// echo the effective configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub controller: ControllerKind,
    pub track: TrackConfig,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub costs: CostWeights,
    #[serde(default)]
    pub mppi: MppiParams,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.vehicle.validate().map_err(CoreError::Config)?;
        self.costs.validate().map_err(CoreError::Config)?;
        self.mppi.validate().map_err(CoreError::Config)?;
        self.risk.validate().map_err(CoreError::Config)?;
        self.plant.model().map_err(CoreError::Config)?;
        if self.run.laps < 1 {
            return Err(CoreError::Config("run.laps must be >= 1".into()));
        }
        if !(self.run.stuck_timeout > 0.0) {
            return Err(CoreError::Config("run.stuck_timeout must be > 0".into()));
        }
        Ok(())
    }

    pub fn build_track(&self) -> Result<Track, CoreError> {
        Ok(Track::build(&self.track)?)
    }

    pub fn plant_model(&self) -> Result<Option<DisturbanceModel>, CoreError> {
        self.plant.model().map_err(CoreError::Config)
    }

    /// Start state: configured override, or at rest on the start line facing
    /// along the track.
    pub fn initial_state(&self, track: &Track) -> State {
        match self.run.initial_state {
            Some([x, y, psi, v]) => State::new(x, y, psi, v),
            None => {
                let (point, tangent) = track.frame_at(0.0);
                State::new(point[0], point[1], tangent[1].atan2(tangent[0]), 0.0)
            }
        }
    }

    /// Controller configured as this scenario asks, seeded by the master seed.
    pub fn build_controller(&self) -> Result<Controller, CoreError> {
        let model = self.plant_model()?;
        Ok(Controller::new(
            self.controller,
            self.mppi,
            self.vehicle,
            self.costs,
            RiskStage { params: self.risk, model },
            self.run.seed,
        ))
    }
}

/// Parse a scenario document, applying `key=value` overrides first.
pub fn scenario_from_str(text: &str, overrides: &[(String, String)]) -> Result<Scenario, CoreError> {
    let mut doc: toml::Value = toml::from_str(text)
        .map_err(|e| CoreError::Config(format!("scenario parse error: {e}")))?;
    for (key, value) in overrides {
        apply_override(&mut doc, key, value)?;
    }
    let scenario: Scenario = doc
        .try_into()
        .map_err(|e| CoreError::Config(format!("scenario field error: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

/// Load a scenario file with overrides.
pub fn load_scenario(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Scenario, CoreError> {
    let text = std::fs::read_to_string(path)?;
    scenario_from_str(&text, overrides)
}

/// Set a dotted-path key in the parsed document, creating tables as needed.
/// The value is parsed as a TOML literal, falling back to a bare string.
fn apply_override(doc: &mut toml::Value, key: &str, value: &str) -> Result<(), CoreError> {
    let parsed = parse_override_value(value);
    let mut cursor = doc;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CoreError::Config(format!("override key '{key}' is malformed")));
    }
    for part in &parts[..parts.len() - 1] {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| CoreError::Config(format!("override key '{key}': '{part}' is not a table")))?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let leaf = parts.last().unwrap();
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| CoreError::Config(format!("override key '{key}' does not address a table")))?;
    table.insert(leaf.to_string(), parsed);
    Ok(())
}

fn parse_override_value(value: &str) -> toml::Value {
    let wrapped = format!("v = {value}");
    match toml::from_str::<toml::map::Map<String, toml::Value>>(&wrapped) {
        Ok(mut table) => table.remove("v").unwrap(),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// The shipped desk-scale default: RA-MPPI on the stadium track with gaussian
/// plant noise. Mirrors `scenarios/default.toml`.
pub fn default_scenario() -> Scenario {
    Scenario {
        controller: ControllerKind::RaMppi,
        track: TrackConfig::stadium(),
        vehicle: VehicleParams::default(),
        costs: CostWeights::default(),
        mppi: MppiParams::default(),
        risk: RiskParams::default(),
        plant: PlantConfig {
            kind: PlantKind::Gaussian,
            scale: Some(0.0004),
            ..Default::default()
        },
        run: RunConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
controller = "ra-mppi"

[track]
half_width = 0.3
start_pose = { x = 0.0, y = 0.0, heading_deg = 0.0 }
segments = [
    { straight = 3.0 },
    { arc = { radius = 0.3, angle_deg = 90.0, direction = "left" } },
    { straight = 1.5075222039230622 },
    { arc = { radius = 0.3, angle_deg = 90.0, direction = "left" } },
    { straight = 3.0 },
    { arc = { radius = 0.3, angle_deg = 90.0, direction = "left" } },
    { straight = 1.5075222039230622 },
    { arc = { radius = 0.3, angle_deg = 90.0, direction = "left" } },
]

[track.obstacle_placement]
seed = 7
count = 10
radius = 0.1

[plant]
kind = "gaussian"
scale = 0.0004
"#
        .to_string()
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = scenario_from_str(&minimal_toml(), &[]).unwrap();
        assert_eq!(s.controller, ControllerKind::RaMppi);
        assert_eq!(s.mppi.horizon, 30);
        assert_eq!(s.risk.alpha, 0.7);
        assert_eq!(s.run.laps, 20);
        let track = s.build_track().unwrap();
        assert_eq!(track.obstacles().len(), 10);
    }

    #[test]
    fn overrides_rewrite_nested_and_top_level_keys() {
        let overrides = vec![
            ("controller".to_string(), "mppi".to_string()),
            ("risk.alpha".to_string(), "0.9".to_string()),
            ("run.seed".to_string(), "123".to_string()),
            ("plant.kind".to_string(), "impulse".to_string()),
            ("plant.probability".to_string(), "0.02".to_string()),
            ("plant.magnitude".to_string(), "0.12".to_string()),
        ];
        let s = scenario_from_str(&minimal_toml(), &overrides).unwrap();
        assert_eq!(s.controller, ControllerKind::Mppi);
        assert_eq!(s.risk.alpha, 0.9);
        assert_eq!(s.run.seed, 123);
        assert_eq!(s.plant.kind, PlantKind::Impulse);
    }

    #[test]
    fn unknown_override_keys_are_rejected_with_their_name() {
        let overrides = vec![("risk.banana".to_string(), "1".to_string())];
        let err = scenario_from_str(&minimal_toml(), &overrides).unwrap_err();
        assert!(err.to_string().contains("banana"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let overrides = vec![("risk.alpha".to_string(), "1.5".to_string())];
        assert!(scenario_from_str(&minimal_toml(), &overrides).is_err());
        let overrides = vec![("mppi.gamma".to_string(), "9.0".to_string())];
        assert!(scenario_from_str(&minimal_toml(), &overrides).is_err());
    }

    #[test]
    fn infinite_c_u_parses() {
        let overrides = vec![("risk.c_u".to_string(), "inf".to_string())];
        let s = scenario_from_str(&minimal_toml(), &overrides).unwrap();
        assert!(s.risk.c_u.is_infinite());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = default_scenario();
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn default_initial_state_sits_on_the_start_line() {
        let s = default_scenario();
        let track = s.build_track().unwrap();
        let x0 = s.initial_state(&track);
        assert_eq!(x0.x, 0.0);
        assert_eq!(x0.y, 0.0);
        assert_eq!(x0.psi, 0.0);
        assert_eq!(x0.v, 0.0);
    }

    #[test]
    fn impulse_mask_defaults_to_position_channels() {
        let cfg = PlantConfig {
            kind: PlantKind::Impulse,
            probability: Some(0.02),
            magnitude: Some(0.12),
            ..Default::default()
        };
        let model = cfg.model().unwrap().unwrap();
        assert_eq!(model.mask, [true, true, false, false]);
    }
}
