//! Scenario definition: network, demand, detectors, parameters.
//!
//! Scenario files are TOML with the sections `[network]`, `[demand]`,
//! `[[detectors]]`, `[simulation]`, `[defaults]` and an optional
//! `[ground_truth]`. All quantities are SI (m, s) except demand rates (veh/h).

mod demand;
mod network;
mod params;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use demand::{sample_arrivals, sample_departures, DemandProfile, Destination, OriginDemand};
pub use network::{OffRamp, OnRamp, RoadNetwork};
pub use params::{ParamId, ParameterBounds, ParameterSet, IDM_DELTA};

/// Reserved origin/destination id for the upstream mainline boundary and the
/// downstream mainline end.
pub const MAINLINE: &str = "mainline";

const SYNTHETIC_MERGE: &str = include_str!("../../scenarios/synthetic_merge.toml");

/// A lane-specific point detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub position_m: f64,
    /// Local lane indices covered at `position_m`.
    pub lanes: Vec<usize>,
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub horizon_s: f64,
    pub dt_s: f64,
    pub seed: u64,
    pub vehicle_length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub network: RoadNetwork,
    pub demand: DemandProfile,
    pub detectors: Vec<DetectorSpec>,
    pub simulation: SimulationSettings,
    pub defaults: ParameterSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<ParameterSet>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulation;
        if !(sim.horizon_s.is_finite() && sim.horizon_s > 0.0) {
            return Err(Error::validation("simulation.horizon_s", "must be positive"));
        }
        if !(sim.dt_s > 0.0 && sim.dt_s <= 0.5) {
            return Err(Error::validation(
                "simulation.dt_s",
                format!("must lie in (0, 0.5], got {}", sim.dt_s),
            ));
        }
        if !(sim.vehicle_length_m.is_finite() && sim.vehicle_length_m > 0.0) {
            return Err(Error::validation("simulation.vehicle_length_m", "must be positive"));
        }
        self.network.validate()?;
        self.demand.validate(&self.network, sim.horizon_s)?;
        for (i, d) in self.detectors.iter().enumerate() {
            let field = format!("detectors[{i}]");
            if !(d.position_m.is_finite() && (0.0..=self.network.length_m).contains(&d.position_m))
            {
                return Err(Error::validation(
                    format!("{field}.position_m"),
                    format!(
                        "{} m lies outside the {} m network",
                        d.position_m, self.network.length_m
                    ),
                ));
            }
            if !(d.window_s.is_finite() && d.window_s > 0.0) {
                return Err(Error::validation(format!("{field}.window_s"), "must be positive"));
            }
            if d.lanes.is_empty() {
                return Err(Error::validation(format!("{field}.lanes"), "no lanes covered"));
            }
            let count = self.network.lane_count(d.position_m);
            if let Some(&bad) = d.lanes.iter().find(|&&l| l >= count) {
                return Err(Error::validation(
                    format!("{field}.lanes"),
                    format!("lane {bad} does not exist at {} m ({count} lanes)", d.position_m),
                ));
            }
        }
        self.defaults.validate()?;
        if let Some(gt) = &self.ground_truth {
            gt.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Copy with every demand rate set to zero.
    pub fn without_demand(&self) -> Self {
        let mut s = self.clone();
        for o in &mut s.demand.origins {
            o.rates_vph.iter_mut().for_each(|r| *r = 0.0);
        }
        s
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml_str(&text, &path.display().to_string())
}

/// 1300 m two-lane corridor with a 300 m acceleration lane from an on-ramp.
///
/// Detectors sit at 700 m (upstream of the merge), 900 m (merge zone) and
/// 1150 m (downstream), aggregating over 50 s. Demand volumes come from the
/// bundled `scenarios/synthetic_merge.toml`.
pub fn build_synthetic_merge() -> ScenarioConfig {
    ScenarioConfig::from_toml_str(SYNTHETIC_MERGE, "synthetic_merge.toml")
        .expect("bundled scenario is valid")
}
