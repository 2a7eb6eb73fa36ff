//! Goodness of fit between observed and simulated traffic data.
//!
//! Errors are reported in field units: vph, mph, % and veh/mile.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscopic::MacroField;
use crate::scenario::{ParameterSet, ScenarioConfig};
use crate::sensing::{simulate_detectors_live, DetectorCell, MeasurementGrid};
use crate::units::{mps_to_mph, per_hour_to_per_second, per_meter_to_per_mile, per_second_to_per_hour};

/// Objective value returned when the simulation faults.
pub const PENALTY: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Flow,
    Speed,
    Occupancy,
    Density,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Flow, Quantity::Speed, Quantity::Occupancy, Quantity::Density];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Flow => "flow",
            Quantity::Speed => "speed",
            Quantity::Occupancy => "occupancy",
            Quantity::Density => "density",
        }
    }

    /// Reporting unit at detectors (per lane).
    pub fn unit(self) -> &'static str {
        match self {
            Quantity::Flow => "vph",
            Quantity::Speed => "mph",
            Quantity::Occupancy => "%",
            Quantity::Density => "vpm",
        }
    }

    /// Detector value in reporting units; density is derived as q/v.
    pub fn of_cell(self, c: &DetectorCell) -> Option<f64> {
        match self {
            Quantity::Flow => c.flow_vph,
            Quantity::Speed => c.speed_mps.map(mps_to_mph),
            Quantity::Occupancy => c.occupancy_pct,
            Quantity::Density => match (c.flow_vph, c.speed_mps) {
                (Some(q), Some(v)) if v > 0.0 => Some(per_meter_to_per_mile(per_hour_to_per_second(q) / v)),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "flow" | "q" => Ok(Quantity::Flow),
            "speed" | "v" => Ok(Quantity::Speed),
            "occupancy" | "o" => Ok(Quantity::Occupancy),
            "density" | "rho" => Ok(Quantity::Density),
            other => Err(Error::validation("quantity", format!("unknown quantity {other:?}"))),
        }
    }
}

/// Root mean squared difference of paired values.
pub fn rmse(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b) * (a - b);
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// RMSE over detector cells present in both grids.
pub fn rmse_detectors(obs: &MeasurementGrid, sim: &MeasurementGrid, z: Quantity) -> Result<f64> {
    if !obs.same_geometry(sim) {
        return Err(Error::Geometry(
            "detector grids differ in positions, lanes or intervals".into(),
        ));
    }
    let pairs = obs
        .cells()
        .iter()
        .zip(sim.cells())
        .filter_map(|(a, b)| Some((z.of_cell(a)?, z.of_cell(b)?)));
    rmse(pairs).ok_or(Error::EmptyOverlap("detector cells"))
}

fn macro_value(f: &MacroField, k: usize, z: Quantity) -> f64 {
    match z {
        Quantity::Flow => per_second_to_per_hour(f.q[k]),
        Quantity::Speed => mps_to_mph(f.v[k]),
        Quantity::Density => per_meter_to_per_mile(f.rho[k]),
        Quantity::Occupancy => unreachable!(),
    }
}

/// RMSE over cells valid in both fields.
pub fn rmse_macro(obs: &MacroField, sim: &MacroField, z: Quantity) -> Result<f64> {
    if z == Quantity::Occupancy {
        return Err(Error::validation("quantity", "occupancy is not defined on macroscopic fields"));
    }
    if !obs.grid.same_as(&sim.grid) {
        return Err(Error::Geometry(format!(
            "macro grids differ: {:?} vs {:?}",
            obs.grid, sim.grid
        )));
    }
    let pairs = (0..obs.grid.len())
        .filter(|&k| obs.valid[k] && sim.valid[k])
        .map(|k| (macro_value(obs, k, z), macro_value(sim, k, z)));
    rmse(pairs).ok_or(Error::EmptyOverlap("macro cells"))
}

/// Simulates `theta` with `seed` and scores the detector output against `obs`.
pub fn try_objective(
    obs: &MeasurementGrid,
    scenario: &ScenarioConfig,
    theta: &ParameterSet,
    z: Quantity,
    seed: u64,
) -> Result<f64> {
    let sim = simulate_detectors_live(scenario, theta, seed)?;
    rmse_detectors(obs, &sim, z)
}

/// [`try_objective`] with the scenario's own seed; any failure scores [`PENALTY`].
pub fn objective(obs: &MeasurementGrid, scenario: &ScenarioConfig, theta: &ParameterSet, z: Quantity) -> f64 {
    objective_with_seed(obs, scenario, theta, z, scenario.simulation.seed)
}

pub fn objective_with_seed(
    obs: &MeasurementGrid,
    scenario: &ScenarioConfig,
    theta: &ParameterSet,
    z: Quantity,
    seed: u64,
) -> f64 {
    match try_objective(obs, scenario, theta, z, seed) {
        Ok(v) if v.is_finite() => v,
        _ => PENALTY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macroscopic::GridSpec;
    use crate::sensing::DetectorSite;

    fn speed_grid(values: &[Option<f64>]) -> MeasurementGrid {
        let site = DetectorSite {
            position_m: 100.0,
            lanes: vec![0],
        };
        let bounds = (0..=values.len()).map(|k| k as f64 * 50.0).collect();
        let mut g = MeasurementGrid::new(vec![site], bounds).unwrap();
        for (i, v) in values.iter().enumerate() {
            g.cell_mut(0, 0, i).flow_vph = *v;
        }
        g
    }

    #[test]
    fn hand_example() {
        let obs = speed_grid(&[Some(10.0), Some(20.0)]);
        let sim = speed_grid(&[Some(13.0), Some(16.0)]);
        let r = rmse_detectors(&obs, &sim, Quantity::Flow).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((r - 3.5355).abs() < 1e-4);
        assert_eq!(rmse_detectors(&obs, &obs, Quantity::Flow).unwrap(), 0.0);
    }

    #[test]
    fn missing_cells_are_excluded() {
        let obs = speed_grid(&[Some(10.0), None, Some(5.0)]);
        let sim = speed_grid(&[Some(13.0), Some(100.0), Some(5.0)]);
        let r = rmse_detectors(&obs, &sim, Quantity::Flow).unwrap();
        assert!((r - (9.0f64 / 2.0).sqrt()).abs() < 1e-12);
        let none = speed_grid(&[None, None, None]);
        assert!(matches!(rmse_detectors(&none, &sim, Quantity::Flow), Err(Error::EmptyOverlap(_))));
    }

    #[test]
    fn geometry_mismatch() {
        let a = speed_grid(&[Some(1.0)]);
        let b = speed_grid(&[Some(1.0), Some(2.0)]);
        assert!(matches!(rmse_detectors(&a, &b, Quantity::Flow), Err(Error::Geometry(_))));
    }

    fn field(values: impl Fn(usize) -> f64) -> MacroField {
        let grid = GridSpec::new(40.0, 40.0, 10.0, 10.0).unwrap();
        let mut f = MacroField::invalid(grid, vec![1.0; 4]);
        for k in 0..grid.len() {
            f.v[k] = values(k);
            f.q[k] = 0.5;
            f.rho[k] = 0.5 / f.v[k];
            f.valid[k] = true;
        }
        f
    }

    #[test]
    fn macro_offset_and_checkerboard() {
        let base = field(|_| 20.0);
        let shifted = field(|_| 20.0 + crate::units::mph_to_mps(3.0));
        let r = rmse_macro(&base, &shifted, Quantity::Speed).unwrap();
        assert!((r - 3.0).abs() < 1e-9);
        let board = field(|k| 20.0 + crate::units::mph_to_mps(if (k / 4 + k % 4) % 2 == 0 { 1.0 } else { -1.0 }));
        assert!((rmse_macro(&base, &board, Quantity::Speed).unwrap() - 1.0).abs() < 1e-9);
        assert!(rmse_macro(&base, &base, Quantity::Occupancy).is_err());
    }

    #[test]
    fn quantity_parsing() {
        assert_eq!("Speed".parse::<Quantity>().unwrap(), Quantity::Speed);
        assert_eq!("rho".parse::<Quantity>().unwrap(), Quantity::Density);
        assert!("volume".parse::<Quantity>().is_err());
    }
}
