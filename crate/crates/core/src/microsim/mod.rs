//! Discrete-time freeway microsimulation: IDM car following plus a
//! motivation-based lane-change model.

pub mod idm;
pub mod lane_change;
mod layout;
mod trajectory;
mod world;

use crate::error::Result;
use crate::scenario::{ParameterSet, ScenarioConfig};

pub use idm::{ballistic_update, desired_gap, equilibrium_gap, idm_acceleration, EMERGENCY_DECEL};
pub use lane_change::{
    lane_change_decide, AdjacentLane, LaneAction, LaneDecision, Neighbor, Neighborhood, Side,
};
pub use layout::StrategicNeed;
pub use trajectory::{TrajSample, Track, TrajectoryLog, TRAJECTORY_HEADER};
pub use world::{LaneChangeEvent, StepReport, VehicleState, World};

/// Simulates the scenario with its own seed.
pub fn run(scenario: &ScenarioConfig, params: &ParameterSet) -> Result<TrajectoryLog> {
    run_with_seed(scenario, params, scenario.simulation.seed)
}

/// Simulates `[0, horizon]` with a fixed step and records every vehicle at every step.
pub fn run_with_seed(
    scenario: &ScenarioConfig,
    params: &ParameterSet,
    seed: u64,
) -> Result<TrajectoryLog> {
    let mut world = World::new(scenario, params, seed)?;
    let dt = scenario.simulation.dt_s;
    let steps = (scenario.simulation.horizon_s / dt).round() as usize;
    let mut tracks: Vec<Track> = Vec::new();
    for _ in 0..steps {
        let report = world.step(dt)?;
        let t = world.time();
        for v in &report.exited {
            let track = &mut tracks[v.id as usize];
            track.samples.push(TrajSample {
                t,
                x: v.position,
                v: v.speed,
                lane: v.lane,
            });
            track.exited_at = Some(t);
        }
        for v in world.vehicles() {
            let sample = TrajSample {
                t,
                x: v.position,
                v: v.speed,
                lane: v.lane,
            };
            // ids are dense and issued in insertion order
            if v.id as usize == tracks.len() {
                tracks.push(Track {
                    id: v.id,
                    length: v.length,
                    inserted_at: t,
                    exited_at: None,
                    samples: vec![sample],
                });
            } else {
                tracks[v.id as usize].samples.push(sample);
            }
        }
    }
    Ok(TrajectoryLog {
        horizon: scenario.simulation.horizon_s,
        road_length: scenario.network.length_m,
        tracks,
    })
}
