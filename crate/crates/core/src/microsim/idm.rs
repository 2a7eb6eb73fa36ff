//! Intelligent Driver Model.

use crate::error::{Error, Result};
use crate::scenario::ParameterSet;

/// Hard floor on any acceleration, m/s².
pub const EMERGENCY_DECEL: f64 = 8.0;

/// Desired space gap s*(v, Δv) = sj + max(0, v·τ + v·Δv / (2√(ab))).
///
/// `dv` is follower speed minus leader speed.
pub fn desired_gap(v: f64, dv: f64, p: &ParameterSet) -> f64 {
    let dynamic = v * p.tau + v * dv / (2.0 * (p.a * p.b).sqrt());
    p.sj + dynamic.max(0.0)
}

/// Follower acceleration, clamped below at the emergency deceleration.
///
/// Without a leader the interaction term is dropped and `s`/`dv` are ignored.
pub fn idm_acceleration(
    v: f64,
    dv: f64,
    s: f64,
    leader_exists: bool,
    p: &ParameterSet,
) -> Result<f64> {
    if !v.is_finite() || (leader_exists && !(dv.is_finite() && s.is_finite())) {
        return Err(Error::NonFinite("idm_acceleration"));
    }
    let free = 1.0 - (v / p.vf).powf(p.delta);
    let interaction = if leader_exists {
        if s <= 0.0 {
            return Ok(-EMERGENCY_DECEL);
        }
        let ratio = desired_gap(v, dv, p) / s;
        ratio * ratio
    } else {
        0.0
    };
    Ok((p.a * (free - interaction)).max(-EMERGENCY_DECEL))
}

/// Steady-state gap behind a leader moving at constant `v` (requires v < vf).
pub fn equilibrium_gap(v: f64, p: &ParameterSet) -> f64 {
    desired_gap(v, 0.0, p) / (1.0 - (v / p.vf).powf(p.delta)).sqrt()
}

/// One explicit ballistic step. Returns (new position, new speed, applied acceleration).
///
/// The acceleration is reduced so that the vehicle stops rather than reverses.
pub fn ballistic_update(x: f64, v: f64, accel: f64, dt: f64) -> (f64, f64, f64) {
    let accel = if v + accel * dt < 0.0 { -v / dt } else { accel };
    let v_new = (v + accel * dt).max(0.0);
    let x_new = x + v * dt + 0.5 * accel * dt * dt;
    (x_new, v_new, accel)
}
