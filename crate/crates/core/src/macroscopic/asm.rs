use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscopic::{GridSpec, MacroField};
use crate::sensing::MeasurementGrid;
use crate::units::per_hour_to_per_second;

/// Adaptive smoothing parameters, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsmParams {
    /// Characteristic speed in free flow, positive downstream.
    pub c_free: f64,
    /// Characteristic speed in congestion, negative.
    pub c_cong: f64,
    pub sigma_m: f64,
    pub tau_s: f64,
    /// Speed around which the congested estimate takes over.
    pub v_thr: f64,
    pub dv: f64,
}

impl AsmParams {
    /// 21.4 and −4.5 m/s wave speeds, 15.6 m/s crossover with 4.5 m/s width;
    /// σ is half the mean detector spacing (100 m for a single detector) and
    /// τ half the aggregation window.
    pub fn defaults_for(input: &MeasurementGrid) -> Self {
        let sites = input.sites();
        let sigma_m = if sites.len() > 1 {
            let (lo, hi) = sites.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
                (a.min(s.position_m), b.max(s.position_m))
            });
            0.5 * (hi - lo) / (sites.len() - 1) as f64
        } else {
            100.0
        };
        let (t0, t1) = input.interval(0);
        AsmParams {
            c_free: 21.4,
            c_cong: -4.5,
            sigma_m,
            tau_s: 0.5 * (t1 - t0),
            v_thr: 15.6,
            dv: 4.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_free > 0.0 && 0.0 > self.c_cong) {
            return Err(Error::validation("asm", "need c_free > 0 > c_cong"));
        }
        if !(self.sigma_m > 0.0 && self.tau_s > 0.0 && self.dv > 0.0) {
            return Err(Error::validation("asm", "sigma, tau and dv must be positive"));
        }
        if !self.v_thr.is_finite() {
            return Err(Error::NonFinite("asm v_thr"));
        }
        Ok(())
    }
}

/// The free-flow and congested kernel averages before they are blended.
#[derive(Debug, Clone, PartialEq)]
pub struct AsmComponents {
    pub grid: GridSpec,
    pub v_free: Vec<f64>,
    pub v_cong: Vec<f64>,
    pub q_free: Vec<f64>,
    pub q_cong: Vec<f64>,
}

struct Datum {
    x: f64,
    t: f64,
    z: f64,
}

/// One value per detector and interval: count-weighted lane speed and mean
/// per-lane flow (veh/s).
fn inputs(grid_in: &MeasurementGrid) -> (Vec<Datum>, Vec<Datum>) {
    let (mut speeds, mut flows) = (Vec::new(), Vec::new());
    for (s, site) in grid_in.sites().iter().enumerate() {
        for i in 0..grid_in.num_intervals() {
            let (a, b) = grid_in.interval(i);
            let t = 0.5 * (a + b);
            let (mut vw, mut w, mut vs, mut nv) = (0.0, 0.0, 0.0, 0usize);
            let (mut qs, mut nq) = (0.0, 0usize);
            for k in 0..site.lanes.len() {
                let c = grid_in.cell(s, k, i);
                if let Some(v) = c.speed_mps {
                    vw += v * c.speed_weight;
                    w += c.speed_weight;
                    vs += v;
                    nv += 1;
                }
                if let Some(q) = c.flow_vph {
                    qs += per_hour_to_per_second(q);
                    nq += 1;
                }
            }
            if nv > 0 {
                let z = if w > 0.0 { vw / w } else { vs / nv as f64 };
                speeds.push(Datum { x: site.position_m, t, z });
            }
            if nq > 0 {
                flows.push(Datum {
                    x: site.position_m,
                    t,
                    z: qs / nq as f64,
                });
            }
        }
    }
    (speeds, flows)
}

/// Kernel average at (x, t) along characteristics of speed `c`. Only data
/// within 3σ and 3τ of the shifted kernel count; if none do, all data count.
fn smooth(data: &[Datum], x: f64, t: f64, c: f64, p: &AsmParams) -> f64 {
    let exponent = |d: &Datum| {
        let dx = x - d.x;
        let dt = t - d.t - dx / c;
        (dx.abs() <= 3.0 * p.sigma_m && dt.abs() <= 3.0 * p.tau_s, -dx.abs() / p.sigma_m - dt.abs() / p.tau_s)
    };
    let mut inside = false;
    let mut top = f64::NEG_INFINITY;
    for d in data {
        let (ok, e) = exponent(d);
        if ok {
            if !inside {
                inside = true;
                top = f64::NEG_INFINITY;
            }
            top = top.max(e);
        } else if !inside {
            top = top.max(e);
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for d in data {
        let (ok, e) = exponent(d);
        if ok || !inside {
            let w = (e - top).exp();
            num += w * d.z;
            den += w;
        }
    }
    num / den
}

/// Free-flow and congested kernel averages of speed and flow on every cell.
///
/// Only needs nonzero wave speeds, so the degenerate equal-speed case can be
/// inspected.
pub fn asm_components(grid_in: &MeasurementGrid, grid: &GridSpec, p: &AsmParams) -> Result<AsmComponents> {
    if !(p.c_free.is_finite() && p.c_cong.is_finite() && p.c_free != 0.0 && p.c_cong != 0.0) {
        return Err(Error::validation("asm", "wave speeds must be finite and nonzero"));
    }
    if !(p.sigma_m > 0.0 && p.tau_s > 0.0) {
        return Err(Error::validation("asm", "sigma and tau must be positive"));
    }
    grid.validate()?;
    let (speeds, flows) = inputs(grid_in);
    if speeds.is_empty() || flows.is_empty() {
        return Err(Error::validation("measurements", "no valid speed or flow data"));
    }
    let n = grid.len();
    let mut out = AsmComponents {
        grid: *grid,
        v_free: Vec::with_capacity(n),
        v_cong: Vec::with_capacity(n),
        q_free: Vec::with_capacity(n),
        q_cong: Vec::with_capacity(n),
    };
    for it in 0..grid.nt() {
        let t = grid.t_center(it);
        for jx in 0..grid.nx() {
            let x = grid.x_center(jx);
            out.v_free.push(smooth(&speeds, x, t, p.c_free, p));
            out.v_cong.push(smooth(&speeds, x, t, p.c_cong, p));
            out.q_free.push(smooth(&flows, x, t, p.c_free, p));
            out.q_cong.push(smooth(&flows, x, t, p.c_cong, p));
        }
    }
    Ok(out)
}

/// Adaptive smoothing of sparse detector data onto a full grid. Output is
/// per lane; density is q/v and the cell is invalid where v is zero.
pub fn asm_reconstruct(grid_in: &MeasurementGrid, grid: &GridSpec, p: &AsmParams) -> Result<MacroField> {
    p.validate()?;
    let c = asm_components(grid_in, grid, p)?;
    let mut f = MacroField::invalid(*grid, vec![1.0; grid.nx()]);
    for k in 0..grid.len() {
        let w = 0.5 * (1.0 + ((p.v_thr - c.v_free[k].min(c.v_cong[k])) / p.dv).tanh());
        let v = w * c.v_cong[k] + (1.0 - w) * c.v_free[k];
        let q = w * c.q_cong[k] + (1.0 - w) * c.q_free[k];
        f.v[k] = v;
        f.q[k] = q;
        if v > 0.0 {
            f.rho[k] = q / v;
            f.valid[k] = true;
        }
    }
    Ok(f)
}
