//! Spatiotemporal traffic fields: Edie estimates from trajectories and
//! adaptive-smoothing reconstruction from detector grids.

mod asm;
mod edie;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::RoadNetwork;
use crate::sensing::MeasurementGrid;
use crate::units::{
    mph_to_mps, mps_to_mph, per_hour_to_per_second, per_meter_to_per_mile,
    per_mile_to_per_meter, per_second_to_per_hour,
};

pub use asm::{asm_components, asm_reconstruct, AsmComponents, AsmParams};
pub use edie::{edie_fields, edie_totals, EdieTotals};

pub const MACRO_HEADER: [&str; 6] = ["t_s", "x_m", "q_vphpl", "rho_vpmpl", "v_mph", "valid"];

/// Rectangular space-time domain split into cells. The last row or column
/// is shorter when the cell size does not divide the extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub length_m: f64,
    pub horizon_s: f64,
    pub dx_m: f64,
    pub dt_s: f64,
}

impl GridSpec {
    pub fn new(length_m: f64, horizon_s: f64, dx_m: f64, dt_s: f64) -> Result<Self> {
        let g = GridSpec {
            length_m,
            horizon_s,
            dx_m,
            dt_s,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_m", self.length_m),
            ("horizon_s", self.horizon_s),
            ("dx_m", self.dx_m),
            ("dt_s", self.dt_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    format!("grid.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        Ok(())
    }

    fn count(extent: f64, step: f64) -> usize {
        // tolerate float noise such as 480 / 10 = 48.000000001
        ((extent / step) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn nx(&self) -> usize {
        Self::count(self.length_m, self.dx_m)
    }

    pub fn nt(&self) -> usize {
        Self::count(self.horizon_s, self.dt_s)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.nt()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of cell (time row `it`, space column `jx`).
    pub fn index(&self, it: usize, jx: usize) -> usize {
        it * self.nx() + jx
    }

    pub fn x_bounds(&self, jx: usize) -> (f64, f64) {
        let a = jx as f64 * self.dx_m;
        (a, (a + self.dx_m).min(self.length_m))
    }

    pub fn t_bounds(&self, it: usize) -> (f64, f64) {
        let a = it as f64 * self.dt_s;
        (a, (a + self.dt_s).min(self.horizon_s))
    }

    pub fn area(&self, it: usize, jx: usize) -> f64 {
        let (x0, x1) = self.x_bounds(jx);
        let (t0, t1) = self.t_bounds(it);
        (x1 - x0) * (t1 - t0)
    }

    pub fn x_center(&self, jx: usize) -> f64 {
        let (a, b) = self.x_bounds(jx);
        0.5 * (a + b)
    }

    pub fn t_center(&self, it: usize) -> f64 {
        let (a, b) = self.t_bounds(it);
        0.5 * (a + b)
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        close(self.length_m, other.length_m)
            && close(self.horizon_s, other.horizon_s)
            && close(self.dx_m, other.dx_m)
            && close(self.dt_s, other.dt_s)
    }
}

/// How cell totals are normalized.
#[derive(Debug, Clone, Copy)]
pub enum Lanes<'a> {
    /// Divide by the number of lanes at the cell's midpoint.
    PerLane(&'a RoadNetwork),
    /// Whole cross-section.
    Total,
}

impl Lanes<'_> {
    pub fn per_column(&self, grid: &GridSpec) -> Vec<f64> {
        (0..grid.nx())
            .map(|j| match self {
                Lanes::PerLane(net) => net.lane_count(grid.x_center(j)) as f64,
                Lanes::Total => 1.0,
            })
            .collect()
    }
}

/// One cell of a [`MacroField`], SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroCell {
    /// veh/s (per lane when normalized).
    pub q: f64,
    /// veh/m (per lane when normalized).
    pub rho: f64,
    /// m/s.
    pub v: f64,
}

/// Flow, density and speed on a [`GridSpec`], stored in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField {
    pub grid: GridSpec,
    /// Lane count used to normalize each spatial column.
    pub lanes: Vec<f64>,
    pub q: Vec<f64>,
    pub rho: Vec<f64>,
    pub v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl MacroField {
    pub fn invalid(grid: GridSpec, lanes: Vec<f64>) -> Self {
        let n = grid.len();
        MacroField {
            grid,
            lanes,
            q: vec![0.0; n],
            rho: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn get(&self, it: usize, jx: usize) -> Option<MacroCell> {
        let k = self.grid.index(it, jx);
        self.valid[k].then(|| MacroCell {
            q: self.q[k],
            rho: self.rho[k],
            v: self.v[k],
        })
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Writes `t_s, x_m, q_vphpl, rho_vpmpl, v_mph, valid` with cell lower
    /// corners, time-major.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::io("macro csv", e.into());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MACRO_HEADER).map_err(io)?;
        for it in 0..self.grid.nt() {
            for jx in 0..self.grid.nx() {
                let k = self.grid.index(it, jx);
                let (t, x) = (self.grid.t_bounds(it).0, self.grid.x_bounds(jx).0);
                let row = if self.valid[k] {
                    [
                        t.to_string(),
                        x.to_string(),
                        per_second_to_per_hour(self.q[k]).to_string(),
                        per_meter_to_per_mile(self.rho[k]).to_string(),
                        mps_to_mph(self.v[k]).to_string(),
                        "1".to_string(),
                    ]
                } else {
                    [t.to_string(), x.to_string(), String::new(), String::new(), String::new(), "0".to_string()]
                };
                w.write_record(row).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io("macro csv", e))?;
        Ok(())
    }

    /// Reads a field written by [`MacroField::write_csv`]. The grid is
    /// inferred from the cell corners; `grid` overrides it when given.
    pub fn read_csv<R: Read>(reader: R, grid: Option<GridSpec>) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse {
            source_name: "macro csv".into(),
            message: msg,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let mut idx = [0usize; 6];
        for (k, name) in MACRO_HEADER.iter().enumerate() {
            idx[k] = headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| parse_err(format!("missing column {name}")))?;
        }
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let get = |k: usize| rec.get(idx[k]).map(str::trim).unwrap_or("");
            let num = |k: usize| -> Result<f64> {
                get(k)
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("line {}, {}: {e}", r + 2, MACRO_HEADER[k])))
            };
            let valid = get(5) == "1";
            let vals = if valid { (num(2)?, num(3)?, num(4)?) } else { (0.0, 0.0, 0.0) };
            rows.push((num(0)?, num(1)?, valid, vals));
        }
        if rows.is_empty() {
            return Err(Error::validation("macro field", "no cells"));
        }
        let grid = match grid {
            Some(g) => g,
            None => {
                let mut ts: Vec<f64> = rows.iter().map(|r| r.0).collect();
                let mut xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
                for v in [&mut ts, &mut xs] {
                    v.sort_by(f64::total_cmp);
                    v.dedup();
                }
                let step = |v: &[f64]| if v.len() > 1 { v[1] - v[0] } else { 1.0 };
                let (dt, dx) = (step(&ts), step(&xs));
                GridSpec::new(xs[xs.len() - 1] + dx, ts[ts.len() - 1] + dt, dx, dt)?
            }
        };
        let mut field = MacroField::invalid(grid, vec![1.0; grid.nx()]);
        for (t, x, valid, (q, rho, v)) in rows {
            let it = (t / grid.dt_s).round() as usize;
            let jx = (x / grid.dx_m).round() as usize;
            if it >= grid.nt() || jx >= grid.nx() {
                return Err(Error::Geometry(format!("cell at t={t}, x={x} is outside the grid")));
            }
            if valid {
                let k = grid.index(it, jx);
                field.q[k] = per_hour_to_per_second(q);
                field.rho[k] = per_mile_to_per_meter(rho);
                field.v[k] = mph_to_mps(v);
                field.valid[k] = true;
            }
        }
        Ok(field)
    }
}

/// Density `q / v` for every detector cell, veh/m, in the grid's cell order.
/// Missing when speed is missing or zero, or flow is missing.
pub fn density_from_grid(grid: &MeasurementGrid) -> Vec<Option<f64>> {
    grid.cells()
        .iter()
        .map(|c| match (c.flow_vph, c.speed_mps) {
            (Some(q), Some(v)) if v > 0.0 => Some(per_hour_to_per_second(q) / v),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::DetectorSite;

    #[test]
    fn grid_counts_tolerate_rounding() {
        let g = GridSpec::new(1300.0, 480.0, 10.0, 10.0).unwrap();
        assert_eq!((g.nx(), g.nt()), (130, 48));
        let g = GridSpec::new(1305.0, 480.0, 10.0, 10.0).unwrap();
        assert_eq!(g.nx(), 131);
        assert!((g.x_bounds(130).1 - 1305.0).abs() < 1e-12);
        assert!(GridSpec::new(100.0, 10.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn density_examples() {
        let site = DetectorSite {
            position_m: 0.0,
            lanes: vec![0],
        };
        let mut g = MeasurementGrid::new(vec![site], vec![0.0, 30.0, 60.0, 90.0]).unwrap();
        *g.cell_mut(0, 0, 0) = crate::sensing::DetectorCell {
            flow_vph: Some(1800.0),
            speed_mps: Some(25.0),
            occupancy_pct: None,
            speed_weight: 15.0,
            covered_s: [0.0; 2],
        };
        g.cell_mut(0, 0, 1).flow_vph = Some(900.0);
        g.cell_mut(0, 0, 2).flow_vph = Some(0.0);
        g.cell_mut(0, 0, 2).speed_mps = Some(20.0);
        let rho = density_from_grid(&g);
        assert!((rho[0].unwrap() - 0.02).abs() < 1e-15);
        assert!((per_meter_to_per_mile(rho[0].unwrap()) - 32.19).abs() < 0.01);
        assert_eq!(rho[1], None);
        assert_eq!(rho[2], Some(0.0));
    }

    #[test]
    fn csv_round_trip() {
        let grid = GridSpec::new(30.0, 20.0, 10.0, 10.0).unwrap();
        let mut f = MacroField::invalid(grid, vec![1.0; 3]);
        for k in [0, 2, 4] {
            f.q[k] = 0.5;
            f.v[k] = 20.0;
            f.rho[k] = 0.025;
            f.valid[k] = true;
        }
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = MacroField::read_csv(buf.as_slice(), None).unwrap();
        assert!(back.grid.same_as(&grid));
        assert_eq!(back.valid, f.valid);
        for k in 0..6 {
            assert!((back.q[k] - f.q[k]).abs() < 1e-12);
            assert!((back.v[k] - f.v[k]).abs() < 1e-12);
        }
    }
}
