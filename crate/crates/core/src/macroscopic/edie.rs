use crate::macroscopic::{GridSpec, Lanes, MacroField};
use crate::microsim::TrajectoryLog;

/// Distance traveled and time spent per cell, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EdieTotals {
    pub grid: GridSpec,
    /// Vehicle-meters per cell.
    pub distance: Vec<f64>,
    /// Vehicle-seconds per cell.
    pub time: Vec<f64>,
}

impl EdieTotals {
    /// Sums blocks of `fx` × `ft` cells into a grid with larger cells.
    pub fn coarsen(&self, fx: usize, ft: usize) -> EdieTotals {
        let g = &self.grid;
        let coarse = GridSpec {
            length_m: g.length_m,
            horizon_s: g.horizon_s,
            dx_m: g.dx_m * fx as f64,
            dt_s: g.dt_s * ft as f64,
        };
        let mut out = EdieTotals {
            grid: coarse,
            distance: vec![0.0; coarse.len()],
            time: vec![0.0; coarse.len()],
        };
        for it in 0..g.nt() {
            for jx in 0..g.nx() {
                let (src, dst) = (g.index(it, jx), coarse.index(it / ft, jx / fx));
                out.distance[dst] += self.distance[src];
                out.time[dst] += self.time[src];
            }
        }
        out
    }

    /// q = d/|A|, ρ = t/|A|, v = d/t, each divided by the column's lane count.
    /// Cells without any time spent are invalid.
    pub fn field(&self, lanes: Lanes<'_>) -> MacroField {
        let g = self.grid;
        let per_col = lanes.per_column(&g);
        let mut f = MacroField::invalid(g, per_col);
        for it in 0..g.nt() {
            for jx in 0..g.nx() {
                let k = g.index(it, jx);
                let (d, t) = (self.distance[k], self.time[k]);
                if t > 0.0 {
                    let norm = g.area(it, jx) * f.lanes[jx];
                    f.q[k] = d / norm;
                    f.rho[k] = t / norm;
                    f.v[k] = d / t;
                    f.valid[k] = true;
                }
            }
        }
        f
    }
}

/// Clips every straight trajectory segment to the grid and accumulates
/// distance and time per cell.
pub fn edie_totals(traj: &TrajectoryLog, grid: &GridSpec) -> EdieTotals {
    let mut out = EdieTotals {
        grid: *grid,
        distance: vec![0.0; grid.len()],
        time: vec![0.0; grid.len()],
    };
    let (nx, nt) = (grid.nx(), grid.nt());
    let mut cuts: Vec<f64> = Vec::new();
    for track in &traj.tracks {
        for w in track.samples.windows(2) {
            let (t0, x0, t1, x1) = (w[0].t, w[0].x, w[1].t, w[1].x);
            let (dt, dx) = (t1 - t0, x1 - x0);
            if !(dt > 0.0) {
                continue;
            }
            // parameter range inside the domain
            let mut lo: f64 = 0.0;
            let mut hi: f64 = 1.0;
            lo = lo.max(-t0 / dt);
            hi = hi.min((grid.horizon_s - t0) / dt);
            if dx > 0.0 {
                lo = lo.max(-x0 / dx);
                hi = hi.min((grid.length_m - x0) / dx);
            } else if !(0.0..=grid.length_m).contains(&x0) {
                continue;
            }
            if !(hi > lo) {
                continue;
            }
            cuts.clear();
            cuts.push(lo);
            cuts.push(hi);
            let (ta, tb) = (t0 + lo * dt, t0 + hi * dt);
            let mut k = (ta / grid.dt_s).floor() as i64 + 1;
            while (k as f64) * grid.dt_s < tb {
                cuts.push((k as f64 * grid.dt_s - t0) / dt);
                k += 1;
            }
            if dx > 0.0 {
                let (xa, xb) = (x0 + lo * dx, x0 + hi * dx);
                let mut k = (xa / grid.dx_m).floor() as i64 + 1;
                while (k as f64) * grid.dx_m < xb {
                    cuts.push((k as f64 * grid.dx_m - x0) / dx);
                    k += 1;
                }
            }
            cuts.sort_by(f64::total_cmp);
            for c in cuts.windows(2) {
                let span = c[1] - c[0];
                if span <= 0.0 {
                    continue;
                }
                let mid = 0.5 * (c[0] + c[1]);
                let it = ((t0 + mid * dt) / grid.dt_s).floor().clamp(0.0, (nt - 1) as f64) as usize;
                let jx = ((x0 + mid * dx) / grid.dx_m).floor().clamp(0.0, (nx - 1) as f64) as usize;
                let idx = grid.index(it, jx);
                out.distance[idx] += span * dx;
                out.time[idx] += span * dt;
            }
        }
    }
    out
}

/// Edie's generalized flow, density and space-mean speed on `grid`.
pub fn edie_fields(traj: &TrajectoryLog, grid: &GridSpec, lanes: Lanes<'_>) -> MacroField {
    edie_totals(traj, grid).field(lanes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microsim::{TrajSample, Track};

    fn straight(id: u64, x0: f64, v: f64, t_end: f64, dt: f64) -> Track {
        let n = (t_end / dt).round() as usize;
        Track {
            id,
            length: 5.0,
            inserted_at: 0.0,
            exited_at: None,
            samples: (0..=n)
                .map(|k| {
                    let t = k as f64 * dt;
                    TrajSample {
                        t,
                        x: x0 + v * t,
                        v,
                        lane: 0,
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn single_vehicle_through_one_cell() {
        let traj = TrajectoryLog {
            horizon: 10.0,
            road_length: 100.0,
            tracks: vec![straight(0, -50.0, 20.0, 10.0, 0.1)],
        };
        let grid = GridSpec::new(100.0, 10.0, 100.0, 10.0).unwrap();
        let f = edie_fields(&traj, &grid, Lanes::Total);
        let c = f.get(0, 0).unwrap();
        // d = 100 m and t = 5 s over |A| = 1000 m·s
        assert!((c.q - 0.1).abs() < 1e-12);
        assert!((c.rho - 0.005).abs() < 1e-12);
        assert!((c.v - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_cell_is_invalid() {
        let traj = TrajectoryLog {
            horizon: 10.0,
            road_length: 100.0,
            tracks: vec![],
        };
        let grid = GridSpec::new(100.0, 10.0, 10.0, 10.0).unwrap();
        let f = edie_fields(&traj, &grid, Lanes::Total);
        assert_eq!(f.valid_count(), 0);
    }

    #[test]
    fn stopped_vehicle_counts_time_only() {
        let mut track = straight(0, 15.0, 0.0, 10.0, 0.5);
        track.samples.iter_mut().for_each(|s| s.v = 0.0);
        let traj = TrajectoryLog {
            horizon: 10.0,
            road_length: 100.0,
            tracks: vec![track],
        };
        let grid = GridSpec::new(100.0, 10.0, 10.0, 10.0).unwrap();
        let t = edie_totals(&traj, &grid);
        assert!((t.time[1] - 10.0).abs() < 1e-12);
        assert_eq!(t.distance[1], 0.0);
        let f = t.field(Lanes::Total);
        assert_eq!(f.get(0, 1).unwrap().v, 0.0);
    }
}
