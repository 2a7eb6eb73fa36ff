//! Lane-specific point detectors over trajectories, and detector data I/O.
//!
//! Detector speed is the time-mean speed of crossing vehicles. Occupancy is
//! computed for a zero-length point detector from vehicle length over
//! crossing speed.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::microsim::{TrajSample, TrajectoryLog, VehicleState, World};
use crate::scenario::{DetectorSpec, ParameterSet, ScenarioConfig};
use crate::units::SECONDS_PER_HOUR;

pub const MEASUREMENT_HEADER: [&str; 6] =
    ["time_s", "position_m", "lane", "flow_vph", "speed_mps", "occupancy_pct"];

/// Aggregated values of one detector lane over one interval. `None` marks missing data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectorCell {
    pub flow_vph: Option<f64>,
    pub speed_mps: Option<f64>,
    pub occupancy_pct: Option<f64>,
    /// Number of vehicles behind `speed_mps`; weight for re-aggregation.
    pub speed_weight: f64,
    /// Seconds of data behind `flow_vph` and `occupancy_pct` when less than
    /// the whole interval. Zero means the whole interval.
    pub covered_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSite {
    pub position_m: f64,
    pub lanes: Vec<usize>,
}

/// Detector data indexed by (site, lane, interval).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGrid {
    sites: Vec<DetectorSite>,
    /// Interval boundaries; `n + 1` values for `n` intervals.
    boundaries: Vec<f64>,
    cells: Vec<DetectorCell>,
    offsets: Vec<usize>,
}

/// One vehicle passing a cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub vehicle: u64,
    pub time: f64,
    pub speed: f64,
    pub lane: usize,
    pub length: f64,
}

impl MeasurementGrid {
    /// Grid with every cell missing.
    pub fn new(sites: Vec<DetectorSite>, boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "intervals",
                "interval boundaries must be strictly increasing",
            ));
        }
        let n = boundaries.len() - 1;
        let mut offsets = Vec::with_capacity(sites.len());
        let mut total = 0;
        for s in &sites {
            offsets.push(total);
            total += s.lanes.len() * n;
        }
        Ok(MeasurementGrid {
            sites,
            boundaries,
            cells: vec![DetectorCell::default(); total],
            offsets,
        })
    }

    pub fn sites(&self) -> &[DetectorSite] {
        &self.sites
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn num_intervals(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.boundaries[i], self.boundaries[i + 1])
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn index(&self, site: usize, lane_slot: usize, interval: usize) -> usize {
        self.offsets[site] + lane_slot * self.num_intervals() + interval
    }

    /// Cell for the `lane_slot`-th lane listed at `site`.
    pub fn cell(&self, site: usize, lane_slot: usize, interval: usize) -> &DetectorCell {
        &self.cells[self.index(site, lane_slot, interval)]
    }

    pub fn cell_mut(&mut self, site: usize, lane_slot: usize, interval: usize) -> &mut DetectorCell {
        let i = self.index(site, lane_slot, interval);
        &mut self.cells[i]
    }

    /// All cells in (site, lane, interval) order.
    pub fn cells(&self) -> &[DetectorCell] {
        &self.cells
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, &DetectorCell)> {
        let n = self.num_intervals();
        self.sites.iter().enumerate().flat_map(move |(s, site)| {
            (0..site.lanes.len())
                .flat_map(move |k| (0..n).map(move |i| (s, k, i, self.cell(s, k, i))))
        })
    }

    /// Plain mean of the non-missing speeds at one site, over every lane and
    /// every interval starting at or after `from`.
    pub fn site_mean_speed(&self, site: usize, from: f64) -> Option<f64> {
        let (sum, n) = self
            .iter()
            .filter(|&(s, _, i, _)| s == site && self.interval(i).0 >= from - 1e-9)
            .filter_map(|(_, _, _, c)| c.speed_mps)
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn same_geometry(&self, other: &MeasurementGrid) -> bool {
        self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(a, b)| {
                (a.position_m - b.position_m).abs() < 1e-6 && a.lanes == b.lanes
            })
            && self.boundaries.len() == other.boundaries.len()
            && self
                .boundaries
                .iter()
                .zip(&other.boundaries)
                .all(|(a, b)| (a - b).abs() < 1e-6)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut rows: Vec<(f64, f64, usize, &DetectorCell)> = self
            .iter()
            .map(|(s, k, i, c)| (self.boundaries[i], self.sites[s].position_m, self.sites[s].lanes[k], c))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let io = |e: csv::Error| Error::io("measurement csv", e.into());
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MEASUREMENT_HEADER).map_err(io)?;
        for (t, x, lane, c) in rows {
            w.write_record([
                t.to_string(),
                x.to_string(),
                lane.to_string(),
                opt(c.flow_vph),
                opt(c.speed_mps),
                opt(c.occupancy_pct),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("measurement csv", e))?;
        Ok(())
    }

    /// Reads detector rows. `horizon` closes the last interval; without it the
    /// last interval is assumed as long as the others.
    pub fn read_csv<R: Read>(reader: R, horizon: Option<f64>) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse {
            source_name: "measurement csv".into(),
            message: msg,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let mut idx = [0usize; 6];
        for (k, name) in MEASUREMENT_HEADER.iter().enumerate() {
            idx[k] = headers
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| parse_err(format!("missing column {name}")))?;
        }
        struct Row {
            t: f64,
            x: f64,
            lane: usize,
            q: Option<f64>,
            v: Option<f64>,
            o: Option<f64>,
        }
        let mut rows = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let line = r + 2;
            let get = |k: usize| rec.get(idx[k]).map(str::trim).unwrap_or("");
            let num = |k: usize| -> Result<f64> {
                get(k)
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("line {line}, {}: {e}", MEASUREMENT_HEADER[k])))
            };
            let opt = |k: usize| -> Result<Option<f64>> {
                if get(k).is_empty() {
                    Ok(None)
                } else {
                    num(k).map(Some)
                }
            };
            let t = num(0)?;
            if t < last_t {
                return Err(Error::validation(
                    format!("line {line}"),
                    "interval start times are not monotone",
                ));
            }
            last_t = t;
            let lane = get(2)
                .parse::<usize>()
                .map_err(|e| parse_err(format!("line {line}, lane: {e}")))?;
            let row = Row {
                t,
                x: num(1)?,
                lane,
                q: opt(3)?,
                v: opt(4)?,
                o: opt(5)?,
            };
            if row.q.is_some_and(|q| !(q >= 0.0)) || row.v.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::validation(
                    format!("line {line}"),
                    "flow and speed must be nonnegative",
                ));
            }
            if row.o.is_some_and(|o| !(0.0..=100.0).contains(&o)) {
                return Err(Error::validation(
                    format!("line {line}, occupancy_pct"),
                    format!("{} outside [0, 100]", row.o.unwrap()),
                ));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::validation("measurements", "no data rows"));
        }

        let starts: Vec<f64> = {
            let mut s: Vec<f64> = rows.iter().map(|r| r.t).collect();
            s.dedup();
            s
        };
        let window = if starts.len() > 1 {
            starts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        } else {
            horizon.map(|h| h - starts[0]).ok_or_else(|| {
                Error::validation("measurements", "single interval needs an explicit horizon")
            })?
        };
        for &s in &starts {
            let k = (s - starts[0]) / window;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::validation(
                    "measurements",
                    format!("interval start {s} is not on the {window} s grid"),
                ));
            }
        }
        let n = ((starts[starts.len() - 1] - starts[0]) / window).round() as usize + 1;
        let mut boundaries: Vec<f64> = (0..n).map(|k| starts[0] + k as f64 * window).collect();
        let end = match horizon {
            Some(h) if h > boundaries[n - 1] => h,
            Some(h) => {
                return Err(Error::validation(
                    "horizon",
                    format!("{h} s does not close the last interval"),
                ))
            }
            None => boundaries[n - 1] + window,
        };
        boundaries.push(end);

        let positions: Vec<f64> = {
            let mut p: Vec<f64> = rows.iter().map(|r| r.x).collect();
            p.sort_by(f64::total_cmp);
            p.dedup();
            p
        };
        let sites: Vec<DetectorSite> = positions
            .iter()
            .map(|&x| DetectorSite {
                position_m: x,
                lanes: rows
                    .iter()
                    .filter(|r| r.x == x)
                    .map(|r| r.lane)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            })
            .collect();
        let mut grid = MeasurementGrid::new(sites, boundaries)?;
        for r in rows {
            let s = positions.iter().position(|&x| x == r.x).unwrap();
            let k = grid.sites[s].lanes.iter().position(|&l| l == r.lane).unwrap();
            let i = ((r.t - starts[0]) / window).round() as usize;
            let (a, b) = grid.interval(i);
            let cell = grid.cell_mut(s, k, i);
            cell.flow_vph = r.q;
            cell.speed_mps = r.v;
            cell.occupancy_pct = r.o;
            cell.speed_weight = match (r.v, r.q) {
                (Some(_), Some(q)) => q * (b - a) / SECONDS_PER_HOUR,
                (Some(_), None) => 1.0,
                _ => 0.0,
            };
        }
        Ok(grid)
    }
}

/// Reads a detector CSV file (`time_s, position_m, lane, flow_vph, speed_mps, occupancy_pct`).
pub fn ingest_measurements(path: impl AsRef<Path>, horizon: Option<f64>) -> Result<MeasurementGrid> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    MeasurementGrid::read_csv(std::io::BufReader::new(file), horizon)
}

/// Every crossing of the cross-section at `position`, found by linear
/// interpolation between consecutive samples. The lane is the one recorded at
/// the first sample at or beyond the detector.
pub fn detector_crossings(traj: &TrajectoryLog, position: f64) -> Vec<Crossing> {
    let mut out: Vec<Crossing> = traj
        .tracks
        .iter()
        .flat_map(|track| {
            track
                .samples
                .windows(2)
                .filter_map(move |w| crossing_between(track.id, track.length, &w[0], &w[1], position))
        })
        .collect();
    sort_crossings(&mut out);
    out
}

/// Time-mean speed of all crossings at `position` during `[t0, t1)`.
pub fn mean_crossing_speed(traj: &TrajectoryLog, position: f64, t0: f64, t1: f64) -> Option<f64> {
    let speeds: Vec<f64> = detector_crossings(traj, position)
        .into_iter()
        .filter(|c| c.time >= t0 && c.time < t1)
        .map(|c| c.speed)
        .collect();
    (!speeds.is_empty()).then(|| speeds.iter().sum::<f64>() / speeds.len() as f64)
}

fn check_specs(specs: &[DetectorSpec], road_length: f64) -> Result<f64> {
    let Some(first) = specs.first() else {
        return Err(Error::validation("detectors", "no detectors given"));
    };
    let window = first.window_s;
    if specs.iter().any(|d| (d.window_s - window).abs() > 1e-9) {
        return Err(Error::validation("detectors", "all detectors must share one window"));
    }
    for (i, d) in specs.iter().enumerate() {
        if !(0.0..=road_length).contains(&d.position_m) {
            return Err(Error::validation(
                format!("detectors[{i}].position_m"),
                format!("{} m outside the trajectory domain [0, {road_length}]", d.position_m),
            ));
        }
    }
    Ok(window)
}

/// Aggregates sorted crossings, one list per detector.
fn grid_from_crossings(
    specs: &[DetectorSpec],
    horizon: f64,
    window: f64,
    crossings: &[Vec<Crossing>],
) -> Result<MeasurementGrid> {
    let n = (horizon / window).ceil() as usize;
    let mut boundaries: Vec<f64> = (0..n).map(|k| k as f64 * window).collect();
    boundaries.push(horizon);
    let sites = specs
        .iter()
        .map(|d| DetectorSite {
            position_m: d.position_m,
            lanes: d.lanes.clone(),
        })
        .collect();
    let mut grid = MeasurementGrid::new(sites, boundaries)?;

    struct Acc {
        count: f64,
        speed_sum: f64,
        occupied: f64,
    }
    for (s, d) in specs.iter().enumerate() {
        let mut acc: Vec<Acc> = (0..d.lanes.len() * n)
            .map(|_| Acc {
                count: 0.0,
                speed_sum: 0.0,
                occupied: 0.0,
            })
            .collect();
        for c in &crossings[s] {
            let Some(k) = d.lanes.iter().position(|&l| l == c.lane) else { continue };
            if c.time >= horizon {
                continue;
            }
            let i = ((c.time / window).floor() as usize).min(n - 1);
            let a = &mut acc[k * n + i];
            a.count += 1.0;
            a.speed_sum += c.speed;
            a.occupied += if c.speed > 0.0 {
                c.length / c.speed
            } else {
                window
            };
        }
        for k in 0..d.lanes.len() {
            for i in 0..n {
                let (t0, t1) = grid.interval(i);
                let span = t1 - t0;
                let a = &acc[k * n + i];
                let cell = grid.cell_mut(s, k, i);
                cell.flow_vph = Some(a.count * SECONDS_PER_HOUR / span);
                if a.count > 0.0 {
                    cell.speed_mps = Some(a.speed_sum / a.count);
                    cell.occupancy_pct = Some((100.0 * a.occupied / span).min(100.0));
                    cell.speed_weight = a.count;
                }
            }
        }
    }
    Ok(grid)
}

fn sort_crossings(list: &mut [Crossing]) {
    list.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.vehicle.cmp(&b.vehicle)));
}

fn crossing_between(vehicle: u64, length: f64, a: &TrajSample, b: &TrajSample, position: f64) -> Option<Crossing> {
    (a.x < position && position <= b.x).then(|| {
        let frac = (position - a.x) / (b.x - a.x);
        Crossing {
            vehicle,
            time: a.t + frac * (b.t - a.t),
            speed: a.v + frac * (b.v - a.v),
            lane: b.lane,
            length,
        }
    })
}

/// Virtual loop detectors over a trajectory log.
///
/// All detectors must share one aggregation window; intervals run from 0 to
/// the log's horizon with a shorter last interval when the window does not
/// divide it.
pub fn simulate_detectors(traj: &TrajectoryLog, specs: &[DetectorSpec]) -> Result<MeasurementGrid> {
    let window = check_specs(specs, traj.road_length)?;
    if let Some(step) = traj
        .tracks
        .iter()
        .find(|t| t.samples.len() > 1)
        .map(|t| t.samples[1].t - t.samples[0].t)
    {
        if step > window {
            return Err(Error::validation(
                "detectors",
                format!("sampling interval {step} s exceeds the {window} s window"),
            ));
        }
    }
    let crossings: Vec<Vec<Crossing>> = specs
        .iter()
        .map(|d| detector_crossings(traj, d.position_m))
        .collect();
    grid_from_crossings(specs, traj.horizon, window, &crossings)
}

/// Runs the simulation and records detector crossings on the fly, without
/// keeping trajectories. Gives the same grid as [`simulate_detectors`] on
/// the log of [`crate::microsim::run_with_seed`].
pub fn simulate_detectors_live(
    scenario: &ScenarioConfig,
    params: &ParameterSet,
    seed: u64,
) -> Result<MeasurementGrid> {
    let specs = &scenario.detectors;
    let window = check_specs(specs, scenario.network.length_m)?;
    let dt = scenario.simulation.dt_s;
    if dt > window {
        return Err(Error::validation(
            "detectors",
            format!("sampling interval {dt} s exceeds the {window} s window"),
        ));
    }
    let mut world = World::new(scenario, params, seed)?;
    let steps = (scenario.simulation.horizon_s / dt).round() as usize;
    let mut last: Vec<Option<TrajSample>> = Vec::new();
    let mut crossings: Vec<Vec<Crossing>> = vec![Vec::new(); specs.len()];
    let mut observe = |v: &VehicleState, t: f64, last: &mut Vec<Option<TrajSample>>| {
        let id = v.id as usize;
        if id >= last.len() {
            last.resize(id + 1, None);
        }
        let sample = TrajSample {
            t,
            x: v.position,
            v: v.speed,
            lane: v.lane,
        };
        if let Some(prev) = &last[id] {
            for (d, list) in specs.iter().zip(crossings.iter_mut()) {
                if let Some(c) = crossing_between(v.id, v.length, prev, &sample, d.position_m) {
                    list.push(c);
                }
            }
        }
        last[id] = Some(sample);
    };
    for _ in 0..steps {
        let report = world.step(dt)?;
        let t = world.time();
        for v in &report.exited {
            observe(v, t, &mut last);
        }
        for v in world.vehicles() {
            observe(v, t, &mut last);
        }
    }
    for list in &mut crossings {
        sort_crossings(list);
    }
    grid_from_crossings(specs, scenario.simulation.horizon_s, window, &crossings)
}

/// Re-aggregates to a window that is an integer multiple of the current one.
///
/// Flow and occupancy are time-weighted means, speed is weighted by vehicle
/// counts. Missing sub-cells are left out; a cell with no data stays missing.
pub fn aggregate(grid: &MeasurementGrid, new_window: f64) -> Result<MeasurementGrid> {
    let (t0, t1) = grid.interval(0);
    let window = t1 - t0;
    let factor = new_window / window;
    if !(factor >= 1.0) || (factor - factor.round()).abs() > 1e-9 {
        return Err(Error::validation(
            "window",
            format!("{new_window} s is not an integer multiple of {window} s"),
        ));
    }
    let factor = factor.round() as usize;
    let n = grid.num_intervals();
    let groups: Vec<std::ops::Range<usize>> =
        (0..n).step_by(factor).map(|s| s..(s + factor).min(n)).collect();
    let mut boundaries: Vec<f64> = groups.iter().map(|g| grid.boundaries[g.start]).collect();
    boundaries.push(grid.boundaries[n]);
    let mut out = MeasurementGrid::new(grid.sites.clone(), boundaries)?;
    for s in 0..grid.sites.len() {
        for k in 0..grid.sites[s].lanes.len() {
            for (g, range) in groups.iter().enumerate() {
                let (mut q_sum, mut q_span) = (0.0, 0.0);
                let (mut o_sum, mut o_span) = (0.0, 0.0);
                let (mut v_sum, mut v_weight, mut v_plain, mut v_n) = (0.0, 0.0, 0.0, 0usize);
                for i in range.clone() {
                    let (a, b) = grid.interval(i);
                    let c = grid.cell(s, k, i);
                    let span = |j: usize| if c.covered_s[j] > 0.0 { c.covered_s[j] } else { b - a };
                    if let Some(q) = c.flow_vph {
                        q_sum += q * span(0);
                        q_span += span(0);
                    }
                    if let Some(o) = c.occupancy_pct {
                        o_sum += o * span(1);
                        o_span += span(1);
                    }
                    if let Some(v) = c.speed_mps {
                        v_sum += v * c.speed_weight;
                        v_weight += c.speed_weight;
                        v_plain += v;
                        v_n += 1;
                    }
                }
                let (a, b) = out.interval(g);
                let cell = out.cell_mut(s, k, g);
                cell.flow_vph = (q_span > 0.0).then(|| q_sum / q_span);
                cell.occupancy_pct = (o_span > 0.0).then(|| o_sum / o_span);
                let partial = |span: f64| if span < b - a - 1e-9 { span } else { 0.0 };
                cell.covered_s = [partial(q_span), partial(o_span)];
                if v_n > 0 {
                    cell.speed_mps = Some(if v_weight > 0.0 {
                        v_sum / v_weight
                    } else {
                        v_plain / v_n as f64
                    });
                    cell.speed_weight = v_weight;
                }
            }
        }
    }
    Ok(out)
}
