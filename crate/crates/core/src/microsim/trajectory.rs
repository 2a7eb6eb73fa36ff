use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: [&str; 5] = ["time_s", "vehicle_id", "lane", "position_m", "speed_mps"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSample {
    pub t: f64,
    /// Front bumper position, m.
    pub x: f64,
    pub v: f64,
    pub lane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub length: f64,
    pub inserted_at: f64,
    pub exited_at: Option<f64>,
    pub samples: Vec<TrajSample>,
}

/// Every vehicle's sampled path through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    /// Simulated duration, s.
    pub horizon: f64,
    /// Network length, m.
    pub road_length: f64,
    /// Tracks in ascending id order.
    pub tracks: Vec<Track>,
}

impl TrajectoryLog {
    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.tracks.iter().map(|t| t.samples.len()).sum()
    }

    /// Checks the per-track ordering invariants.
    pub fn validate(&self) -> Result<()> {
        for track in &self.tracks {
            for w in track.samples.windows(2) {
                if !(w[1].t > w[0].t) {
                    return Err(Error::validation(
                        format!("vehicle {}", track.id),
                        format!("time not strictly increasing at t={}", w[1].t),
                    ));
                }
                if w[1].x < w[0].x {
                    return Err(Error::validation(
                        format!("vehicle {}", track.id),
                        format!("position decreases at t={}", w[1].t),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Writes `time_s, vehicle_id, lane, position_m, speed_mps`, ordered by time
    /// then vehicle. With `decimate = Some((dt, k))` only every k-th step is kept.
    pub fn write_csv<W: Write>(&self, writer: W, decimate: Option<(f64, usize)>) -> Result<()> {
        let mut rows: Vec<(f64, u64, &TrajSample)> = self
            .tracks
            .iter()
            .flat_map(|tr| tr.samples.iter().map(move |s| (s.t, tr.id, s)))
            .filter(|(t, _, _)| match decimate {
                Some((dt, k)) if k > 1 => ((t / dt).round() as u64).is_multiple_of(k as u64),
                _ => true,
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::io("trajectory csv", e.into());
        w.write_record(TRAJECTORY_HEADER).map_err(io)?;
        for (t, id, s) in rows {
            w.write_record([
                t.to_string(),
                id.to_string(),
                s.lane.to_string(),
                s.x.to_string(),
                s.v.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("trajectory csv", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`TrajectoryLog::write_csv`].
    ///
    /// Vehicle length, horizon and road length are not part of the file. The
    /// last sample of a track that reaches `road_length` marks its exit.
    pub fn read_csv<R: Read>(
        reader: R,
        vehicle_length: f64,
        horizon: f64,
        road_length: f64,
    ) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse {
            source_name: "trajectory csv".into(),
            message: msg,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| parse_err(format!("missing column {name}")))
        };
        let idx = [
            col("time_s")?,
            col("vehicle_id")?,
            col("lane")?,
            col("position_m")?,
            col("speed_mps")?,
        ];
        let mut tracks: BTreeMap<u64, Vec<TrajSample>> = BTreeMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let field = |k: usize| {
                rec.get(idx[k])
                    .map(str::trim)
                    .ok_or_else(|| parse_err(format!("row {}: missing field", row + 1)))
            };
            let num = |k: usize| -> Result<f64> {
                field(k)?
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("row {}: {e}", row + 1)))
            };
            let id: u64 = field(1)?
                .parse()
                .map_err(|e| parse_err(format!("row {}: vehicle_id: {e}", row + 1)))?;
            let lane: usize = field(2)?
                .parse()
                .map_err(|e| parse_err(format!("row {}: lane: {e}", row + 1)))?;
            tracks.entry(id).or_default().push(TrajSample {
                t: num(0)?,
                x: num(3)?,
                v: num(4)?,
                lane,
            });
        }
        let log = TrajectoryLog {
            horizon,
            road_length,
            tracks: tracks
                .into_iter()
                .map(|(id, samples)| Track {
                    id,
                    length: vehicle_length,
                    inserted_at: samples[0].t,
                    exited_at: samples
                        .last()
                        .filter(|s| s.x >= road_length)
                        .map(|s| s.t),
                    samples,
                })
                .collect(),
        };
        log.validate()?;
        Ok(log)
    }
}
