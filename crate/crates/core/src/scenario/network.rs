use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single mainline with optional on-ramp acceleration lanes and off-ramps.
///
/// Lane indices are counted from the right (0 = rightmost) at a given
/// position, so an acceleration lane shifts the index of every mainline lane
/// by one while it exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub length_m: f64,
    pub mainline_lanes: usize,
    #[serde(default)]
    pub on_ramps: Vec<OnRamp>,
    #[serde(default)]
    pub off_ramps: Vec<OffRamp>,
}

/// An on-ramp feeding an acceleration lane on the right of the mainline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnRamp {
    pub id: String,
    pub merge_start_m: f64,
    pub merge_end_m: f64,
    /// Local index of the acceleration lane. Only 0 (added on the right) is supported.
    #[serde(default)]
    pub accel_lane: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffRamp {
    pub id: String,
    pub diverge_m: f64,
    /// Local lane index from which vehicles leave at the diverge point.
    #[serde(default)]
    pub exit_lane: usize,
}

impl RoadNetwork {
    /// Number of lanes present at longitudinal position `x`.
    pub fn lane_count(&self, x: f64) -> usize {
        self.mainline_lanes
            + self
                .on_ramps
                .iter()
                .filter(|r| x >= r.merge_start_m && x < r.merge_end_m)
                .count()
    }

    /// Positions where the lane count changes.
    pub fn lane_breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .on_ramps
            .iter()
            .flat_map(|r| [r.merge_start_m, r.merge_end_m])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn on_ramp(&self, id: &str) -> Option<(usize, &OnRamp)> {
        self.on_ramps.iter().enumerate().find(|(_, r)| r.id == id)
    }

    pub fn off_ramp(&self, id: &str) -> Option<(usize, &OffRamp)> {
        self.off_ramps.iter().enumerate().find(|(_, r)| r.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_m.is_finite() && self.length_m > 0.0) {
            return Err(Error::validation(
                "network.length_m",
                format!("must be positive, got {}", self.length_m),
            ));
        }
        if self.mainline_lanes == 0 {
            return Err(Error::validation("network.mainline_lanes", "need at least one lane"));
        }
        let within = |x: f64| x.is_finite() && (0.0..=self.length_m).contains(&x);
        for (i, r) in self.on_ramps.iter().enumerate() {
            let field = format!("network.on_ramps[{i}]");
            if !within(r.merge_start_m) || !within(r.merge_end_m) {
                return Err(Error::validation(field, "merge positions outside the network"));
            }
            if r.merge_start_m >= r.merge_end_m {
                return Err(Error::validation(field, "merge_start_m must be below merge_end_m"));
            }
            if r.accel_lane != 0 {
                return Err(Error::validation(
                    field,
                    "acceleration lanes must be added on the right (accel_lane = 0)",
                ));
            }
        }
        let mut ramps: Vec<&OnRamp> = self.on_ramps.iter().collect();
        ramps.sort_by(|a, b| a.merge_start_m.total_cmp(&b.merge_start_m));
        for w in ramps.windows(2) {
            if w[1].merge_start_m < w[0].merge_end_m {
                return Err(Error::validation(
                    format!("network.on_ramps.{}", w[1].id),
                    format!("acceleration lane overlaps on-ramp {}", w[0].id),
                ));
            }
        }
        for (i, r) in self.off_ramps.iter().enumerate() {
            let field = format!("network.off_ramps[{i}]");
            if !within(r.diverge_m) {
                return Err(Error::validation(field, "diverge position outside the network"));
            }
            if r.exit_lane >= self.lane_count(r.diverge_m) {
                return Err(Error::validation(field, "exit lane does not exist at the diverge point"));
            }
        }
        let mut ids: Vec<&str> = self
            .on_ramps
            .iter()
            .map(|r| r.id.as_str())
            .chain(self.off_ramps.iter().map(|r| r.id.as_str()))
            .collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                return Err(Error::validation("network", format!("duplicate ramp id {}", w[0])));
            }
        }
        if ids.contains(&crate::scenario::MAINLINE) {
            return Err(Error::validation("network", "ramp id `mainline` is reserved"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merge() -> RoadNetwork {
        RoadNetwork {
            length_m: 1300.0,
            mainline_lanes: 2,
            on_ramps: vec![OnRamp {
                id: "ramp".into(),
                merge_start_m: 800.0,
                merge_end_m: 1100.0,
                accel_lane: 0,
            }],
            off_ramps: vec![],
        }
    }

    #[test]
    fn lane_count_is_piecewise_constant() {
        let n = merge();
        assert_eq!(n.lane_count(0.0), 2);
        assert_eq!(n.lane_count(799.9), 2);
        assert_eq!(n.lane_count(800.0), 3);
        assert_eq!(n.lane_count(1099.9), 3);
        assert_eq!(n.lane_count(1100.0), 2);
        assert_eq!(n.lane_breakpoints(), vec![800.0, 1100.0]);
    }

    #[test]
    fn rejects_inverted_merge() {
        let mut n = merge();
        n.on_ramps[0].merge_end_m = 700.0;
        assert!(n.validate().is_err());
    }

    #[test]
    fn rejects_ramp_outside_network() {
        let mut n = merge();
        n.on_ramps[0].merge_end_m = 1400.0;
        assert!(n.validate().is_err());
    }
}
