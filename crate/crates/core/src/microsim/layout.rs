use crate::scenario::{Destination, RoadNetwork};

/// Physical lanes of a network, ordered right to left.
///
/// Acceleration lanes come first (they all sit on the right and never
/// overlap), followed by the mainline lanes. A vehicle keeps its physical
/// lane while the local index, counted from the rightmost lane present at
/// its position, can change at merge boundaries.
#[derive(Debug, Clone)]
pub(crate) struct LaneLayout {
    pub length: f64,
    lanes: Vec<LaneExtent>,
    ramp_lanes: usize,
    /// Physical lane of each on-ramp, in network order.
    ramp_phys: Vec<usize>,
    diverges: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Copy)]
struct LaneExtent {
    start: f64,
    end: f64,
}

/// Lane changes a vehicle still has to make before a mandatory point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategicNeed {
    /// Positive: changes to the left; negative: to the right.
    pub lanes: i32,
    /// Distance to the point where the changes must be completed, m.
    pub distance: f64,
}

impl LaneLayout {
    pub fn new(network: &RoadNetwork) -> Self {
        let mut order: Vec<usize> = (0..network.on_ramps.len()).collect();
        order.sort_by(|&a, &b| {
            network.on_ramps[a]
                .merge_start_m
                .total_cmp(&network.on_ramps[b].merge_start_m)
        });
        let mut ramp_phys = vec![0; order.len()];
        for (phys, &k) in order.iter().enumerate() {
            ramp_phys[k] = phys;
        }
        let ramps: Vec<_> = order.iter().map(|&k| &network.on_ramps[k]).collect();
        let mut lanes: Vec<LaneExtent> = ramps
            .iter()
            .map(|r| LaneExtent {
                start: r.merge_start_m,
                end: r.merge_end_m,
            })
            .collect();
        let ramp_lanes = lanes.len();
        lanes.extend((0..network.mainline_lanes).map(|_| LaneExtent {
            start: 0.0,
            end: network.length_m,
        }));
        LaneLayout {
            length: network.length_m,
            lanes,
            ramp_lanes,
            ramp_phys,
            diverges: network.off_ramps.iter().map(|r| (r.diverge_m, r.exit_lane)).collect(),
        }
    }

    pub fn num_physical(&self) -> usize {
        self.lanes.len()
    }

    /// Physical acceleration lane of the `ramp`-th on-ramp of the network.
    pub fn ramp_lane(&self, ramp: usize) -> usize {
        self.ramp_phys[ramp]
    }

    pub fn mainline(&self) -> std::ops::Range<usize> {
        self.ramp_lanes..self.lanes.len()
    }

    pub fn covers(&self, phys: usize, x: f64) -> bool {
        let e = self.lanes[phys];
        if phys >= self.ramp_lanes {
            true
        } else {
            x >= e.start && x < e.end
        }
    }

    /// Where the lane terminates, if it ends before the network does.
    pub fn lane_end(&self, phys: usize) -> Option<f64> {
        (phys < self.ramp_lanes).then(|| self.lanes[phys].end)
    }

    pub fn local_index(&self, phys: usize, x: f64) -> usize {
        (0..phys).filter(|&q| self.covers(q, x)).count()
    }

    pub fn physical_from_local(&self, local: usize, x: f64) -> Option<usize> {
        (0..self.lanes.len()).filter(|&q| self.covers(q, x)).nth(local)
    }

    pub fn right_of(&self, phys: usize, x: f64) -> Option<usize> {
        (0..phys).rev().find(|&q| self.covers(q, x))
    }

    pub fn left_of(&self, phys: usize, x: f64) -> Option<usize> {
        (phys + 1..self.lanes.len()).find(|&q| self.covers(q, x))
    }

    /// Lane changes required from `phys` at `x` for a vehicle heading to `dest`.
    pub fn strategic_need(&self, phys: usize, x: f64, dest: Destination) -> Option<StrategicNeed> {
        if let Some(end) = self.lane_end(phys) {
            return Some(StrategicNeed {
                // acceleration lanes always border the rightmost mainline lane
                lanes: 1,
                distance: end - x,
            });
        }
        if let Destination::OffRamp(k) = dest {
            let (diverge, exit_lane) = self.diverges[k];
            if diverge > x {
                let here = self.local_index(phys, diverge) as i32;
                let shift = exit_lane as i32 - here;
                if shift != 0 {
                    return Some(StrategicNeed {
                        lanes: shift,
                        distance: diverge - x,
                    });
                }
            }
        }
        None
    }

    pub fn diverge(&self, k: usize) -> (f64, usize) {
        self.diverges[k]
    }
}
