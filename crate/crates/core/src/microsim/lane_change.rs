//! Motivation-scored lane-change model.
//!
//! Four motivations drive a change:
//! - strategic: lanes that end or an exit that must be reached; urgency
//!   `u = lcStrategic · n · v · T_la / max(d, 1 m)` turns the change mandatory at `u ≥ 1`;
//! - cooperative: a target-lane follower blocking a mandatory change brakes
//!   by up to `lcCooperative · b` to open the gap (applied by the world);
//! - speed gain: the anticipated speed gain in an adjacent lane exceeds
//!   `1 / lcSpeedGain` m/s for 3 s in a row;
//! - keep right: moving right costs less than `0.5 · lcKeepRight` m/s.
//!
//! Every change must pass the gap-acceptance rule: front and rear gaps in the
//! target lane at least the IDM desired gap divided by `lcAssertive`, and no
//! smaller than the distance needed to avoid a collision under emergency
//! braking.

use crate::microsim::idm::{desired_gap, EMERGENCY_DECEL};
use crate::microsim::layout::StrategicNeed;
use crate::microsim::VehicleState;
use crate::scenario::ParameterSet;

pub const STRATEGIC_LOOKAHEAD_S: f64 = 30.0;
/// A strategic change is always mandatory this close to its deadline, m.
pub const LAST_CHANCE_DISTANCE_M: f64 = 20.0;
/// Floor on the approach speed in the urgency formula, m/s.
pub const MIN_APPROACH_SPEED: f64 = 1.0;
pub const SPEED_GAIN_SUSTAIN_S: f64 = 3.0;
pub const SPEED_GAIN_THRESHOLD: f64 = 1.0;
pub const KEEP_RIGHT_THRESHOLD: f64 = 0.5;
/// Leaders farther ahead than this do not limit the anticipated speed, m.
pub const ANTICIPATION_DISTANCE_M: f64 = 100.0;
pub const COOLDOWN_S: f64 = 5.0;
/// Extra bumper clearance on top of the braking distance, m.
pub const SAFETY_MARGIN_M: f64 = 1.0;

/// Another vehicle seen from the ego: bumper-to-bumper gap and its speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjacentLane {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
    /// The lane terminates downstream (acceleration lane).
    pub ends: bool,
}

/// Everything the decision needs to know about the ego's surroundings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Neighborhood {
    /// Leader in the ego lane, or the lane end as a standing obstacle.
    pub leader: Option<Neighbor>,
    pub left: Option<AdjacentLane>,
    pub right: Option<AdjacentLane>,
    pub need: Option<StrategicNeed>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneAction {
    Stay,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneDecision {
    pub action: LaneAction,
    /// Direction of an active mandatory change, if any.
    pub mandatory: Option<Side>,
    /// Mandatory change blocked: target-lane follower is asked to brake and
    /// the ego may slow down to line up with the target-lane leader.
    pub cooperation: bool,
    /// Updated speed-gain timers, `[left, right]`.
    pub gain_timers: [f64; 2],
}

impl Neighborhood {
    fn lane(&self, side: Side) -> Option<&AdjacentLane> {
        match side {
            Side::Left => self.left.as_ref(),
            Side::Right => self.right.as_ref(),
        }
    }
}

/// Speed the ego expects to reach in a lane with the given leader.
pub fn anticipated_speed(leader: Option<Neighbor>, vf: f64) -> f64 {
    match leader {
        Some(n) if n.gap < ANTICIPATION_DISTANCE_M => {
            let gap = n.gap.max(0.0);
            let v = n.speed + (vf - n.speed).max(0.0) * gap / ANTICIPATION_DISTANCE_M;
            v.min(vf)
        }
        _ => vf,
    }
}

/// Braking-distance floor for a follower at `v_follow` behind a leader at `v_lead`.
pub fn safe_gap(v_follow: f64, v_lead: f64) -> f64 {
    let closing = (v_follow * v_follow - v_lead * v_lead).max(0.0);
    SAFETY_MARGIN_M + closing / (2.0 * EMERGENCY_DECEL)
}

/// Gap-acceptance rule for moving into a lane with the given neighbors.
pub fn gap_admissible(
    front: Option<Neighbor>,
    rear: Option<Neighbor>,
    ego_speed: f64,
    p: &ParameterSet,
) -> bool {
    if p.lc_assertive <= 0.0 {
        return false;
    }
    let front_ok = front.is_none_or(|n| {
        n.gap > 0.0
            && n.gap >= desired_gap(ego_speed, ego_speed - n.speed, p) / p.lc_assertive
            && n.gap >= safe_gap(ego_speed, n.speed)
    });
    let rear_ok = rear.is_none_or(|n| {
        n.gap > 0.0
            && n.gap >= desired_gap(n.speed, n.speed - ego_speed, p) / p.lc_assertive
            && n.gap >= safe_gap(n.speed, ego_speed)
    });
    front_ok && rear_ok
}

fn mandatory_side(need: Option<StrategicNeed>, v: f64, p: &ParameterSet) -> Option<Side> {
    let need = need.filter(|n| n.lanes != 0)?;
    let urgency = p.lc_strategic
        * need.lanes.unsigned_abs() as f64
        * v.max(MIN_APPROACH_SPEED)
        * STRATEGIC_LOOKAHEAD_S
        / need.distance.max(1.0);
    (urgency >= 1.0 || need.distance <= LAST_CHANCE_DISTANCE_M).then_some(if need.lanes > 0 {
        Side::Left
    } else {
        Side::Right
    })
}

fn action(side: Side) -> LaneAction {
    match side {
        Side::Left => LaneAction::Left,
        Side::Right => LaneAction::Right,
    }
}

/// Chooses stay/left/right for one vehicle from its pre-step surroundings.
pub fn lane_change_decide(
    ego: &VehicleState,
    hood: &Neighborhood,
    p: &ParameterSet,
    dt: f64,
) -> LaneDecision {
    let v = ego.speed;
    let ready = ego.cooldown <= 0.0;
    let admissible = |side: Side| {
        hood.lane(side)
            .is_some_and(|l| gap_admissible(l.leader, l.follower, v, p))
    };

    // Discretionary bookkeeping runs every step so the sustain timers stay current.
    let current = anticipated_speed(hood.leader, p.vf);
    let opposite_of_need = |side: Side| match hood.need {
        Some(n) if n.lanes > 0 => side == Side::Right,
        Some(n) if n.lanes < 0 => side == Side::Left,
        _ => false,
    };
    let eligible =
        |side: Side| hood.lane(side).is_some_and(|l| !l.ends) && !opposite_of_need(side);
    let gain = |side: Side| {
        hood.lane(side)
            .map(|l| anticipated_speed(l.leader, p.vf) - current)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut timers = [0.0; 2];
    for (slot, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        if eligible(side)
            && p.lc_speed_gain > 0.0
            && gain(side) > SPEED_GAIN_THRESHOLD / p.lc_speed_gain
        {
            timers[slot] = ego.gain_timers[slot] + dt;
        }
    }

    let stay = LaneDecision {
        action: LaneAction::Stay,
        mandatory: None,
        cooperation: false,
        gain_timers: timers,
    };

    if let Some(side) = mandatory_side(hood.need, v, p) {
        let target_exists = hood.lane(side).is_some();
        if ready && admissible(side) {
            return LaneDecision {
                action: action(side),
                mandatory: Some(side),
                ..stay
            };
        }
        return LaneDecision {
            mandatory: Some(side),
            cooperation: target_exists,
            ..stay
        };
    }
    if !ready {
        return stay;
    }

    let sustained = |slot: usize| timers[slot] >= SPEED_GAIN_SUSTAIN_S - 1e-9;
    let left = sustained(0) && admissible(Side::Left);
    let right = sustained(1) && admissible(Side::Right);
    let speed_gain = match (left, right) {
        (true, false) => Some(Side::Left),
        (false, true) => Some(Side::Right),
        (true, true) => {
            let (gl, gr) = (gain(Side::Left), gain(Side::Right));
            if gl > gr {
                Some(Side::Left)
            } else if gr > gl {
                Some(Side::Right)
            } else {
                None
            }
        }
        (false, false) => None,
    };
    if let Some(side) = speed_gain {
        return LaneDecision {
            action: action(side),
            ..stay
        };
    }

    if eligible(Side::Right)
        && -gain(Side::Right) < KEEP_RIGHT_THRESHOLD * p.lc_keep_right
        && admissible(Side::Right)
    {
        return LaneDecision {
            action: LaneAction::Right,
            ..stay
        };
    }
    stay
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Destination;

    fn ego(speed: f64) -> VehicleState {
        VehicleState {
            id: 0,
            lane: 1,
            physical_lane: 1,
            position: 500.0,
            speed,
            length: 5.0,
            destination: Destination::MainlineEnd,
            cooldown: 0.0,
            gain_timers: [0.0; 2],
        }
    }

    #[test]
    fn no_adjacent_lane_means_stay() {
        let p = ParameterSet::table_default();
        let hood = Neighborhood {
            leader: Some(Neighbor {
                gap: 10.0,
                speed: 5.0,
            }),
            ..Default::default()
        };
        let d = lane_change_decide(&ego(25.0), &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Stay);
    }

    #[test]
    fn exit_bound_vehicle_moves_right() {
        let p = ParameterSet::table_default();
        // u = 1 * 1 * 25 * 30 / 100 = 7.5 >= 1
        let hood = Neighborhood {
            leader: None,
            left: None,
            right: Some(AdjacentLane::default()),
            need: Some(StrategicNeed {
                lanes: -1,
                distance: 100.0,
            }),
        };
        let d = lane_change_decide(&ego(25.0), &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Right);
        assert_eq!(d.mandatory, Some(Side::Right));
    }

    #[test]
    fn short_rear_gap_blocks_discretionary_change() {
        let mut p = ParameterSet::table_default();
        p.lc_assertive = 1.0;
        let v = 20.0;
        let follower_speed = 22.0;
        let s_rear = desired_gap(follower_speed, follower_speed - v, &p);
        let hood = Neighborhood {
            leader: Some(Neighbor {
                gap: 15.0,
                speed: 10.0,
            }),
            left: Some(AdjacentLane {
                leader: None,
                follower: Some(Neighbor {
                    gap: 0.4 * s_rear,
                    speed: follower_speed,
                }),
                ends: false,
            }),
            right: None,
            need: None,
        };
        let mut e = ego(v);
        e.gain_timers = [10.0, 0.0];
        let d = lane_change_decide(&e, &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Stay);
        // same situation with room behind: the change happens
        let mut open = hood;
        open.left.as_mut().unwrap().follower = None;
        assert_eq!(lane_change_decide(&e, &open, &p, 0.1).action, LaneAction::Left);
    }

    #[test]
    fn speed_gain_requires_sustained_advantage() {
        let p = ParameterSet::table_default();
        let hood = Neighborhood {
            leader: Some(Neighbor {
                gap: 20.0,
                speed: 15.0,
            }),
            left: Some(AdjacentLane::default()),
            right: None,
            need: None,
        };
        let mut e = ego(15.0);
        let mut steps = 0;
        loop {
            let d = lane_change_decide(&e, &hood, &p, 0.1);
            steps += 1;
            if d.action == LaneAction::Left {
                break;
            }
            e.gain_timers = d.gain_timers;
            assert!(steps < 100);
        }
        assert_eq!(steps, 30);
    }

    #[test]
    fn zero_speed_gain_disables_overtaking() {
        let mut p = ParameterSet::table_default();
        p.lc_speed_gain = 0.0;
        p.lc_keep_right = 0.0;
        let hood = Neighborhood {
            leader: Some(Neighbor {
                gap: 20.0,
                speed: 5.0,
            }),
            left: Some(AdjacentLane::default()),
            right: None,
            need: None,
        };
        let mut e = ego(15.0);
        e.gain_timers = [100.0, 100.0];
        let d = lane_change_decide(&e, &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Stay);
        assert_eq!(d.gain_timers, [0.0, 0.0]);
    }

    #[test]
    fn keep_right_when_cheap() {
        let p = ParameterSet::table_default();
        let hood = Neighborhood {
            leader: None,
            left: None,
            right: Some(AdjacentLane::default()),
            need: None,
        };
        let d = lane_change_decide(&ego(25.0), &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Right);
        // never into a lane that ends
        let mut ending = hood;
        ending.right.as_mut().unwrap().ends = true;
        assert_eq!(lane_change_decide(&ego(25.0), &ending, &p, 0.1).action, LaneAction::Stay);
    }

    #[test]
    fn mandatory_overrides_discretionary_and_requests_cooperation() {
        let p = ParameterSet::ground_truth();
        let hood = Neighborhood {
            leader: Some(Neighbor {
                gap: 50.0,
                speed: 0.0,
            }),
            left: Some(AdjacentLane {
                leader: Some(Neighbor {
                    gap: 3.0,
                    speed: 20.0,
                }),
                follower: Some(Neighbor {
                    gap: 3.0,
                    speed: 20.0,
                }),
                ends: false,
            }),
            right: None,
            need: Some(StrategicNeed {
                lanes: 1,
                distance: 50.0,
            }),
        };
        let d = lane_change_decide(&ego(20.0), &hood, &p, 0.1);
        assert_eq!(d.action, LaneAction::Stay);
        assert_eq!(d.mandatory, Some(Side::Left));
        assert!(d.cooperation);
    }

    #[test]
    fn zero_assertiveness_never_accepts() {
        let mut p = ParameterSet::ground_truth();
        p.lc_assertive = 0.0;
        assert!(!gap_admissible(None, None, 10.0, &p));
    }
}
