use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::microsim::idm::{ballistic_update, desired_gap, idm_acceleration};
use crate::microsim::lane_change::{
    gap_admissible, lane_change_decide, LaneAction, LaneDecision, Neighbor, Neighborhood,
    AdjacentLane, Side, COOLDOWN_S, SAFETY_MARGIN_M,
};
use crate::microsim::layout::LaneLayout;
use crate::scenario::{
    sample_departures, Destination, ParameterSet, RoadNetwork, ScenarioConfig, MAINLINE,
};

/// One vehicle. `position` is the front bumper.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    /// Local lane index at `position` (0 = rightmost lane present there).
    pub lane: usize,
    /// Lane identity that does not change when lanes are added or dropped.
    pub physical_lane: usize,
    pub position: f64,
    pub speed: f64,
    pub length: f64,
    pub destination: Destination,
    /// Time left before another lane change is allowed, s.
    pub cooldown: f64,
    /// How long a speed-gain motivation has held, `[left, right]`, s.
    pub gain_timers: [f64; 2],
}

#[derive(Debug, Clone)]
struct Origin {
    entry_x: f64,
    entry_lanes: Vec<usize>,
    schedule: Vec<(f64, Destination)>,
    next: usize,
    queue: VecDeque<Destination>,
}

/// What happened during one tick.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub inserted: Vec<u64>,
    /// Final states of vehicles that left the network this tick.
    pub exited: Vec<VehicleState>,
    pub lane_changes: Vec<LaneChangeEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeEvent {
    pub vehicle: u64,
    pub from: usize,
    pub to: usize,
    /// Gaps in the new lane right after the change.
    pub front: Option<Neighbor>,
    pub rear: Option<Neighbor>,
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct World {
    layout: LaneLayout,
    params: ParameterSet,
    vehicle_length: f64,
    time: f64,
    vehicles: Vec<VehicleState>,
    origins: Vec<Origin>,
    next_id: u64,
    inserted: u64,
    exited: u64,
}

type LaneLists = Vec<Vec<usize>>;

/// Below this speed a cooperating follower is treated as stopped, m/s.
const STUCK_SPEED: f64 = 0.5;

impl World {
    /// World with the scenario's demand scheduled from `seed`.
    pub fn new(scenario: &ScenarioConfig, params: &ParameterSet, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut world = World::empty(
            &scenario.network,
            params,
            scenario.simulation.vehicle_length_m,
        )?;
        for od in &scenario.demand.origins {
            let (entry_x, entry_lanes) = if od.id == MAINLINE {
                (0.0, world.layout.mainline().collect())
            } else {
                let (k, ramp) = scenario
                    .network
                    .on_ramp(&od.id)
                    .ok_or_else(|| Error::validation("demand.origins", format!("unknown origin {}", od.id)))?;
                (ramp.merge_start_m, vec![world.layout.ramp_lane(k)])
            };
            world.origins.push(Origin {
                entry_x,
                entry_lanes,
                schedule: sample_departures(&scenario.demand, &scenario.network, &od.id, seed)?,
                next: 0,
                queue: VecDeque::new(),
            });
        }
        Ok(world)
    }

    /// World without demand; vehicles are added with [`World::place_vehicle`].
    pub fn empty(network: &RoadNetwork, params: &ParameterSet, vehicle_length: f64) -> Result<Self> {
        network.validate()?;
        params.validate()?;
        Ok(World {
            layout: LaneLayout::new(network),
            params: *params,
            vehicle_length,
            time: 0.0,
            vehicles: Vec::new(),
            origins: Vec::new(),
            next_id: 0,
            inserted: 0,
            exited: 0,
        })
    }

    /// Puts a vehicle on the road at local lane `lane`. Returns its id.
    pub fn place_vehicle(
        &mut self,
        lane: usize,
        position: f64,
        speed: f64,
        destination: Destination,
    ) -> Result<u64> {
        let phys = self.layout.physical_from_local(lane, position).ok_or_else(|| {
            Error::validation("lane", format!("lane {lane} does not exist at {position} m"))
        })?;
        if !(0.0..self.layout.length).contains(&position) || !(speed >= 0.0) {
            return Err(Error::validation("vehicle", "position or speed out of range"));
        }
        Ok(self.add_vehicle(phys, position, speed, destination))
    }

    fn add_vehicle(&mut self, phys: usize, x: f64, v: f64, destination: Destination) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.inserted += 1;
        self.vehicles.push(VehicleState {
            id,
            lane: self.layout.local_index(phys, x),
            physical_lane: phys,
            position: x,
            speed: v,
            length: self.vehicle_length,
            destination,
            cooldown: 0.0,
            gain_timers: [0.0; 2],
        });
        id
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Vehicles on the road, ascending id.
    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn inserted_count(&self) -> u64 {
        self.inserted
    }

    pub fn exited_count(&self) -> u64 {
        self.exited
    }

    /// Vehicles whose arrival time has passed but that could not enter yet.
    pub fn queued_count(&self) -> usize {
        self.origins.iter().map(|o| o.queue.len()).sum()
    }

    pub fn lane_count(&self, x: f64) -> usize {
        (0..self.layout.num_physical())
            .filter(|&q| self.layout.covers(q, x))
            .count()
    }

    fn lane_lists(&self) -> LaneLists {
        let mut lists = vec![Vec::new(); self.layout.num_physical()];
        for (i, v) in self.vehicles.iter().enumerate() {
            lists[v.physical_lane].push(i);
        }
        for list in &mut lists {
            list.sort_by(|&a, &b| self.ahead_cmp(a, b));
        }
        lists
    }

    /// Orders vehicles downstream first; ties by id.
    fn ahead_cmp(&self, a: usize, b: usize) -> std::cmp::Ordering {
        let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
        vb.position
            .total_cmp(&va.position)
            .then(va.id.cmp(&vb.id))
    }

    /// Nearest vehicle ahead of and behind position `x` in `list`, skipping `skip`.
    fn around(&self, list: &[usize], x: f64, skip: usize) -> (Option<usize>, Option<usize>) {
        let mut leader = None;
        for &j in list {
            if j == skip {
                continue;
            }
            if self.vehicles[j].position > x {
                leader = Some(j);
            } else {
                return (leader, Some(j));
            }
        }
        (leader, None)
    }

    fn front_neighbor(&self, ego: &VehicleState, leader: usize) -> Neighbor {
        let l = &self.vehicles[leader];
        Neighbor {
            gap: l.position - l.length - ego.position,
            speed: l.speed,
        }
    }

    fn rear_neighbor(&self, ego: &VehicleState, follower: usize) -> Neighbor {
        let f = &self.vehicles[follower];
        Neighbor {
            gap: ego.position - ego.length - f.position,
            speed: f.speed,
        }
    }

    /// Own-lane leader, with the lane end acting as a standing obstacle.
    fn own_leader(&self, i: usize, lists: &LaneLists) -> Option<Neighbor> {
        let ego = &self.vehicles[i];
        let (leader, _) = self.around(&lists[ego.physical_lane], ego.position, i);
        let vehicle = leader.map(|l| self.front_neighbor(ego, l));
        let end = self.layout.lane_end(ego.physical_lane).map(|e| Neighbor {
            gap: e - ego.position,
            speed: 0.0,
        });
        match (vehicle, end) {
            (Some(a), Some(b)) => Some(if a.gap <= b.gap { a } else { b }),
            (a, b) => a.or(b),
        }
    }

    fn side_lane(&self, phys: usize, x: f64, side: Side) -> Option<usize> {
        match side {
            Side::Left => self.layout.left_of(phys, x),
            Side::Right => self.layout.right_of(phys, x),
        }
    }

    fn adjacent(&self, i: usize, q: usize, lists: &LaneLists) -> AdjacentLane {
        let ego = &self.vehicles[i];
        let (leader, follower) = self.around(&lists[q], ego.position, i);
        AdjacentLane {
            leader: leader.map(|l| self.front_neighbor(ego, l)),
            follower: follower.map(|f| self.rear_neighbor(ego, f)),
            ends: self.layout.lane_end(q).is_some(),
        }
    }

    fn neighborhood(&self, i: usize, lists: &LaneLists) -> Neighborhood {
        let ego = &self.vehicles[i];
        let (p, x) = (ego.physical_lane, ego.position);
        Neighborhood {
            leader: self.own_leader(i, lists),
            left: self.layout.left_of(p, x).map(|q| self.adjacent(i, q, lists)),
            right: self.layout.right_of(p, x).map(|q| self.adjacent(i, q, lists)),
            need: self.layout.strategic_need(p, x, ego.destination),
        }
    }

    fn remove_from(lists: &mut LaneLists, lane: usize, i: usize) {
        lists[lane].retain(|&j| j != i);
    }

    fn insert_sorted(&self, lists: &mut LaneLists, lane: usize, i: usize) {
        let at = lists[lane]
            .iter()
            .position(|&j| self.ahead_cmp(i, j) == std::cmp::Ordering::Less)
            .unwrap_or(lists[lane].len());
        lists[lane].insert(at, i);
    }

    /// Advances the world by one tick.
    ///
    /// Lane changes are decided on the pre-step state and applied in id
    /// order, each re-checked against the changes already applied. Then
    /// accelerations are computed on the post-change state, positions and
    /// speeds are integrated, exits are removed and arrivals inserted.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::validation("dt", format!("must be positive, got {dt}")));
        }
        let p = self.params;
        let mut report = StepReport::default();
        let mut lists = self.lane_lists();

        // (1) lane changes
        let decisions: Vec<LaneDecision> = (0..self.vehicles.len())
            .map(|i| lane_change_decide(&self.vehicles[i], &self.neighborhood(i, &lists), &p, dt))
            .collect();
        let mut blocked: Vec<Option<Side>> = vec![None; self.vehicles.len()];
        for (i, d) in decisions.iter().enumerate() {
            let v = &mut self.vehicles[i];
            v.gain_timers = d.gain_timers;
            v.cooldown = (v.cooldown - dt).max(0.0);
            let side = match d.action {
                LaneAction::Stay => {
                    if d.cooperation {
                        blocked[i] = d.mandatory;
                    }
                    continue;
                }
                LaneAction::Left => Side::Left,
                LaneAction::Right => Side::Right,
            };
            let (from, x) = (self.vehicles[i].physical_lane, self.vehicles[i].position);
            let Some(to) = self.side_lane(from, x, side) else { continue };
            let target = self.adjacent(i, to, &lists);
            if !gap_admissible(target.leader, target.follower, self.vehicles[i].speed, &p) {
                if d.mandatory.is_some() {
                    blocked[i] = d.mandatory;
                }
                continue;
            }
            Self::remove_from(&mut lists, from, i);
            let v = &mut self.vehicles[i];
            v.physical_lane = to;
            v.lane = self.layout.local_index(to, x);
            v.cooldown = COOLDOWN_S;
            v.gain_timers = [0.0; 2];
            self.insert_sorted(&mut lists, to, i);
            report.lane_changes.push(LaneChangeEvent {
                vehicle: self.vehicles[i].id,
                from,
                to,
                front: target.leader,
                rear: target.follower,
            });
        }

        // (2) accelerations on the post-change state
        let mut accel = Vec::with_capacity(self.vehicles.len());
        for i in 0..self.vehicles.len() {
            let v = self.vehicles[i].speed;
            let a = match self.own_leader(i, &lists) {
                Some(n) => idm_acceleration(v, v - n.speed, n.gap, true, &p)?,
                None => idm_acceleration(v, 0.0, 0.0, false, &p)?,
            };
            accel.push(a);
        }
        for i in 0..self.vehicles.len() {
            let Some(side) = blocked[i] else { continue };
            let ego = &self.vehicles[i];
            let Some(q) = self.side_lane(ego.physical_lane, ego.position, side) else {
                continue;
            };
            let (leader, follower) = self.around(&lists[q], ego.position, i);
            if let Some(l) = leader {
                // side by side counts as a zero gap: the ego drops back
                let n = self.front_neighbor(ego, l);
                let align = idm_acceleration(ego.speed, ego.speed - n.speed, n.gap, true, &p)?;
                accel[i] = accel[i].min(align.max(-p.b));
            }
            if let Some(f) = follower {
                let n = self.rear_neighbor(ego, f);
                // A follower that has already stopped too close cannot open the
                // gap any more; it drives on and the ego merges behind it.
                let stuck = n.speed < STUCK_SPEED
                    && !gap_admissible(None, Some(n), ego.speed, &p);
                if n.gap > 0.0 && !stuck {
                    // the follower aims for the gap the ego will accept, not its own
                    let scale = p.lc_assertive.min(1.0);
                    let target = (n.gap - SAFETY_MARGIN_M) * scale;
                    let yield_to =
                        idm_acceleration(n.speed, n.speed - ego.speed, target, true, &p)?;
                    accel[f] = accel[f].min(yield_to.max(-p.lc_cooperative * p.b));
                }
            }
        }

        // (3) ballistic update
        for (v, &a) in self.vehicles.iter_mut().zip(&accel) {
            let (x, speed, _) = ballistic_update(v.position, v.speed, a, dt);
            v.position = x;
            v.speed = speed;
            v.lane = self.layout.local_index(v.physical_lane, x);
        }
        self.time = ((self.time + dt) * 1e9).round() / 1e9;
        self.check_collisions()?;

        // (4) exits
        let layout = &self.layout;
        let mut kept = Vec::with_capacity(self.vehicles.len());
        for mut v in std::mem::take(&mut self.vehicles) {
            if let Destination::OffRamp(k) = v.destination {
                let (diverge, exit_lane) = layout.diverge(k);
                if v.position >= diverge {
                    if layout.local_index(v.physical_lane, diverge) == exit_lane {
                        report.exited.push(v);
                        continue;
                    }
                    // missed the exit; carries on to the mainline end
                    v.destination = Destination::MainlineEnd;
                }
            }
            if v.position >= layout.length {
                report.exited.push(v);
            } else {
                kept.push(v);
            }
        }
        self.vehicles = kept;
        self.exited += report.exited.len() as u64;

        // (5) arrivals
        for o in 0..self.origins.len() {
            let origin = &mut self.origins[o];
            while origin.next < origin.schedule.len() && origin.schedule[origin.next].0 <= self.time
            {
                origin.queue.push_back(origin.schedule[origin.next].1);
                origin.next += 1;
            }
            while let Some(&dest) = self.origins[o].queue.front() {
                let Some((lane, speed)) = self.entry_slot(o) else { break };
                self.origins[o].queue.pop_front();
                let x = self.origins[o].entry_x;
                report.inserted.push(self.add_vehicle(lane, x, speed, dest));
            }
        }
        Ok(report)
    }

    /// Entry lane and speed for the next vehicle of origin `o`, if any lane has room.
    fn entry_slot(&self, o: usize) -> Option<(usize, f64)> {
        let origin = &self.origins[o];
        let mut best: Option<(usize, f64, f64)> = None;
        for &lane in &origin.entry_lanes {
            let leader = self
                .vehicles
                .iter()
                .filter(|v| v.physical_lane == lane && v.position >= origin.entry_x)
                .min_by(|a, b| a.position.total_cmp(&b.position).then(a.id.cmp(&b.id)));
            let (gap, speed) = match leader {
                None => (f64::INFINITY, self.params.vf),
                Some(l) => (
                    l.position - l.length - origin.entry_x,
                    l.speed.min(self.params.vf),
                ),
            };
            if gap <= 0.0 || gap < desired_gap(speed, 0.0, &self.params) {
                continue;
            }
            if best.is_none_or(|(_, g, _)| gap > g) {
                best = Some((lane, gap, speed));
            }
        }
        best.map(|(lane, _, speed)| (lane, speed))
    }

    fn check_collisions(&self) -> Result<()> {
        for (lane, list) in self.lane_lists().iter().enumerate() {
            for w in list.windows(2) {
                let (lead, follow) = (&self.vehicles[w[0]], &self.vehicles[w[1]]);
                if lead.position - lead.length - follow.position <= 0.0 {
                    return Err(Error::Collision {
                        time: self.time,
                        lane,
                        follower: follow.id,
                        leader: lead.id,
                    });
                }
            }
            if let Some(end) = self.layout.lane_end(lane) {
                if let Some(&first) = list.first() {
                    let v = &self.vehicles[first];
                    if v.position > end {
                        return Err(Error::LaneOverrun {
                            time: self.time,
                            vehicle: v.id,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}
