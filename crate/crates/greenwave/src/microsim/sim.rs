//! The discrete-time point-queue simulator.
//!
//! Vehicles traverse lanes at free-flow speed and wait in a vertical FIFO
//! queue at the stop line; a queue occupies `vehicle_gap` meters of
//! storage per vehicle, and a lane whose queue storage reaches its length
//! is full (spillback). Green queues discharge at the saturation rate.
//! Each tick runs, in order: insertions, queue discharge, free-flow
//! movement, emission accrual, signal timers.

use super::emissions::{EmissionCoefficients, EmissionLedger, Pollutant};
use super::schedule::{InsertionSchedule, ScheduleError};
use crate::network::{AgentIdx, IntersectionIdx, LaneIdx, NetworkSpec, PhaseIdx, RouteIdx};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown agent index {0}")]
    UnknownAgent(AgentIdx),
    #[error("agent {agent} has no phase {phase}")]
    UnknownPhase { agent: AgentIdx, phase: PhaseIdx },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Tunable dynamics constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Queue discharge rate per green lane, vehicles/second.
    pub saturation_rate: f64,
    /// Storage length one queued vehicle occupies, meters.
    pub vehicle_gap: f64,
    /// Yellow transition duration on every phase change, seconds.
    pub yellow_time: f64,
    /// How long a vehicle emits at the acceleration rate after leaving a
    /// queue, seconds.
    pub accel_duration: f64,
    /// Time intervals for the per-interval emission breakdown.
    pub report_intervals: Vec<(f64, f64)>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            saturation_rate: 0.5,
            vehicle_gap: 7.0,
            yellow_time: 2.0,
            accel_duration: 4.0,
            report_intervals: super::emissions::DEFAULT_INTERVALS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleState {
    FreeFlow,
    Queued,
    Exited,
}

/// Driving regime a vehicle was billed under for the latest tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Idle,
    Cruise,
    Accel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: usize,
    pub route: RouteIdx,
    /// Position within the route's lane list.
    pub route_pos: usize,
    /// Meters from the start of the current lane.
    pub pos: f64,
    pub speed: f64,
    pub state: VehicleState,
    /// Remaining seconds of acceleration-rate emissions.
    pub accel_remaining: f64,
    /// Regime billed for the most recent tick, for shadow accounting.
    pub last_regime: Option<Regime>,
}

impl Vehicle {
    pub fn current_lane(&self, spec: &NetworkSpec) -> LaneIdx {
        spec.route(self.route)[self.route_pos]
    }
}

/// A signal head: the active phase, plus the pending phase while the
/// yellow transition runs. During yellow every incoming lane is red.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMachine {
    pub intersection: IntersectionIdx,
    pub current_phase: PhaseIdx,
    pub pending_phase: Option<PhaseIdx>,
    pub yellow_remaining: f64,
}

#[derive(Debug, Clone, Default)]
struct LaneRuntime {
    /// Queued vehicle ids, front at the stop line.
    queue: VecDeque<usize>,
    /// Free-flowing vehicle ids on this lane.
    moving: Vec<usize>,
    /// Fractional discharge budget, vehicles.
    discharge_credit: f64,
}

/// Complete mutable simulator state for one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    spec: Arc<NetworkSpec>,
    params: SimParams,
    coeffs: EmissionCoefficients,
    clock: f64,
    vehicles: Vec<Vehicle>,
    lanes: Vec<LaneRuntime>,
    signals: Vec<Option<SignalMachine>>,
    ledger: EmissionLedger,
    schedule: InsertionSchedule,
    schedule_cursor: usize,
    /// Routes whose insertion was blocked by a full entry lane, retried
    /// in FIFO order.
    deferred: VecDeque<RouteIdx>,
    inserted: u64,
    exited: u64,
    deferred_events: u64,
}

impl SimState {
    /// Fresh simulator at clock 0: no vehicles, every signal at its first
    /// phase, empty ledger.
    pub fn new(
        spec: Arc<NetworkSpec>,
        schedule: InsertionSchedule,
        coeffs: EmissionCoefficients,
        params: SimParams,
    ) -> Result<Self, SimError> {
        schedule.validate(&spec)?;
        let signals = spec
            .intersections()
            .iter()
            .enumerate()
            .map(|(idx, i)| {
                (!i.phases.is_empty()).then_some(SignalMachine {
                    intersection: idx,
                    current_phase: 0,
                    pending_phase: None,
                    yellow_remaining: 0.0,
                })
            })
            .collect();
        let ledger = EmissionLedger::new(spec.lanes().len(), &params.report_intervals);
        Ok(SimState {
            lanes: vec![LaneRuntime::default(); spec.lanes().len()],
            signals,
            ledger,
            schedule,
            schedule_cursor: 0,
            deferred: VecDeque::new(),
            inserted: 0,
            exited: 0,
            deferred_events: 0,
            clock: 0.0,
            vehicles: Vec::new(),
            params,
            coeffs,
            spec,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn ledger(&self) -> &EmissionLedger {
        &self.ledger
    }

    pub fn seed(&self) -> u64 {
        self.schedule.seed
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn exited(&self) -> u64 {
        self.exited
    }

    /// Insertions that found their entry lane full at least once.
    pub fn deferred_events(&self) -> u64 {
        self.deferred_events
    }

    /// Insertions currently waiting for entry room.
    pub fn deferred_pending(&self) -> usize {
        self.deferred.len()
    }

    pub fn signal(&self, agent: AgentIdx) -> &SignalMachine {
        let node = self.agent_node(agent);
        self.signals[node].as_ref().expect("agents are signalized")
    }

    /// Vehicles still on the network.
    pub fn running_vehicles(&self) -> u64 {
        self.inserted - self.exited
    }

    /// Requests `phase` for `agent`. Same phase: no-op. Different phase:
    /// starts (or redirects) a yellow transition; a request arriving
    /// during yellow replaces the pending phase without resetting the
    /// yellow clock.
    pub fn apply_action(&mut self, agent: AgentIdx, phase: PhaseIdx) -> Result<(), SimError> {
        if agent >= self.spec.n_agents() {
            return Err(SimError::UnknownAgent(agent));
        }
        let node = self.agent_node(agent);
        if phase >= self.spec.intersections()[node].phases.len() {
            return Err(SimError::UnknownPhase { agent, phase });
        }
        let yellow = self.params.yellow_time;
        let signal = self.signals[node].as_mut().expect("agents are signalized");
        if phase == signal.current_phase {
            return Ok(());
        }
        if signal.yellow_remaining > 0.0 {
            signal.pending_phase = Some(phase);
        } else {
            signal.pending_phase = Some(phase);
            signal.yellow_remaining = yellow;
        }
        Ok(())
    }

    fn agent_node(&self, agent: AgentIdx) -> IntersectionIdx {
        // AgentIdx -> IntersectionIdx is a fixed mapping on the spec.
        let id = self.spec.agent_id(agent);
        self.spec.intersection_index(id).expect("agent id resolves")
    }

    /// Advances the simulation by `dt` seconds (1 s everywhere in
    /// practice).
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "step needs dt > 0");
        self.insert_scheduled();
        self.discharge_queues(dt);
        self.move_free_flow(dt);
        self.accrue_emissions(dt);
        self.update_signals(dt);
        self.clock += dt;
    }

    /// Number of vehicles within the sensor zone of each incoming lane of
    /// `agent`, in lane declaration order.
    pub fn measure_wave(&self, agent: AgentIdx) -> Vec<u32> {
        self.spec
            .agent_lanes(agent)
            .iter()
            .map(|&l| {
                let lane = self.spec.lane(l);
                let rt = &self.lanes[l];
                rt.moving
                    .iter()
                    .chain(rt.queue.iter())
                    .filter(|&&v| lane.length - self.vehicles[v].pos <= lane.sensor_zone)
                    .count() as u32
            })
            .collect()
    }

    /// Stopped vehicles (speed < 0.1 m/s) over all incoming lanes of
    /// `agent`.
    pub fn measure_queue(&self, agent: AgentIdx) -> u32 {
        self.spec
            .agent_lanes(agent)
            .iter()
            .map(|&l| {
                let rt = &self.lanes[l];
                rt.moving
                    .iter()
                    .chain(rt.queue.iter())
                    .filter(|&&v| self.vehicles[v].speed < 0.1)
                    .count() as u32
            })
            .sum()
    }

    /// Cumulative per-pollutant totals, indexed by [`Pollutant::index`].
    pub fn cumulative_emissions(&self) -> [f64; 6] {
        self.ledger.totals()
    }

    // ------------------------------------------------------------------
    // Tick phases
    // ------------------------------------------------------------------

    fn lane_full(&self, lane: LaneIdx) -> bool {
        let l = self.spec.lane(lane);
        self.lanes[lane].queue.len() as f64 * self.params.vehicle_gap >= l.length
    }

    fn insert_scheduled(&mut self) {
        // Deferred insertions retry first, oldest first, without blocking
        // other lanes behind a still-full one.
        let deferred: Vec<RouteIdx> = self.deferred.drain(..).collect();
        for route in deferred {
            if !self.try_insert(route) {
                self.deferred.push_back(route);
            }
        }
        while self.schedule_cursor < self.schedule.entries.len()
            && (self.schedule.entries[self.schedule_cursor].time_step as f64) <= self.clock
        {
            let route = self.schedule.entries[self.schedule_cursor].route;
            self.schedule_cursor += 1;
            if !self.try_insert(route) {
                self.deferred.push_back(route);
                self.deferred_events += 1;
            }
        }
    }

    fn try_insert(&mut self, route: RouteIdx) -> bool {
        let entry = self.spec.route(route)[0];
        if self.lane_full(entry) {
            return false;
        }
        let id = self.vehicles.len();
        self.vehicles.push(Vehicle {
            id,
            route,
            route_pos: 0,
            pos: 0.0,
            speed: self.spec.lane(entry).free_speed,
            state: VehicleState::FreeFlow,
            accel_remaining: 0.0,
            last_regime: None,
        });
        self.lanes[entry].moving.push(id);
        self.inserted += 1;
        true
    }

    /// May the stop line of `lane` be crossed right now?
    fn stop_line_open(&self, lane: LaneIdx) -> bool {
        match self.spec.lane_controller(lane) {
            Some(node) => match &self.signals[node] {
                Some(signal) => {
                    signal.yellow_remaining <= 0.0
                        && self.spec.intersections()[node].phases[signal.current_phase]
                            .is_green(lane)
                }
                None => true,
            },
            None => true,
        }
    }

    fn reindex_queue(&mut self, lane: LaneIdx) {
        let length = self.spec.lane(lane).length;
        let gap = self.params.vehicle_gap;
        let ids: Vec<usize> = self.lanes[lane].queue.iter().copied().collect();
        for (k, id) in ids.into_iter().enumerate() {
            self.vehicles[id].pos = (length - k as f64 * gap).max(0.0);
        }
    }

    fn discharge_queues(&mut self, dt: f64) {
        let credit_cap = (self.params.saturation_rate * dt).max(1.0);
        for node in 0..self.spec.intersections().len() {
            let Some(signal) = self.signals[node].clone() else {
                continue;
            };
            let yellow = signal.yellow_remaining > 0.0;
            let incoming = self.spec.intersections()[node].incoming_lanes.clone();
            for lane in incoming {
                let green = !yellow
                    && self.spec.intersections()[node].phases[signal.current_phase].is_green(lane);
                if !green || self.lanes[lane].queue.is_empty() {
                    self.lanes[lane].discharge_credit = 0.0;
                    continue;
                }
                let mut credit =
                    (self.lanes[lane].discharge_credit + self.params.saturation_rate * dt).min(credit_cap);
                while credit >= 1.0 {
                    let Some(&front) = self.lanes[lane].queue.front() else {
                        break;
                    };
                    let route = self.spec.route(self.vehicles[front].route);
                    let is_last = self.vehicles[front].route_pos + 1 >= route.len();
                    if is_last {
                        self.lanes[lane].queue.pop_front();
                        self.vehicles[front].state = VehicleState::Exited;
                        self.vehicles[front].pos = self.spec.lane(lane).length;
                        self.exited += 1;
                    } else {
                        let next = route[self.vehicles[front].route_pos + 1];
                        if self.lane_full(next) {
                            break; // spillback: FIFO head blocked
                        }
                        self.lanes[lane].queue.pop_front();
                        let v = &mut self.vehicles[front];
                        v.route_pos += 1;
                        v.pos = 0.0;
                        v.speed = self.spec.lane(next).free_speed;
                        v.state = VehicleState::FreeFlow;
                        v.accel_remaining = self.params.accel_duration;
                        self.lanes[next].moving.push(front);
                    }
                    credit -= 1.0;
                    self.reindex_queue(lane);
                }
                self.lanes[lane].discharge_credit = if self.lanes[lane].queue.is_empty() {
                    0.0
                } else {
                    credit
                };
            }
        }
    }

    fn move_free_flow(&mut self, dt: f64) {
        let n_lanes = self.spec.lanes().len();
        let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); n_lanes];
        for lane in 0..n_lanes {
            let mut ids = std::mem::take(&mut self.lanes[lane].moving);
            // Closest to the stop line moves first so queue joins stay
            // FIFO; ties broken by insertion order.
            ids.sort_by(|&a, &b| {
                self.vehicles[b]
                    .pos
                    .partial_cmp(&self.vehicles[a].pos)
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for id in ids {
                match self.advance_vehicle(id, dt) {
                    Placement::Stay(l) if l == lane => self.lanes[lane].moving.push(id),
                    Placement::Stay(l) => arrivals[l].push(id),
                    Placement::Settled => {}
                }
            }
        }
        for (lane, mut ids) in arrivals.into_iter().enumerate() {
            self.lanes[lane].moving.append(&mut ids);
        }
    }

    /// Moves one free-flowing vehicle for `dt` seconds, crossing as many
    /// stop lines as time and signals allow.
    fn advance_vehicle(&mut self, id: usize, dt: f64) -> Placement {
        let mut time_left = dt;
        loop {
            let v = &self.vehicles[id];
            let lane = v.current_lane(&self.spec);
            let l = self.spec.lane(lane);
            let queue_len = self.lanes[lane].queue.len();
            // The queue can have spilled past this vehicle; never move
            // backwards while free-flowing.
            let boundary =
                (l.length - queue_len as f64 * self.params.vehicle_gap).max(v.pos);
            let time_to_boundary = (boundary - v.pos) / l.free_speed;
            if time_to_boundary > time_left {
                self.vehicles[id].pos += time_left * l.free_speed;
                return Placement::Stay(lane);
            }
            time_left -= time_to_boundary;

            let route = self.spec.route(v.route);
            let is_last = v.route_pos + 1 >= route.len();
            let next = (!is_last).then(|| route[v.route_pos + 1]);
            let open = queue_len == 0
                && self.stop_line_open(lane)
                && next.map_or(true, |n| !self.lane_full(n));
            if !open {
                // Join the back of the queue at its storage slot.
                let slot = (l.length - queue_len as f64 * self.params.vehicle_gap).max(0.0);
                let v = &mut self.vehicles[id];
                v.pos = slot;
                v.speed = 0.0;
                v.state = VehicleState::Queued;
                self.lanes[lane].queue.push_back(id);
                return Placement::Settled;
            }
            match next {
                None => {
                    let v = &mut self.vehicles[id];
                    v.pos = l.length;
                    v.state = VehicleState::Exited;
                    self.exited += 1;
                    return Placement::Settled;
                }
                Some(next) => {
                    let v = &mut self.vehicles[id];
                    v.route_pos += 1;
                    v.pos = 0.0;
                    v.speed = self.spec.lane(next).free_speed;
                    if time_left <= 0.0 {
                        return Placement::Stay(next);
                    }
                }
            }
        }
    }

    fn accrue_emissions(&mut self, dt: f64) {
        for id in 0..self.vehicles.len() {
            let regime = match self.vehicles[id].state {
                VehicleState::Exited => {
                    self.vehicles[id].last_regime = None;
                    continue;
                }
                VehicleState::Queued => Regime::Idle,
                VehicleState::FreeFlow => {
                    if self.vehicles[id].accel_remaining > 0.0 {
                        self.vehicles[id].accel_remaining =
                            (self.vehicles[id].accel_remaining - dt).max(0.0);
                        Regime::Accel
                    } else {
                        Regime::Cruise
                    }
                }
            };
            let lane = self.vehicles[id].current_lane(&self.spec);
            let mut mass = [0.0; 6];
            for p in Pollutant::ALL {
                let r = self.coeffs.rates(p);
                let rate = match regime {
                    Regime::Idle => r.idle,
                    Regime::Cruise => r.cruise,
                    Regime::Accel => r.accel,
                };
                mass[p.index()] = rate * dt;
            }
            self.ledger.accrue(lane, self.clock, &mass);
            self.vehicles[id].last_regime = Some(regime);
        }
    }

    fn update_signals(&mut self, dt: f64) {
        for signal in self.signals.iter_mut().flatten() {
            if signal.yellow_remaining > 0.0 {
                signal.yellow_remaining -= dt;
                if signal.yellow_remaining <= 1e-9 {
                    signal.yellow_remaining = 0.0;
                    if let Some(p) = signal.pending_phase.take() {
                        signal.current_phase = p;
                    }
                }
            }
        }
    }
}

enum Placement {
    /// Still free-flowing on the given lane.
    Stay(LaneIdx),
    /// Queued or exited; no longer on a moving list.
    Settled,
}
