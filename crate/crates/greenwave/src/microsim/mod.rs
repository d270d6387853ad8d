//! Deterministic discrete-time traffic microsimulation with emission
//! accounting: vehicle insertion, point-queue dynamics, signal machines
//! with yellow transitions, wave/queue sensors, and a per-lane emission
//! ledger.

mod emissions;
mod schedule;
mod sim;
mod trace;

pub use emissions::{
    EmissionCoefficients, EmissionError, EmissionLedger, Pollutant, RegimeRates, DEFAULT_INTERVALS,
};
pub use schedule::{InsertionEntry, InsertionSchedule, ScheduleError};
pub use sim::{Regime, SignalMachine, SimError, SimParams, SimState, Vehicle, VehicleState};
pub use trace::{EpisodeTrace, TraceError, TraceRow};

#[cfg(test)]
mod tests;
