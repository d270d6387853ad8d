//! Vehicle insertion schedules: which route enters the network at which
//! second. Schedules are generated up front so a whole episode is a pure
//! function of (network, schedule, actions).

use crate::network::{NetworkSpec, RouteIdx};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("entry {0}: route index {1} out of range ({2} routes)")]
    BadRoute(usize, RouteIdx, usize),
    #[error("entry {0}: time step {1} precedes entry {2} at {3}")]
    OutOfOrder(usize, u64, usize, u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionEntry {
    /// Second at which the vehicle enters (inserted during the tick that
    /// advances the clock past this value).
    pub time_step: u64,
    pub route: RouteIdx,
}

/// A time-ordered list of vehicle insertions plus the seed that produced
/// it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionSchedule {
    pub entries: Vec<InsertionEntry>,
    pub seed: u64,
}

impl InsertionSchedule {
    pub fn validate(&self, spec: &NetworkSpec) -> Result<(), ScheduleError> {
        let n_routes = spec.routes().len();
        for (i, e) in self.entries.iter().enumerate() {
            if e.route >= n_routes {
                return Err(ScheduleError::BadRoute(i, e.route, n_routes));
            }
            if i > 0 && e.time_step < self.entries[i - 1].time_step {
                return Err(ScheduleError::OutOfOrder(
                    i,
                    e.time_step,
                    i - 1,
                    self.entries[i - 1].time_step,
                ));
            }
        }
        Ok(())
    }

    /// The insertion shape used throughout: one vehicle per second on a
    /// random route until `n_vehicles` have entered, then nothing for the
    /// rest of the episode. With 2000 vehicles and a 3600 s episode this
    /// fills exactly the first 5/9 of the episode.
    pub fn uniform_demand(spec: &NetworkSpec, n_vehicles: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_routes = spec.routes().len();
        let entries = (0..n_vehicles)
            .map(|t| InsertionEntry {
                time_step: t,
                route: rng.random_range(0..n_routes),
            })
            .collect();
        InsertionSchedule { entries, seed }
    }

    /// `n_vehicles` spread evenly over `[0, window)` seconds, random
    /// routes. Used by tests that need other demand shapes.
    pub fn spread(spec: &NetworkSpec, n_vehicles: u64, window: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_routes = spec.routes().len();
        let entries = (0..n_vehicles)
            .map(|k| InsertionEntry {
                time_step: k * window / n_vehicles.max(1),
                route: rng.random_range(0..n_routes),
            })
            .collect();
        InsertionSchedule { entries, seed }
    }

    pub fn empty() -> Self {
        InsertionSchedule {
            entries: Vec::new(),
            seed: 0,
        }
    }
}
