//! Three-regime emission accounting: every active vehicle accrues mass at
//! an idle, cruise, or acceleration rate depending on what it did during
//! the tick. The ledger aggregates per lane, per pre-declared time
//! interval, and network-wide.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// Tracked pollutant species. `Fuel` rides along in mL instead of grams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pollutant {
    Co2,
    Co,
    Nox,
    Pmx,
    Hc,
    Fuel,
}

impl Pollutant {
    pub const ALL: [Pollutant; 6] = [
        Pollutant::Co2,
        Pollutant::Co,
        Pollutant::Nox,
        Pollutant::Pmx,
        Pollutant::Hc,
        Pollutant::Fuel,
    ];

    pub const fn index(self) -> usize {
        match self {
            Pollutant::Co2 => 0,
            Pollutant::Co => 1,
            Pollutant::Nox => 2,
            Pollutant::Pmx => 3,
            Pollutant::Hc => 4,
            Pollutant::Fuel => 5,
        }
    }

    /// Key used in coefficient files and report headers.
    pub const fn label(self) -> &'static str {
        match self {
            Pollutant::Co2 => "CO2",
            Pollutant::Co => "CO",
            Pollutant::Nox => "NOx",
            Pollutant::Pmx => "PMx",
            Pollutant::Hc => "HC",
            Pollutant::Fuel => "fuel",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        Pollutant::ALL.into_iter().find(|p| p.label() == s)
    }
}

/// Emission rates for one pollutant, g/s (fuel: mL/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeRates {
    pub idle: f64,
    pub cruise: f64,
    pub accel: f64,
}

#[derive(Debug, Error)]
pub enum EmissionError {
    #[error("failed to read coefficient file: {0}")]
    Io(#[from] std::io::Error),
    #[error("coefficient file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("missing coefficients for pollutant `{0}`")]
    Missing(&'static str),
    #[error("pollutant `{0}`: rates must satisfy accel >= cruise >= idle > 0, got idle {1}, cruise {2}, accel {3}")]
    BadRates(&'static str, f64, f64, f64),
    #[error("unknown pollutant key `{0}`")]
    UnknownPollutant(String),
}

/// Per-pollutant rate table for the three driving regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionCoefficients {
    rates: [RegimeRates; 6],
}

impl EmissionCoefficients {
    pub fn new(rates: [RegimeRates; 6]) -> Result<Self, EmissionError> {
        let coeffs = EmissionCoefficients { rates };
        coeffs.validate()?;
        Ok(coeffs)
    }

    pub fn rates(&self, p: Pollutant) -> RegimeRates {
        self.rates[p.index()]
    }

    fn validate(&self) -> Result<(), EmissionError> {
        for p in Pollutant::ALL {
            let r = self.rates[p.index()];
            if !(r.idle > 0.0 && r.cruise >= r.idle && r.accel >= r.cruise) {
                return Err(EmissionError::BadRates(p.label(), r.idle, r.cruise, r.accel));
            }
        }
        Ok(())
    }

    /// Loads a `{"CO2": {"idle": .., "cruise": .., "accel": ..}, ...}`
    /// file covering all six pollutants.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmissionError> {
        let text = std::fs::read_to_string(path)?;
        let map: BTreeMap<String, RegimeRates> = serde_json::from_str(&text)?;
        let mut rates = [RegimeRates {
            idle: 0.0,
            cruise: 0.0,
            accel: 0.0,
        }; 6];
        let mut seen = [false; 6];
        for (key, r) in &map {
            let p = Pollutant::from_label(key)
                .ok_or_else(|| EmissionError::UnknownPollutant(key.clone()))?;
            rates[p.index()] = *r;
            seen[p.index()] = true;
        }
        for p in Pollutant::ALL {
            if !seen[p.index()] {
                return Err(EmissionError::Missing(p.label()));
            }
        }
        EmissionCoefficients::new(rates)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmissionError> {
        let map: BTreeMap<&str, RegimeRates> = Pollutant::ALL
            .into_iter()
            .map(|p| (p.label(), self.rates(p)))
            .collect();
        std::fs::write(path, serde_json::to_string_pretty(&map)?)?;
        Ok(())
    }
}

impl Default for EmissionCoefficients {
    /// Passenger-car scale rates; idling still burns, acceleration
    /// roughly doubles cruise.
    fn default() -> Self {
        let r = |idle, cruise, accel| RegimeRates { idle, cruise, accel };
        EmissionCoefficients {
            rates: [
                r(0.8, 2.0, 4.0),       // CO2 g/s
                r(0.003, 0.008, 0.016), // CO g/s
                r(0.0008, 0.002, 0.004), // NOx g/s
                r(0.00005, 0.0001, 0.0002), // PMx g/s
                r(0.001, 0.002, 0.004), // HC g/s
                r(0.3, 0.8, 1.6),       // fuel mL/s
            ],
        }
    }
}

/// Default reporting intervals in seconds.
pub const DEFAULT_INTERVALS: [(f64, f64); 3] = [(0.0, 1000.0), (1000.0, 2000.0), (2000.0, 3600.0)];

/// Cumulative emission mass per lane and per declared time interval.
/// Interval membership is half-open: a tick starting at time `t` belongs
/// to the first interval with `t0 <= t < t1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionLedger {
    intervals: Vec<(f64, f64)>,
    /// `[lane][pollutant]` cumulative over the whole episode.
    per_lane: Vec<[f64; 6]>,
    /// `[interval][lane][pollutant]`.
    per_interval: Vec<Vec<[f64; 6]>>,
    totals: [f64; 6],
}

impl EmissionLedger {
    pub fn new(n_lanes: usize, intervals: &[(f64, f64)]) -> Self {
        EmissionLedger {
            intervals: intervals.to_vec(),
            per_lane: vec![[0.0; 6]; n_lanes],
            per_interval: vec![vec![[0.0; 6]; n_lanes]; intervals.len()],
            totals: [0.0; 6],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn n_lanes(&self) -> usize {
        self.per_lane.len()
    }

    /// Adds `mass[p] = rate[p] * dt` for one vehicle-tick on `lane`
    /// starting at time `t`.
    pub fn accrue(&mut self, lane: usize, t: f64, mass: &[f64; 6]) {
        let slot = self
            .intervals
            .iter()
            .position(|&(t0, t1)| t0 <= t && t < t1);
        for i in 0..6 {
            self.per_lane[lane][i] += mass[i];
            self.totals[i] += mass[i];
            if let Some(s) = slot {
                self.per_interval[s][lane][i] += mass[i];
            }
        }
    }

    pub fn network_total(&self, p: Pollutant) -> f64 {
        self.totals[p.index()]
    }

    pub fn lane_total(&self, lane: usize, p: Pollutant) -> f64 {
        self.per_lane[lane][p.index()]
    }

    pub fn interval_lane(&self, interval: usize, lane: usize, p: Pollutant) -> f64 {
        self.per_interval[interval][lane][p.index()]
    }

    pub fn interval_total(&self, interval: usize, p: Pollutant) -> f64 {
        self.per_interval[interval]
            .iter()
            .map(|l| l[p.index()])
            .sum()
    }

    pub fn totals(&self) -> [f64; 6] {
        self.totals
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmissionError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmissionError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}
