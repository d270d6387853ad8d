//! Per-second episode traces: running vehicles, per-agent queues, and
//! cumulative per-pollutant emissions. The CSV form is the exchange
//! format between simulation runs and the report stage.

use super::emissions::Pollutant;
use super::sim::SimState;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {0}: {1}")]
    Malformed(usize, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub running: u64,
    /// Queue per agent, agent order.
    pub queues: Vec<u32>,
    /// Cumulative grams (fuel mL), [`Pollutant::index`] order.
    pub cumulative: [f64; 6],
}

/// One row per simulated second.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub agent_ids: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn for_sim(sim: &SimState) -> Self {
        EpisodeTrace {
            agent_ids: (0..sim.spec().n_agents())
                .map(|a| sim.spec().agent_id(a).to_string())
                .collect(),
            rows: Vec::new(),
        }
    }

    /// Samples the simulator after a tick.
    pub fn record(&mut self, sim: &SimState) {
        self.rows.push(TraceRow {
            t: sim.clock(),
            running: sim.running_vehicles(),
            queues: (0..sim.spec().n_agents())
                .map(|a| sim.measure_queue(a))
                .collect(),
            cumulative: sim.cumulative_emissions(),
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,running_vehicles");
        for id in &self.agent_ids {
            out.push_str(&format!(",queue_{id}"));
        }
        for p in Pollutant::ALL {
            out.push_str(&format!(",{}_cumulative", p.label()));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{}", row.t, row.running));
            for q in &row.queues {
                out.push_str(&format!(",{q}"));
            }
            for v in row.cumulative {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| TraceError::Malformed(0, "empty trace".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let n_agents = cols
            .iter()
            .filter(|c| c.starts_with("queue_"))
            .count();
        let agent_ids = cols
            .iter()
            .filter_map(|c| c.strip_prefix("queue_"))
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 + n_agents + 6 {
                return Err(TraceError::Malformed(
                    n + 1,
                    format!("expected {} fields, got {}", 2 + n_agents + 6, fields.len()),
                ));
            }
            let parse = |s: &str| -> Result<f64, TraceError> {
                s.parse()
                    .map_err(|e| TraceError::Malformed(n + 1, format!("bad number `{s}`: {e}")))
            };
            let mut cumulative = [0.0; 6];
            for (i, c) in cumulative.iter_mut().enumerate() {
                *c = parse(fields[2 + n_agents + i])?;
            }
            rows.push(TraceRow {
                t: parse(fields[0])?,
                running: parse(fields[1])? as u64,
                queues: fields[2..2 + n_agents]
                    .iter()
                    .map(|s| parse(s).map(|v| v as u32))
                    .collect::<Result<_, _>>()?,
                cumulative,
            });
        }
        Ok(EpisodeTrace { agent_ids, rows })
    }
}
