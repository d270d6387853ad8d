//! Episode orchestration: sensor reads, observation assembly, action
//! selection, interaction-spaced environment stepping, experience
//! buffers, per-agent updates, checkpoints, and the fixed-time baseline.

mod episode;
mod update;

pub use episode::{
    run_baseline_episode, run_episode, EpisodeLog, EpisodeRun, Mode, StepRecord,
};
pub use update::{update_agents, update_single_agent, AgentBatch, AgentUpdateStats};

use crate::marl::{HyperParams, MarlError};
use crate::microsim::{
    EmissionCoefficients, InsertionSchedule, SimError, SimParams, TraceError,
};
use crate::network::{AgentIdx, NetworkSpec};
use crate::nn::{init_params, AgentNet, NnError};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Marl(#[from] MarlError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("checkpoint format {found} unsupported (expected {expected})")]
    CheckpointFormat { found: u32, expected: u32 },
    #[error("checkpoint was built for agents {expected:?}, network has {found:?}")]
    CheckpointMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("update on a partial buffer ({got}/{expected}) outside episode end")]
    PartialBuffer { got: usize, expected: usize },
    #[error("config: {0}")]
    BadConfig(String),
}

/// Training-run configuration; everything a run needs beyond the network
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hp: HyperParams,
    /// Total agent-interaction budget. An episode consumes
    /// `episode_seconds / delta_t` interactions (720 with the defaults).
    pub total_training_steps: u64,
    /// Checkpoint every N episodes (0 = only at the end).
    pub checkpoint_every: u64,
    /// Evaluate every N episodes (0 = never).
    pub eval_every: u64,
    pub seed: u64,
    pub sim: SimParams,
    /// Fraction of the episode during which vehicles enter; the default
    /// front-loads all demand into the first 5/9 of the episode (2000 s
    /// of 3600 s), after which nothing is inserted.
    pub insertion_window_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: HyperParams::default(),
            total_training_steps: 50_000,
            checkpoint_every: 20,
            eval_every: 0,
            seed: 1,
            sim: SimParams::default(),
            insertion_window_fraction: 5.0 / 9.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        self.hp.validate()?;
        let ticks = self.hp.delta_t;
        if ticks.fract() != 0.0 || ticks < 1.0 {
            return Err(TrainerError::BadConfig(format!(
                "delta_t must be a whole number of seconds, got {ticks}"
            )));
        }
        if (self.hp.episode_seconds / self.hp.delta_t).fract() != 0.0 {
            return Err(TrainerError::BadConfig(format!(
                "episode_seconds {} must be a multiple of delta_t {}",
                self.hp.episode_seconds, self.hp.delta_t
            )));
        }
        if !(0.0..=1.0).contains(&self.insertion_window_fraction)
            || self.insertion_window_fraction <= 0.0
        {
            return Err(TrainerError::BadConfig(format!(
                "insertion_window_fraction must lie in (0, 1], got {}",
                self.insertion_window_fraction
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainerError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Input dimensions of agent `a`'s networks: wave part, fingerprint
/// part, and its action count.
pub fn agent_dims(spec: &NetworkSpec, agent: AgentIdx) -> (usize, usize, usize) {
    let neighbors = &spec.neighbor_graph()[agent];
    let wave_dim = spec.agent_lanes(agent).len()
        + neighbors
            .iter()
            .map(|&j| spec.agent_lanes(j).len())
            .sum::<usize>();
    let fp_dim = neighbors.iter().map(|&j| spec.n_actions(j)).sum::<usize>();
    (wave_dim, fp_dim, spec.n_actions(agent))
}

/// Fresh per-agent networks for a network spec, deterministic in `seed`.
pub fn init_agents(spec: &NetworkSpec, seed: u64) -> Vec<AgentNet> {
    (0..spec.n_agents())
        .map(|a| {
            let (wave_dim, fp_dim, n_actions) = agent_dims(spec, a);
            init_params(wave_dim, fp_dim, n_actions, mix_seed(seed, a as u64))
        })
        .collect()
}

/// The demand shape used for training and evaluation: `n_vehicles`
/// spread evenly over the first `window_fraction` of the episode, random
/// routes, nothing afterwards. With 2000 vehicles, a 3600 s episode and
/// the default fraction this is exactly one vehicle per second for the
/// first 2000 s.
pub fn demand_schedule(
    spec: &NetworkSpec,
    n_vehicles: u64,
    episode_seconds: f64,
    window_fraction: f64,
    seed: u64,
) -> InsertionSchedule {
    let window = (episode_seconds * window_fraction).round() as u64;
    InsertionSchedule::spread(spec, n_vehicles, window.max(1), seed)
}

/// SplitMix64 scramble for deriving per-agent / per-episode seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Everything needed to resume or evaluate: parameters, optimizer
/// accumulators, and the seed lineage. JSON round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub seed: u64,
    pub episodes_trained: u64,
    pub steps_trained: u64,
    pub agent_ids: Vec<String>,
    pub nets: Vec<AgentNet>,
}

impl Checkpoint {
    pub fn new(spec: &NetworkSpec, nets: &[AgentNet], seed: u64, episodes: u64, steps: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            seed,
            episodes_trained: episodes,
            steps_trained: steps,
            agent_ids: (0..spec.n_agents())
                .map(|a| spec.agent_id(a).to_string())
                .collect(),
            nets: nets.to_vec(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainerError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(TrainerError::CheckpointFormat {
                found: ckpt.format,
                expected: CHECKPOINT_FORMAT,
            });
        }
        Ok(ckpt)
    }

    /// Verifies the checkpoint belongs to `spec` and hands out the nets.
    pub fn into_nets(self, spec: &NetworkSpec) -> Result<Vec<AgentNet>, TrainerError> {
        let expected: Vec<String> = (0..spec.n_agents())
            .map(|a| spec.agent_id(a).to_string())
            .collect();
        if self.agent_ids != expected {
            return Err(TrainerError::CheckpointMismatch {
                expected,
                found: self.agent_ids,
            });
        }
        Ok(self.nets)
    }
}

/// One training-curve row (per episode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: u64,
    pub steps: u64,
    pub mean_reward: f64,
    pub mean_queue: f64,
}

#[derive(Debug)]
pub struct TrainSummary {
    pub episodes: u64,
    pub steps: u64,
    pub curve: Vec<CurveRow>,
    pub checkpoint: PathBuf,
    pub curve_csv: PathBuf,
}

/// Round-robin controller: hold each phase for `cycle` seconds,
/// independent of traffic. The no-synchronization comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedTimeController {
    pub cycle: f64,
}

impl FixedTimeController {
    pub fn new(cycle: f64, yellow: f64) -> Self {
        assert!(cycle > yellow, "cycle must exceed the yellow time");
        FixedTimeController { cycle }
    }

    /// Phase the controller wants active at absolute time `t`.
    pub fn phase_at(&self, t: f64, n_phases: usize) -> usize {
        ((t / self.cycle).floor() as u64 % n_phases as u64) as usize
    }
}

/// Trains until the interaction budget is consumed, writing checkpoints
/// and a per-episode training curve under `out_dir`.
pub fn train(
    config: &TrainConfig,
    spec: &Arc<NetworkSpec>,
    coeffs: &EmissionCoefficients,
    out_dir: impl AsRef<Path>,
) -> Result<TrainSummary, TrainerError> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut nets = init_agents(spec, config.seed);
    let per_episode = config.hp.steps_per_episode() as u64;
    let mut curve = Vec::new();
    let mut episode = 0u64;
    let mut steps = 0u64;
    let n_agents = spec.n_agents().max(1) as f64;
    while steps < config.total_training_steps {
        let ep_seed = mix_seed(config.seed, 1_000_000 + episode);
        let schedule = demand_schedule(
            spec,
            config.hp.n_vehicles,
            config.hp.episode_seconds,
            config.insertion_window_fraction,
            ep_seed,
        );
        let run = run_episode(
            spec,
            &schedule,
            &mut nets,
            &config.hp,
            &config.sim,
            coeffs,
            Mode::Train,
            ep_seed,
        )?;
        steps += per_episode;
        episode += 1;
        let denom = per_episode as f64 * n_agents;
        curve.push(CurveRow {
            episode,
            steps,
            mean_reward: run.log.cumulative_reward / denom,
            mean_queue: run.log.cumulative_queue as f64 / denom,
        });
        if config.checkpoint_every > 0 && episode % config.checkpoint_every == 0 {
            let ckpt = Checkpoint::new(spec, &nets, config.seed, episode, steps);
            ckpt.save(out_dir.join(format!("checkpoint_ep{episode}.json")))?;
        }
    }
    let checkpoint = out_dir.join("checkpoint_final.json");
    Checkpoint::new(spec, &nets, config.seed, episode, steps).save(&checkpoint)?;
    let curve_csv = out_dir.join("training_curve.csv");
    write_curve_csv(&curve, &curve_csv)?;
    Ok(TrainSummary {
        episodes: episode,
        steps,
        curve,
        checkpoint,
        curve_csv,
    })
}

fn write_curve_csv(curve: &[CurveRow], path: &Path) -> Result<(), TrainerError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "episode,steps,mean_reward,mean_queue")?;
    for row in curve {
        writeln!(
            f,
            "{},{},{},{}",
            row.episode, row.steps, row.mean_reward, row.mean_queue
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
