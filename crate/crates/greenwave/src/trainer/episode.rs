//! Episode runners: the learning/evaluation loop and the fixed-time
//! baseline loop. Both drive the same simulator at a 1 s tick and log
//! identically shaped records so their outputs compare directly.

use super::update::{update_agents, AgentBatch};
use super::{FixedTimeController, TrainerError};
use crate::marl::{
    assemble_observation, entropy, local_reward, ExperienceBuffer, HyperParams, Observation,
    Transition,
};
use crate::microsim::{
    EmissionCoefficients, EmissionLedger, EpisodeTrace, InsertionSchedule, SimParams, SimState,
};
use crate::network::{AgentIdx, NetworkSpec};
use crate::nn::AgentNet;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sample actions from the policy and learn.
    Train,
    /// Argmax actions, no parameter changes.
    Eval,
}

/// Per-interaction record, one entry per agent in agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Simulation second at which the actions were taken.
    pub tick: u64,
    pub actions: Vec<usize>,
    /// Queue sums measured at the end of the interaction window.
    pub queues: Vec<u32>,
    /// Clipped local rewards for those queues.
    pub rewards: Vec<f64>,
    /// Policy entropies at selection time (0 for the baseline).
    pub entropies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
    /// Sum of all per-agent rewards over the episode.
    pub cumulative_reward: f64,
    /// Sum of all per-agent queue measurements over the episode.
    pub cumulative_queue: u64,
    pub final_running: u64,
    pub inserted: u64,
    pub exited: u64,
    pub deferred_insertions: u64,
    pub updates_run: u32,
}

/// Everything an episode produces.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub ledger: EmissionLedger,
    pub trace: EpisodeTrace,
}

/// Uniform fingerprint over an agent's actions (no policy exists before
/// the first step).
fn uniform_fingerprint(n_actions: usize) -> Vec<f64> {
    vec![1.0 / n_actions as f64; n_actions]
}

fn sample_action(policy: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in policy.iter().enumerate() {
        acc += p;
        if draw < acc {
            return k;
        }
    }
    policy.len() - 1
}

fn argmax(policy: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in policy.iter().enumerate().skip(1) {
        if p > policy[best] {
            best = k;
        }
    }
    best
}

/// Runs one full episode. In train mode the nets learn every
/// `batch_size` interactions plus once on the episode tail; in eval mode
/// parameters stay fixed and actions are greedy.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    spec: &Arc<NetworkSpec>,
    schedule: &InsertionSchedule,
    nets: &mut [AgentNet],
    hp: &HyperParams,
    sim_params: &SimParams,
    coeffs: &EmissionCoefficients,
    mode: Mode,
    seed: u64,
) -> Result<EpisodeRun, TrainerError> {
    run_episode_observed(
        spec, schedule, nets, hp, sim_params, coeffs, mode, seed, |_, _, _| {},
    )
}

/// `run_episode` with a per-interaction observer `(step, observations,
/// policies)`, used by tests to watch fingerprint propagation.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_episode_observed(
    spec: &Arc<NetworkSpec>,
    schedule: &InsertionSchedule,
    nets: &mut [AgentNet],
    hp: &HyperParams,
    sim_params: &SimParams,
    coeffs: &EmissionCoefficients,
    mode: Mode,
    seed: u64,
    mut observer: impl FnMut(usize, &[Observation], &[Vec<f64>]),
) -> Result<EpisodeRun, TrainerError> {
    let n_agents = spec.n_agents();
    assert_eq!(nets.len(), n_agents, "one net per agent");
    let neighbor_sets = spec.neighbor_graph();
    let neighbors: Vec<Vec<AgentIdx>> = neighbor_sets
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();

    let mut sim = SimState::new(
        spec.clone(),
        schedule.clone(),
        coeffs.clone(),
        sim_params.clone(),
    )?;
    let mut trace = EpisodeTrace::for_sim(&sim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for net in nets.iter_mut() {
        net.reset_hidden();
    }
    let mut fingerprints: Vec<Vec<f64>> = (0..n_agents)
        .map(|a| uniform_fingerprint(spec.n_actions(a)))
        .collect();
    let train = mode == Mode::Train;
    let mut batches: Vec<AgentBatch> = nets
        .iter()
        .enumerate()
        .map(|(a, net)| AgentBatch::new(ExperienceBuffer::new(a, hp.batch_size), net))
        .collect();

    let interactions = hp.steps_per_episode();
    let ticks_per_interaction = hp.delta_t.round() as usize;
    let mut steps = Vec::with_capacity(interactions);
    let mut cumulative_reward = 0.0;
    let mut cumulative_queue = 0u64;
    let mut updates_run = 0u32;

    for k in 0..interactions {
        // Observe. Fingerprints are the policies from interaction k-1.
        let waves: Vec<Vec<f64>> = (0..n_agents)
            .map(|a| sim.measure_wave(a).iter().map(|&c| c as f64).collect())
            .collect();
        let observations: Vec<Observation> = (0..n_agents)
            .map(|a| assemble_observation(&waves, &fingerprints, a, &neighbors[a], hp, hp.wave_norm))
            .collect::<Result<_, _>>()?;

        if train {
            for (batch, obs) in batches.iter_mut().zip(&observations) {
                batch.buffer.set_last_next_obs(obs.clone());
            }
            if batches.iter().all(|b| b.buffer.is_full()) {
                update_agents(nets, &mut batches, hp, false)?;
                updates_run += 1;
            }
        }

        // Act.
        let mut actions = Vec::with_capacity(n_agents);
        let mut entropies = Vec::with_capacity(n_agents);
        let mut new_fingerprints = Vec::with_capacity(n_agents);
        for (a, obs) in observations.iter().enumerate() {
            let (policy, _value) =
                nets[a].forward(&obs.wave_input(), &obs.fingerprint_input())?;
            let action = match mode {
                Mode::Train => sample_action(&policy, &mut rng),
                Mode::Eval => argmax(&policy),
            };
            sim.apply_action(a, action)?;
            actions.push(action);
            entropies.push(entropy(&policy));
            new_fingerprints.push(policy);
        }
        observer(k, &observations, &new_fingerprints);

        // Let the world run for one interaction window.
        let tick = sim.clock() as u64;
        for _ in 0..ticks_per_interaction {
            sim.step(1.0);
            trace.record(&sim);
        }

        // Reward: queues at the end of the window, shared with neighbors.
        let queues: Vec<u32> = (0..n_agents).map(|a| sim.measure_queue(a)).collect();
        let rewards: Vec<f64> = queues
            .iter()
            .map(|&q| local_reward(q as f64, hp.queue_norm))
            .collect();
        cumulative_reward += rewards.iter().sum::<f64>();
        cumulative_queue += queues.iter().map(|&q| q as u64).sum::<u64>();

        if train {
            for (a, batch) in batches.iter_mut().enumerate() {
                batch
                    .buffer
                    .push(Transition {
                        obs: observations[a].clone(),
                        action: actions[a],
                        next_obs: None,
                        local_reward: rewards[a],
                        neighbor_rewards: neighbors[a]
                            .iter()
                            .map(|&j| (j, rewards[j]))
                            .collect(),
                    })
                    .expect("buffer was drained before refilling");
            }
        }

        steps.push(StepRecord {
            tick,
            actions,
            queues,
            rewards,
            entropies,
        });
        fingerprints = new_fingerprints;
    }

    // Episode tail: close the last transitions with the terminal
    // observation and flush whatever the buffers hold.
    if train && batches.iter().any(|b| !b.buffer.is_empty()) {
        let waves: Vec<Vec<f64>> = (0..n_agents)
            .map(|a| sim.measure_wave(a).iter().map(|&c| c as f64).collect())
            .collect();
        for (a, batch) in batches.iter_mut().enumerate() {
            let obs =
                assemble_observation(&waves, &fingerprints, a, &neighbors[a], hp, hp.wave_norm)?;
            batch.buffer.set_last_next_obs(obs);
        }
        update_agents(nets, &mut batches, hp, true)?;
        updates_run += 1;
    }

    Ok(EpisodeRun {
        log: EpisodeLog {
            steps,
            cumulative_reward,
            cumulative_queue,
            final_running: sim.running_vehicles(),
            inserted: sim.inserted(),
            exited: sim.exited(),
            deferred_insertions: sim.deferred_events(),
            updates_run,
        },
        ledger: sim.ledger().clone(),
        trace,
    })
}

/// Runs one episode under the fixed-time controller: phases rotate
/// round-robin every `controller.cycle` seconds with the usual yellow
/// transitions, regardless of traffic. Logged at the same cadence as the
/// policy runs.
pub fn run_baseline_episode(
    spec: &Arc<NetworkSpec>,
    schedule: &InsertionSchedule,
    controller: FixedTimeController,
    hp: &HyperParams,
    sim_params: &SimParams,
    coeffs: &EmissionCoefficients,
) -> Result<EpisodeRun, TrainerError> {
    let n_agents = spec.n_agents();
    let mut sim = SimState::new(
        spec.clone(),
        schedule.clone(),
        coeffs.clone(),
        sim_params.clone(),
    )?;
    let mut trace = EpisodeTrace::for_sim(&sim);
    let interactions = hp.steps_per_episode();
    let ticks_per_interaction = hp.delta_t.round() as usize;
    let mut steps = Vec::with_capacity(interactions);
    let mut cumulative_reward = 0.0;
    let mut cumulative_queue = 0u64;

    for _ in 0..interactions {
        let tick = sim.clock() as u64;
        let mut actions = Vec::with_capacity(n_agents);
        for a in 0..n_agents {
            let phase = controller.phase_at(sim.clock(), spec.n_actions(a));
            sim.apply_action(a, phase)?;
            actions.push(phase);
        }
        for _ in 0..ticks_per_interaction {
            sim.step(1.0);
            // Keep the rotation on schedule even when the cycle is not a
            // multiple of the interaction window.
            for a in 0..n_agents {
                let phase = controller.phase_at(sim.clock(), spec.n_actions(a));
                sim.apply_action(a, phase)?;
            }
            trace.record(&sim);
        }
        let queues: Vec<u32> = (0..n_agents).map(|a| sim.measure_queue(a)).collect();
        let rewards: Vec<f64> = queues
            .iter()
            .map(|&q| local_reward(q as f64, hp.queue_norm))
            .collect();
        cumulative_reward += rewards.iter().sum::<f64>();
        cumulative_queue += queues.iter().map(|&q| q as u64).sum::<u64>();
        steps.push(StepRecord {
            tick,
            actions,
            queues,
            rewards,
            entropies: vec![0.0; n_agents],
        });
    }

    Ok(EpisodeRun {
        log: EpisodeLog {
            steps,
            cumulative_reward,
            cumulative_queue,
            final_running: sim.running_vehicles(),
            inserted: sim.inserted(),
            exited: sim.exited(),
            deferred_insertions: sim.deferred_events(),
            updates_run: 0,
        },
        ledger: sim.ledger().clone(),
        trace,
    })
}
