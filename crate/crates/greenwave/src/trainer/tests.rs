use super::*;
use crate::marl::{assemble_observation, ExperienceBuffer, Observation, Transition};
use crate::microsim::SimState;
use crate::network::grid;
use crate::nn::Hidden;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_hp() -> HyperParams {
    let mut hp = HyperParams::default();
    hp.episode_seconds = 600.0;
    hp.n_vehicles = 240;
    hp
}

fn spec_2x2() -> Arc<NetworkSpec> {
    Arc::new(grid(2, 2, 200.0, 10.0))
}

#[test]
fn eval_episodes_with_fixed_seed_are_identical() {
    let spec = spec_2x2();
    let hp = small_hp();
    let schedule = InsertionSchedule::uniform_demand(&spec, hp.n_vehicles, 21);
    let mut nets = init_agents(&spec, 5);
    let run1 = run_episode(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Eval,
        77,
    )
    .unwrap();
    let run2 = run_episode(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Eval,
        77,
    )
    .unwrap();
    assert_eq!(run1.log, run2.log);
    assert_eq!(run1.trace, run2.trace);
}

#[test]
fn train_mode_runs_one_update_round_per_full_buffer() {
    let spec = spec_2x2();
    // 130 interactions with |B| = 40: updates at 40, 80, 120 plus the
    // 10-step tail.
    let mut hp = small_hp();
    hp.episode_seconds = 650.0;
    let schedule = InsertionSchedule::uniform_demand(&spec, 200, 3);
    let mut nets = init_agents(&spec, 9);
    let run = run_episode(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Train,
        123,
    )
    .unwrap();
    assert_eq!(run.log.updates_run, 4);
    assert_eq!(run.log.steps.len(), 130);

    // The default full-scale shape: 720 interactions / 40 = 18 rounds.
    assert_eq!(HyperParams::default().steps_per_episode() / HyperParams::default().batch_size, 18);
}

#[test]
fn actions_land_on_interaction_boundaries() {
    let spec = spec_2x2();
    let hp = small_hp();
    let schedule = InsertionSchedule::uniform_demand(&spec, 100, 4);
    let mut nets = init_agents(&spec, 2);
    let run = run_episode(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Train,
        5,
    )
    .unwrap();
    for (k, step) in run.log.steps.iter().enumerate() {
        assert_eq!(step.tick, (k as u64) * 5, "one action every delta_t seconds");
    }
}

#[test]
fn running_vehicles_non_increasing_after_insertion_window() {
    let spec = spec_2x2();
    let hp = small_hp();
    // 100 vehicles over the first 240 s of a 600 s episode, light enough
    // that entry lanes never spill back under a fresh sampling policy.
    let schedule = InsertionSchedule::spread(&spec, 100, 240, 17);
    let mut nets = init_agents(&spec, 3);
    let run = run_episode(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Train,
        31,
    )
    .unwrap();
    assert_eq!(
        run.log.deferred_insertions, 0,
        "demand must stay below entry capacity for this check"
    );
    let mut prev = u64::MAX;
    for row in run.trace.rows.iter().filter(|r| r.t >= 240.0) {
        assert!(
            row.running <= prev,
            "running count rose after the window at t={}",
            row.t
        );
        prev = row.running;
    }
}

#[test]
fn fingerprints_lag_policies_by_one_step() {
    let spec = spec_2x2();
    let mut hp = small_hp();
    hp.episode_seconds = 100.0; // 20 interactions
    let schedule = InsertionSchedule::uniform_demand(&spec, 60, 2);
    let mut nets = init_agents(&spec, 11);
    let mut policy_history: Vec<Vec<Vec<f64>>> = Vec::new();
    episode::run_episode_observed(
        &spec,
        &schedule,
        &mut nets,
        &hp,
        &SimParams::default(),
        &EmissionCoefficients::default(),
        Mode::Train,
        8,
        |k, observations, policies| {
            for obs in observations {
                for &(j, ref fp) in &obs.fingerprints {
                    if k == 0 {
                        let uniform = 1.0 / fp.len() as f64;
                        for &p in fp {
                            assert_eq!(p, uniform, "first step uses uniform fingerprints");
                        }
                    } else {
                        assert_eq!(
                            fp, &policy_history[k - 1][j],
                            "step {k}: fingerprint of agent {j} must be its step {} policy",
                            k - 1
                        );
                    }
                }
            }
            policy_history.push(policies.to_vec());
        },
    )
    .unwrap();
    assert_eq!(policy_history.len(), 20);
}

#[test]
fn two_updates_with_identical_buffers_give_identical_parameters() {
    let spec = spec_2x2();
    let hp = small_hp();
    let nets = init_agents(&spec, 40);
    let batches = make_batches(&spec, &nets, &hp, 1234);

    let mut nets_a = nets.clone();
    let mut batches_a = batches.clone();
    update_agents(&mut nets_a, &mut batches_a, &hp, true).unwrap();

    let mut nets_b = nets.clone();
    let mut batches_b = batches.clone();
    update_agents(&mut nets_b, &mut batches_b, &hp, true).unwrap();

    assert_nets_bitwise_eq(&nets_a, &nets_b);
}

#[test]
fn update_order_cannot_change_results() {
    let spec = spec_2x2();
    let hp = small_hp();
    let nets = init_agents(&spec, 7);
    let batches = make_batches(&spec, &nets, &hp, 99);

    let mut forward_nets = nets.clone();
    let mut forward_batches = batches.clone();
    for a in 0..4 {
        update_single_agent(&mut forward_nets[a], &mut forward_batches[a], &hp, true).unwrap();
    }

    let mut shuffled_nets = nets.clone();
    let mut shuffled_batches = batches.clone();
    for a in [2usize, 0, 3, 1] {
        update_single_agent(&mut shuffled_nets[a], &mut shuffled_batches[a], &hp, true).unwrap();
    }

    assert_nets_bitwise_eq(&forward_nets, &shuffled_nets);
}

#[test]
fn partial_buffer_update_requires_episode_end() {
    let spec = spec_2x2();
    let hp = small_hp();
    let mut nets = init_agents(&spec, 13);
    let mut batches = make_batches(&spec, &nets, &hp, 5);
    // Drop the batches to half size: legal only as a tail update.
    for batch in &mut batches {
        let kept: Vec<Transition> = batch.buffer.transitions()[..hp.batch_size / 2].to_vec();
        let mut buffer = ExperienceBuffer::new(batch.buffer.agent(), hp.batch_size);
        for t in kept {
            buffer.push(t).unwrap();
        }
        batch.buffer = buffer;
    }
    let err = update_single_agent(&mut nets[0], &mut batches[0], &hp, false).unwrap_err();
    assert!(matches!(err, TrainerError::PartialBuffer { got: 20, expected: 40 }));
    update_single_agent(&mut nets[0], &mut batches[0], &hp, true).unwrap();
}

#[test]
fn zero_rewards_drive_critic_to_zero_and_actor_grads_vanish() {
    // Single agent, fixed observation, zero reward: the critic's fixed
    // point is V = 0 and the actor's gradients die with the advantages.
    // The live hidden state carries across batches exactly as in the
    // episode loop.
    let spec = Arc::new(grid(1, 1, 200.0, 10.0));
    let mut hp = HyperParams::default();
    hp.beta = 0.0;
    let mut nets = init_agents(&spec, 77);
    let obs = fixed_observation(&spec, &hp, 2.5);
    nets[0].reset_hidden();
    let mut first_stats = None;
    let mut last_stats = None;
    for _ in 0..120 {
        let mut batch = AgentBatch::new(ExperienceBuffer::new(0, hp.batch_size), &nets[0]);
        for k in 0..hp.batch_size {
            let _ = nets[0]
                .forward(&obs.wave_input(), &obs.fingerprint_input())
                .unwrap();
            batch
                .buffer
                .push(Transition {
                    obs: obs.clone(),
                    action: k % 2,
                    next_obs: None,
                    local_reward: 0.0,
                    neighbor_rewards: vec![],
                })
                .unwrap();
        }
        batch.buffer.set_last_next_obs(obs.clone());
        let stats = update_single_agent(&mut nets[0], &mut batch, &hp, false).unwrap();
        first_stats.get_or_insert(stats);
        last_stats = Some(stats);
    }
    let (first, last) = (first_stats.unwrap(), last_stats.unwrap());
    assert!(
        last.critic_loss < 1e-8 && last.critic_loss < first.critic_loss,
        "critic settles at zero values: {} -> {}",
        first.critic_loss,
        last.critic_loss
    );
    assert!(
        last.actor_grad_norm < 1e-6,
        "actor gradients vanish with the advantages, got {}",
        last.actor_grad_norm
    );
    let (caches, _) = nets[0]
        .critic
        .forward_seq(
            &[(obs.wave_input(), obs.fingerprint_input())],
            &nets[0].critic.fresh_hidden(),
        )
        .unwrap();
    assert!(caches[0].out[0].abs() < 0.05, "value near zero, got {}", caches[0].out[0]);
}

#[test]
fn tiny_budget_trains_exactly_two_episodes() {
    let spec = spec_2x2();
    let dir = tempfile::tempdir().unwrap();
    let mut config = TrainConfig::default();
    config.hp.episode_seconds = 200.0; // 40 interactions per episode
    config.hp.n_vehicles = 60;
    config.total_training_steps = 80;
    config.checkpoint_every = 0;
    config.seed = 4;
    let summary = train(
        &config,
        &spec,
        &EmissionCoefficients::default(),
        dir.path(),
    )
    .unwrap();
    assert_eq!(summary.episodes, 2);
    assert_eq!(summary.steps, 80);
    assert_eq!(summary.curve.len(), 2);
    let curve_text = std::fs::read_to_string(&summary.curve_csv).unwrap();
    assert_eq!(curve_text.lines().count(), 3, "header plus one row per episode");
    assert!(summary.checkpoint.exists());

    // Checkpoints reload bit-exactly and match the network.
    let ckpt = Checkpoint::load(&summary.checkpoint).unwrap();
    let nets = ckpt.into_nets(&spec).unwrap();
    assert_eq!(nets.len(), 4);
}

#[test]
fn training_is_deterministic_end_to_end() {
    let spec = spec_2x2();
    let mut config = TrainConfig::default();
    config.hp.episode_seconds = 200.0;
    config.hp.n_vehicles = 60;
    config.total_training_steps = 80;
    config.checkpoint_every = 0;
    config.seed = 11;
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let summary = train(&config, &spec, &EmissionCoefficients::default(), dir.path()).unwrap();
        Checkpoint::load(&summary.checkpoint).unwrap()
    };
    let a = run();
    let b = run();
    assert_nets_bitwise_eq(&a.nets, &b.nets);
    assert_eq!(a, b);
}

#[test]
fn fixed_time_controller_cycles_with_yellow_insertions() {
    let controller = FixedTimeController::new(20.0, 2.0);
    assert_eq!(controller.phase_at(0.0, 2), 0);
    assert_eq!(controller.phase_at(19.9, 2), 0);
    assert_eq!(controller.phase_at(20.0, 2), 1);
    assert_eq!(controller.phase_at(40.0, 2), 0);
    assert_eq!(controller.phase_at(45.0, 3), 2);

    // Drive a simulator and watch the switch happen 2 s after the cycle
    // boundary (the yellow).
    let spec = spec_2x2();
    let mut sim = SimState::new(
        spec.clone(),
        InsertionSchedule::empty(),
        EmissionCoefficients::default(),
        SimParams::default(),
    )
    .unwrap();
    let mut saw_yellow = false;
    for _ in 0..25 {
        for a in 0..spec.n_agents() {
            let phase = controller.phase_at(sim.clock(), spec.n_actions(a));
            sim.apply_action(a, phase).unwrap();
        }
        sim.step(1.0);
        if (20.0..22.0).contains(&sim.clock()) {
            assert_eq!(sim.signal(0).current_phase, 0, "yellow still running");
            saw_yellow = true;
        }
    }
    assert!(saw_yellow);
    assert_eq!(sim.signal(0).current_phase, 1, "switched after yellow");
}

#[test]
fn baseline_is_deterministic_and_queues_under_saturation() {
    let spec = spec_2x2();
    let hp = small_hp();
    let schedule = InsertionSchedule::uniform_demand(&spec, 400, 55);
    let controller = FixedTimeController::new(20.0, 2.0);
    let run = || {
        run_baseline_episode(
            &spec,
            &schedule,
            controller,
            &hp,
            &SimParams::default(),
            &EmissionCoefficients::default(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.ledger, b.ledger, "identical seeds, identical ledgers");
    assert_eq!(a.log, b.log);
    assert!(
        a.log.cumulative_queue > 0,
        "saturating demand must queue somewhere"
    );
}

#[test]
fn config_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.json");
    let config = TrainConfig::default();
    config.save(&path).unwrap();
    assert_eq!(TrainConfig::load(&path).unwrap(), config);

    let mut bad = TrainConfig::default();
    bad.hp.delta_t = 2.5;
    assert!(matches!(bad.validate(), Err(TrainerError::BadConfig(_))));
}

// -------------------------------------------------------------------------
// Helpers
// -------------------------------------------------------------------------

/// Synthetic full batches with consistent observation dimensions for
/// every agent of `spec`.
fn make_batches(
    spec: &Arc<NetworkSpec>,
    nets: &[AgentNet],
    hp: &HyperParams,
    seed: u64,
) -> Vec<AgentBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neighbor_sets = spec.neighbor_graph();
    let observe = |rng: &mut ChaCha8Rng| -> Vec<Observation> {
        let waves: Vec<Vec<f64>> = (0..spec.n_agents())
            .map(|a| {
                (0..spec.agent_lanes(a).len())
                    .map(|_| rng.random_range(0.0..12.0))
                    .collect()
            })
            .collect();
        let fps: Vec<Vec<f64>> = (0..spec.n_agents())
            .map(|a| {
                let n = spec.n_actions(a);
                let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect();
        (0..spec.n_agents())
            .map(|a| {
                let neighbors: Vec<usize> = neighbor_sets[a].iter().copied().collect();
                assemble_observation(&waves, &fps, a, &neighbors, hp, hp.wave_norm).unwrap()
            })
            .collect()
    };
    let mut batches: Vec<AgentBatch> = nets
        .iter()
        .enumerate()
        .map(|(a, net)| AgentBatch::new(ExperienceBuffer::new(a, hp.batch_size), net))
        .collect();
    let mut current = observe(&mut rng);
    for _ in 0..hp.batch_size {
        let rewards: Vec<f64> = (0..spec.n_agents())
            .map(|_| rng.random_range(-2.0..0.0))
            .collect();
        let actions: Vec<usize> = (0..spec.n_agents())
            .map(|a| rng.random_range(0..spec.n_actions(a)))
            .collect();
        let next = observe(&mut rng);
        for a in 0..spec.n_agents() {
            let neighbors: Vec<usize> = neighbor_sets[a].iter().copied().collect();
            batches[a]
                .buffer
                .push(Transition {
                    obs: current[a].clone(),
                    action: actions[a],
                    next_obs: Some(next[a].clone()),
                    local_reward: rewards[a],
                    neighbor_rewards: neighbors.iter().map(|&j| (j, rewards[j])).collect(),
                })
                .unwrap();
        }
        current = next;
    }
    batches
}

fn fixed_observation(spec: &Arc<NetworkSpec>, hp: &HyperParams, wave: f64) -> Observation {
    let waves = vec![vec![wave; spec.agent_lanes(0).len()]];
    let fps = vec![vec![0.5, 0.5]];
    assemble_observation(&waves, &fps, 0, &[], hp, hp.wave_norm).unwrap()
}

fn assert_nets_bitwise_eq(a: &[AgentNet], b: &[AgentNet]) {
    assert_eq!(a.len(), b.len());
    for (na, nb) in a.iter().zip(b) {
        for (net_a, net_b) in [(&na.actor, &nb.actor), (&na.critic, &nb.critic)] {
            for (sa, sb) in net_a.param_slices().iter().zip(net_b.param_slices()) {
                for (x, y) in sa.iter().zip(sb.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}

