//! The per-agent learning update: replay the batch through both
//! networks from the buffer-start hidden state, form spatially
//! discounted n-step returns against the frozen critic, backpropagate
//! the actor and critic losses, clip, and apply RMSprop.

use super::TrainerError;
use crate::marl::{
    actor_logit_grads, actor_loss, advantage, critic_loss, critic_value_grad, n_step_returns,
    spatial_discount, total_loss, ExperienceBuffer, HyperParams,
};
use crate::nn::{clip_gradients, rmsprop_step, AgentNet, Hidden, GRAD_CAP};

/// A full (or episode-tail) batch plus the recurrent states both
/// networks were in when its first observation was made.
#[derive(Debug, Clone)]
pub struct AgentBatch {
    pub buffer: ExperienceBuffer,
    pub actor_start: Hidden,
    pub critic_start: Hidden,
}

impl AgentBatch {
    pub fn new(buffer: ExperienceBuffer, net: &AgentNet) -> Self {
        AgentBatch {
            buffer,
            actor_start: net.actor_hidden.clone(),
            critic_start: net.critic_hidden.clone(),
        }
    }

    /// Re-arms the batch for the next collection window.
    pub fn restart(&mut self, net: &AgentNet) {
        self.buffer.clear();
        self.actor_start = net.actor_hidden.clone();
        self.critic_start = net.critic_hidden.clone();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentUpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub total_loss: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub batch_len: usize,
}

/// Updates one agent from its batch. The batch must be full unless
/// `allow_partial` marks an episode-tail update; the buffer is cleared
/// afterwards and the start hiddens re-snapshotted.
pub fn update_single_agent(
    net: &mut AgentNet,
    batch: &mut AgentBatch,
    hp: &HyperParams,
    allow_partial: bool,
) -> Result<AgentUpdateStats, TrainerError> {
    let transitions = batch.buffer.transitions();
    let t_b = transitions.len();
    if t_b == 0 || (!allow_partial && !batch.buffer.is_full()) {
        return Err(TrainerError::PartialBuffer {
            got: t_b,
            expected: hp.batch_size,
        });
    }

    let inputs: Vec<(Vec<f64>, Vec<f64>)> = transitions
        .iter()
        .map(|tr| (tr.obs.wave_input(), tr.obs.fingerprint_input()))
        .collect();
    let bootstrap_obs = transitions
        .last()
        .and_then(|tr| tr.next_obs.as_ref())
        .expect("bootstrap observation is linked before every update");

    // Frozen critic pass: values along the batch plus the bootstrap
    // value of the state after the last transition.
    let (critic_caches, critic_end) = net.critic.forward_seq(&inputs, &batch.critic_start)?;
    let values: Vec<f64> = critic_caches.iter().map(|c| c.out[0]).collect();
    let (boot_cache, _) = net.critic.forward_step(
        &bootstrap_obs.wave_input(),
        &bootstrap_obs.fingerprint_input(),
        &critic_end,
    )?;
    let bootstrap = boot_cache.out[0];

    let shared_rewards: Vec<f64> = transitions
        .iter()
        .map(|tr| {
            let neighbor_rs: Vec<f64> = tr.neighbor_rewards.iter().map(|&(_, r)| r).collect();
            spatial_discount(tr.local_reward, &neighbor_rs, hp)
        })
        .collect();
    let returns = n_step_returns(&shared_rewards, bootstrap, hp);
    let advantages = advantage(&returns, &values)?;

    // Actor pass over the same inputs from its own start hidden.
    let (actor_caches, _) = net.actor.forward_seq(&inputs, &batch.actor_start)?;
    let policies: Vec<Vec<f64>> = actor_caches.iter().map(|c| c.out.clone()).collect();
    let log_probs: Vec<f64> = policies
        .iter()
        .zip(transitions)
        .map(|(pi, tr)| pi[tr.action].ln())
        .collect();

    let a_loss = actor_loss(&log_probs, &advantages, &policies, hp)?;
    let c_loss = critic_loss(&returns, &values)?;

    let actor_dlogits: Vec<Vec<f64>> = policies
        .iter()
        .zip(transitions)
        .zip(&advantages)
        .map(|((pi, tr), &adv)| actor_logit_grads(pi, tr.action, adv, hp.beta))
        .collect();
    let critic_dlogits: Vec<Vec<f64>> = values
        .iter()
        .zip(&returns)
        .map(|(&v, &r)| vec![critic_value_grad(r, v, hp.xi_critic)])
        .collect();

    let mut actor_grads = net.actor.backward_seq(&actor_caches, &actor_dlogits);
    let mut critic_grads = net.critic.backward_seq(&critic_caches, &critic_dlogits);
    let actor_grad_norm = clip_gradients(&mut actor_grads, GRAD_CAP);
    let critic_grad_norm = clip_gradients(&mut critic_grads, GRAD_CAP);

    let mut actor_acc = std::mem::replace(&mut net.actor_acc, net.actor.zeros_like());
    rmsprop_step(
        &mut net.actor,
        &mut actor_acc,
        &actor_grads,
        hp.eta_actor,
        hp.rmsprop_decay,
        hp.rmsprop_epsilon,
    );
    net.actor_acc = actor_acc;
    let mut critic_acc = std::mem::replace(&mut net.critic_acc, net.critic.zeros_like());
    rmsprop_step(
        &mut net.critic,
        &mut critic_acc,
        &critic_grads,
        hp.eta_critic,
        hp.rmsprop_decay,
        hp.rmsprop_epsilon,
    );
    net.critic_acc = critic_acc;

    batch.restart(net);
    Ok(AgentUpdateStats {
        actor_loss: a_loss,
        critic_loss: c_loss,
        total_loss: total_loss(a_loss, c_loss, hp),
        actor_grad_norm,
        critic_grad_norm,
        batch_len: t_b,
    })
}

/// Runs the update for every agent. Buffers snapshot all cross-agent
/// data (fingerprints, neighbor rewards) at collection time, so the
/// update order cannot influence the result.
pub fn update_agents(
    nets: &mut [AgentNet],
    batches: &mut [AgentBatch],
    hp: &HyperParams,
    allow_partial: bool,
) -> Result<Vec<AgentUpdateStats>, TrainerError> {
    nets.iter_mut()
        .zip(batches)
        .map(|(net, batch)| update_single_agent(net, batch, hp, allow_partial))
        .collect()
}
