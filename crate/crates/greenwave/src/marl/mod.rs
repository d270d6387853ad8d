//! The multi-agent actor-critic mathematics: observation assembly with
//! spatially discounted neighbor content and fingerprints, discounted
//! reward sharing, n-step returns, advantages, and the actor/critic loss
//! functions.
//!
//! Sign conventions, fixed here once: rewards are *negated* normalized
//! queue sums (so maximizing return empties queues), and both losses are
//! minimization objectives. The actor loss is
//!
//! ```text
//! L(theta) = sum_t [ -log pi(u_t) * A_t  -  beta * H(pi_t) ]
//! ```
//!
//! with `H` the policy entropy: gradient descent ascends the
//! policy-gradient objective and the `beta` term rewards exploration.
//! Advantages are treated as constants.

mod buffer;
mod hyper;
mod observation;

pub use buffer::{ExperienceBuffer, Transition};
pub use hyper::HyperParams;
pub use observation::{assemble_observation, Observation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarlError {
    #[error("sequence length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("policy for step {step} sums to {sum}, not a distribution")]
    NonNormalizedPolicy { step: usize, sum: f64 },
    #[error("fingerprint of agent {agent} sums to {sum}, not a distribution")]
    NonNormalizedFingerprint { agent: usize, sum: f64 },
    #[error("missing {what} for agent {agent}")]
    MissingNeighborData { what: &'static str, agent: usize },
    #[error("experience buffer full at {0} transitions")]
    BufferFull(usize),
    #[error("hyperparameter {name} = {value} outside {range}")]
    BadHyperParam {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Clips a value into `[lo, hi]`.
pub fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Local learning reward: the negated queue sum, normalized and clipped
/// to `[-2, 2]`.
pub fn local_reward(queue_sum: f64, norm: f64) -> f64 {
    debug_assert!(queue_sum >= 0.0 && norm > 0.0);
    clip(-queue_sum / norm, -2.0, 2.0)
}

/// Spatially discounted reward over the local region: neighbors count
/// with weight `alpha`, and the total is averaged over the region size
/// `|neighbors| + 1`.
pub fn spatial_discount(r_own: f64, neighbor_rewards: &[f64], hp: &HyperParams) -> f64 {
    let neighbor_sum: f64 = neighbor_rewards.iter().sum();
    (r_own + hp.alpha * neighbor_sum) / (neighbor_rewards.len() as f64 + 1.0)
}

/// Discounted n-step returns over the batch horizon, bootstrapped with
/// the frozen critic's value of the state after the last transition:
/// `R_t = sum_{tau=t}^{T-1} gamma^(tau-t) r_tau + gamma^(T-t) * bootstrap`.
pub fn n_step_returns(rewards: &[f64], bootstrap: f64, hp: &HyperParams) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + hp.gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// Elementwise `R_t - V_t` against the frozen critic values.
pub fn advantage(returns: &[f64], values: &[f64]) -> Result<Vec<f64>, MarlError> {
    if returns.len() != values.len() {
        return Err(MarlError::LengthMismatch {
            what: "critic values",
            expected: returns.len(),
            got: values.len(),
        });
    }
    Ok(returns.iter().zip(values).map(|(r, v)| r - v).collect())
}

/// Negative entropy `sum_u pi(u) log pi(u)` with `0 log 0 = 0`.
fn neg_entropy(policy: &[f64]) -> f64 {
    policy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum()
}

/// Policy entropy in nats.
pub fn entropy(policy: &[f64]) -> f64 {
    -neg_entropy(policy)
}

/// Actor minimization loss over one batch. `log_probs[t]` is
/// `log pi(u_t | .)` for the taken action, `advantages` enter as
/// constants, `policies[t]` is the full distribution at step `t`. The
/// entropy bonus subtracts `beta * H` per step, so minimizing keeps the
/// policy stochastic early on.
pub fn actor_loss(
    log_probs: &[f64],
    advantages: &[f64],
    policies: &[Vec<f64>],
    hp: &HyperParams,
) -> Result<f64, MarlError> {
    if advantages.len() != log_probs.len() {
        return Err(MarlError::LengthMismatch {
            what: "advantages",
            expected: log_probs.len(),
            got: advantages.len(),
        });
    }
    if policies.len() != log_probs.len() {
        return Err(MarlError::LengthMismatch {
            what: "policies",
            expected: log_probs.len(),
            got: policies.len(),
        });
    }
    let mut loss = 0.0;
    for (t, policy) in policies.iter().enumerate() {
        let sum: f64 = policy.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || policy.iter().any(|&p| p < 0.0) {
            return Err(MarlError::NonNormalizedPolicy { step: t, sum });
        }
        loss += -log_probs[t] * advantages[t] + hp.beta * neg_entropy(policy);
    }
    Ok(loss)
}

/// Critic minimization loss `1/2 sum_t (R_t - V_t)^2`.
pub fn critic_loss(returns: &[f64], values: &[f64]) -> Result<f64, MarlError> {
    if returns.len() != values.len() {
        return Err(MarlError::LengthMismatch {
            what: "critic values",
            expected: returns.len(),
            got: values.len(),
        });
    }
    Ok(returns
        .iter()
        .zip(values)
        .map(|(r, v)| {
            let d = r - v;
            0.5 * d * d
        })
        .sum())
}

/// Joint objective: actor plus `xi_critic`-weighted critic loss. The two
/// parameter sets still train with their own learning rates; this value
/// is the scalar being descended.
pub fn total_loss(actor: f64, critic: f64, hp: &HyperParams) -> f64 {
    actor + hp.xi_critic * critic
}

/// Gradient of the actor loss with respect to the policy head's logits
/// for one step: the policy-gradient term plus the entropy bonus folded
/// through the softmax Jacobian.
pub fn actor_logit_grads(policy: &[f64], action: usize, advantage: f64, beta: f64) -> Vec<f64> {
    let neg_ent = neg_entropy(policy);
    policy
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let indicator = if k == action { 1.0 } else { 0.0 };
            let pg = advantage * (p - indicator);
            let ent = beta * p * (safe_ln(p) - neg_ent);
            pg + ent
        })
        .collect()
}

/// Gradient of `xi * critic_loss` with respect to one predicted value.
pub fn critic_value_grad(ret: f64, value: f64, xi_critic: f64) -> f64 {
    xi_critic * (value - ret)
}

fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        0.0
    }
}
