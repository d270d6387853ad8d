//! Per-agent parameter bundle: actor and critic networks, their RMSprop
//! accumulators, and the live recurrent state used while an episode runs.

use super::net::{HeadKind, Net, NetConfig, NnError};
use super::Hidden;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default gain for orthogonal initialization.
pub const INIT_GAIN: f64 = 1.0;
/// Global L2 cap applied to each parameter set's gradients.
pub const GRAD_CAP: f64 = 40.0;
/// RMSprop defaults.
pub const RMSPROP_DECAY: f64 = 0.99;
pub const RMSPROP_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNet {
    pub actor: Net,
    pub critic: Net,
    /// RMSprop mean-square accumulators, same shapes as the parameters.
    pub actor_acc: Net,
    pub critic_acc: Net,
    pub actor_hidden: Hidden,
    pub critic_hidden: Hidden,
    pub seed: u64,
}

/// Builds a fresh agent with production layer sizes: FC(128) into
/// LSTM(64), softmax policy head over `n_actions`, linear value head.
/// Orthogonal weights, zero biases (forget gate at 1), zeroed RMSprop
/// state. Deterministic in `seed`.
pub fn init_params(wave_dim: usize, fp_dim: usize, n_actions: usize, seed: u64) -> AgentNet {
    AgentNet::with_configs(
        NetConfig::standard(wave_dim, fp_dim, n_actions, HeadKind::Softmax),
        NetConfig::standard(wave_dim, fp_dim, 1, HeadKind::Linear),
        seed,
    )
}

impl AgentNet {
    /// Explicit layer sizes; the miniature-network entry point for
    /// gradient checks.
    pub fn with_configs(actor_cfg: NetConfig, critic_cfg: NetConfig, seed: u64) -> AgentNet {
        assert!(actor_cfg.out_dim >= 1, "actor needs at least one action");
        assert_eq!(critic_cfg.out_dim, 1, "critic outputs one value");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Net::new(actor_cfg, INIT_GAIN, &mut rng);
        let critic = Net::new(critic_cfg, INIT_GAIN, &mut rng);
        let actor_hidden = actor.fresh_hidden();
        let critic_hidden = critic.fresh_hidden();
        AgentNet {
            actor_acc: actor.zeros_like(),
            critic_acc: critic.zeros_like(),
            actor,
            critic,
            actor_hidden,
            critic_hidden,
            seed,
        }
    }

    /// Zeroes both recurrent states (episode start).
    pub fn reset_hidden(&mut self) {
        self.actor_hidden = self.actor.fresh_hidden();
        self.critic_hidden = self.critic.fresh_hidden();
    }

    /// Advances both networks one step on the live hidden state and
    /// returns `(policy, value)`.
    pub fn forward(&mut self, wave: &[f64], fp: &[f64]) -> Result<(Vec<f64>, f64), NnError> {
        let (a_cache, a_next) = self.actor.forward_step(wave, fp, &self.actor_hidden)?;
        let (c_cache, c_next) = self.critic.forward_step(wave, fp, &self.critic_hidden)?;
        self.actor_hidden = a_next;
        self.critic_hidden = c_next;
        Ok((a_cache.out, c_cache.out[0]))
    }

    pub fn n_actions(&self) -> usize {
        self.actor.config.out_dim
    }
}

/// Scales a gradient set so its global L2 norm does not exceed `cap`;
/// returns the pre-clip norm. Direction is preserved.
pub fn clip_gradients(grads: &mut Net, cap: f64) -> f64 {
    let norm = grad_norm(grads);
    assert!(norm.is_finite(), "non-finite gradients");
    if norm > cap {
        let scale = cap / norm;
        for slice in grads.param_slices_mut() {
            for g in slice {
                *g *= scale;
            }
        }
    }
    norm
}

pub fn grad_norm(grads: &Net) -> f64 {
    grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// RMSprop update: `a <- decay*a + (1-decay)*g^2`,
/// `p <- p - lr*g / sqrt(a + epsilon)`.
pub fn rmsprop_step(params: &mut Net, acc: &mut Net, grads: &Net, lr: f64, decay: f64, epsilon: f64) {
    let mut p_slices = params.param_slices_mut();
    let mut a_slices = acc.param_slices_mut();
    let g_slices = grads.param_slices();
    assert_eq!(p_slices.len(), g_slices.len(), "gradient shape mismatch");
    for ((ps, az), gs) in p_slices.iter_mut().zip(a_slices.iter_mut()).zip(&g_slices) {
        assert_eq!(ps.len(), gs.len(), "gradient shape mismatch");
        for k in 0..ps.len() {
            let g = gs[k];
            az[k] = decay * az[k] + (1.0 - decay) * g * g;
            ps[k] -= lr * g / (az[k] + epsilon).sqrt();
        }
    }
}
