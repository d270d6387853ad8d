//! Learning hyperparameters, loadable from a JSON config. The defaults
//! are the production settings; any subset of keys may appear in a file.

use super::MarlError;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Spatial discount on neighbor rewards and neighbor state content.
    pub alpha: f64,
    /// Temporal discount factor.
    pub gamma: f64,
    /// Entropy weight in the actor loss.
    pub beta: f64,
    /// Critic loss weight in the joint objective.
    pub xi_critic: f64,
    /// Actor learning rate.
    pub eta_actor: f64,
    /// Critic learning rate.
    pub eta_critic: f64,
    /// Experience buffer size (the n-step horizon).
    pub batch_size: usize,
    /// Seconds between agent interactions.
    pub delta_t: f64,
    /// Yellow transition length, seconds.
    pub t_yellow: f64,
    /// Episode length, seconds.
    pub episode_seconds: f64,
    /// Vehicles inserted per episode (one per second from t = 0).
    pub n_vehicles: u64,
    /// Wave normalizer, vehicles per lane.
    pub wave_norm: f64,
    /// Queue-reward normalizer, vehicles.
    pub queue_norm: f64,
    /// RMSprop accumulator decay.
    pub rmsprop_decay: f64,
    /// RMSprop denominator epsilon.
    pub rmsprop_epsilon: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 0.9,
            gamma: 0.99,
            beta: 0.01,
            xi_critic: 0.5,
            eta_actor: 5e-4,
            eta_critic: 2.5e-4,
            batch_size: 40,
            delta_t: 5.0,
            t_yellow: 2.0,
            episode_seconds: 3600.0,
            n_vehicles: 2000,
            wave_norm: 5.0,
            queue_norm: 20.0,
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), MarlError> {
        let check = |ok: bool, name: &'static str, value: f64, range: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(MarlError::BadHyperParam { name, value, range })
            }
        };
        check(
            (0.0..=1.0).contains(&self.alpha),
            "alpha",
            self.alpha,
            "[0, 1]",
        )?;
        check(
            (0.0..1.0).contains(&self.gamma),
            "gamma",
            self.gamma,
            "[0, 1)",
        )?;
        check(self.beta >= 0.0, "beta", self.beta, "[0, inf)")?;
        check(
            self.xi_critic >= 0.0,
            "xi_critic",
            self.xi_critic,
            "[0, inf)",
        )?;
        check(self.eta_actor > 0.0, "eta_actor", self.eta_actor, "(0, inf)")?;
        check(
            self.eta_critic > 0.0,
            "eta_critic",
            self.eta_critic,
            "(0, inf)",
        )?;
        check(
            self.batch_size >= 1,
            "batch_size",
            self.batch_size as f64,
            "[1, inf)",
        )?;
        check(self.delta_t > 0.0, "delta_t", self.delta_t, "(0, inf)")?;
        check(self.t_yellow >= 0.0, "t_yellow", self.t_yellow, "[0, inf)")?;
        check(
            self.episode_seconds > 0.0,
            "episode_seconds",
            self.episode_seconds,
            "(0, inf)",
        )?;
        check(self.wave_norm > 0.0, "wave_norm", self.wave_norm, "(0, inf)")?;
        check(
            self.queue_norm > 0.0,
            "queue_norm",
            self.queue_norm,
            "(0, inf)",
        )?;
        check(
            (0.0..1.0).contains(&self.rmsprop_decay),
            "rmsprop_decay",
            self.rmsprop_decay,
            "[0, 1)",
        )?;
        check(
            self.rmsprop_epsilon > 0.0,
            "rmsprop_epsilon",
            self.rmsprop_epsilon,
            "(0, inf)",
        )?;
        Ok(())
    }

    /// Agent interactions per episode.
    pub fn steps_per_episode(&self) -> usize {
        (self.episode_seconds / self.delta_t).round() as usize
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MarlError> {
        let text = std::fs::read_to_string(path)?;
        let hp: HyperParams = serde_json::from_str(&text)?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MarlError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
