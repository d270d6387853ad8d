//! Per-agent experience buffers: the minibatch of transitions an agent
//! collects between updates.

use super::{MarlError, Observation};
use crate::network::AgentIdx;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    /// Observation at the start of the next interaction; filled in one
    /// step later, and the last one doubles as the bootstrap state.
    pub next_obs: Option<Observation>,
    /// Clipped local reward measured at the end of the interaction
    /// window.
    pub local_reward: f64,
    /// Same-step rewards of the neighbors, ascending agent index.
    pub neighbor_rewards: Vec<(AgentIdx, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceBuffer {
    agent: AgentIdx,
    capacity: usize,
    transitions: Vec<Transition>,
}

impl ExperienceBuffer {
    pub fn new(agent: AgentIdx, capacity: usize) -> Self {
        assert!(capacity >= 1);
        ExperienceBuffer {
            agent,
            capacity,
            transitions: Vec::with_capacity(capacity),
        }
    }

    pub fn agent(&self) -> AgentIdx {
        self.agent
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<(), MarlError> {
        if self.is_full() {
            return Err(MarlError::BufferFull(self.capacity));
        }
        self.transitions.push(t);
        Ok(())
    }

    /// Links the observation assembled at the next interaction back into
    /// the latest transition.
    pub fn set_last_next_obs(&mut self, obs: Observation) {
        if let Some(last) = self.transitions.last_mut() {
            last.next_obs = Some(obs);
        }
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }

    /// Debug dump, one row per transition.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "step,action,local_reward,neighbor_rewards,own_wave")?;
        for (t, tr) in self.transitions.iter().enumerate() {
            let neighbors = tr
                .neighbor_rewards
                .iter()
                .map(|(j, r)| format!("{j}:{r}"))
                .collect::<Vec<_>>()
                .join(";");
            let wave = tr
                .obs
                .own_wave
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";");
            writeln!(f, "{t},{},{},{neighbors},{wave}", tr.action, tr.local_reward)?;
        }
        Ok(())
    }
}
