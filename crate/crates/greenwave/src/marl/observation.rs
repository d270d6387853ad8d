//! Per-agent observations: the agent's own normalized wave, its
//! neighbors' waves scaled by the spatial discount, and the neighbors'
//! previous-step policies (fingerprints) passed through unscaled.

use super::{clip, HyperParams, MarlError};
use crate::network::AgentIdx;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: AgentIdx,
    /// Own wave, normalized and clipped to [0, 2].
    pub own_wave: Vec<f64>,
    /// Neighbor waves, normalized, clipped, then scaled by alpha;
    /// ascending agent index.
    pub neighbor_waves: Vec<(AgentIdx, Vec<f64>)>,
    /// Neighbor fingerprints (previous-step policies), unscaled;
    /// ascending agent index.
    pub fingerprints: Vec<(AgentIdx, Vec<f64>)>,
}

impl Observation {
    /// Wave part of the network input: own wave then neighbor waves.
    pub fn wave_input(&self) -> Vec<f64> {
        let mut v = self.own_wave.clone();
        for (_, w) in &self.neighbor_waves {
            v.extend_from_slice(w);
        }
        v
    }

    /// Fingerprint part of the network input.
    pub fn fingerprint_input(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (_, fp) in &self.fingerprints {
            v.extend_from_slice(fp);
        }
        v
    }

    pub fn wave_dim(&self) -> usize {
        self.own_wave.len()
            + self
                .neighbor_waves
                .iter()
                .map(|(_, w)| w.len())
                .sum::<usize>()
    }

    pub fn fingerprint_dim(&self) -> usize {
        self.fingerprints.iter().map(|(_, f)| f.len()).sum()
    }
}

/// Builds the observation of `agent` from the per-agent raw wave vectors
/// and previous-step policies. `neighbors` must be the agent's
/// neighborhood in ascending index order; `norm` is the wave normalizer.
pub fn assemble_observation(
    waves: &[Vec<f64>],
    fingerprints: &[Vec<f64>],
    agent: AgentIdx,
    neighbors: &[AgentIdx],
    hp: &HyperParams,
    norm: f64,
) -> Result<Observation, MarlError> {
    debug_assert!(norm > 0.0);
    let own_raw = waves.get(agent).ok_or(MarlError::MissingNeighborData {
        what: "wave",
        agent,
    })?;
    let scale = |w: &Vec<f64>| -> Vec<f64> { w.iter().map(|&x| clip(x / norm, 0.0, 2.0)).collect() };
    let own_wave = scale(own_raw);
    let mut neighbor_waves = Vec::with_capacity(neighbors.len());
    let mut fps = Vec::with_capacity(neighbors.len());
    for &j in neighbors {
        let w = waves.get(j).ok_or(MarlError::MissingNeighborData {
            what: "wave",
            agent: j,
        })?;
        neighbor_waves.push((j, scale(w).into_iter().map(|x| hp.alpha * x).collect()));
        let fp = fingerprints.get(j).ok_or(MarlError::MissingNeighborData {
            what: "fingerprint",
            agent: j,
        })?;
        let sum: f64 = fp.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MarlError::NonNormalizedFingerprint { agent: j, sum });
        }
        fps.push((j, fp.clone()));
    }
    Ok(Observation {
        agent,
        own_wave,
        neighbor_waves,
        fingerprints: fps,
    })
}
