//! One actor or critic network: separate fully connected sub-layers for
//! the wave input and the fingerprint input, concatenated through ReLU
//! into an LSTM, topped by a softmax policy head or a linear value head.

use super::init::orthogonal;
use super::linalg::{add_assign, all_finite, softmax, Mat};
use super::lstm::{LstmCell, LstmStep};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// Policy head: probabilities over actions.
    Softmax,
    /// Value head: a single scalar.
    Linear,
}

/// Layer sizes for one network. `fc_fp_units = 0` drops the fingerprint
/// sub-layer entirely (agents without neighbors).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub wave_dim: usize,
    pub fp_dim: usize,
    pub fc_wave_units: usize,
    pub fc_fp_units: usize,
    pub lstm_units: usize,
    pub out_dim: usize,
    pub head: HeadKind,
}

impl NetConfig {
    /// The production sizing: 128 FC units total (split evenly when a
    /// fingerprint input exists), LSTM with 64 outputs and 64 inner
    /// states.
    pub fn standard(wave_dim: usize, fp_dim: usize, out_dim: usize, head: HeadKind) -> Self {
        let (fc_wave_units, fc_fp_units) = if fp_dim == 0 { (128, 0) } else { (64, 64) };
        NetConfig {
            wave_dim,
            fp_dim,
            fc_wave_units,
            fc_fp_units,
            lstm_units: 64,
            out_dim,
            head,
        }
    }

    pub fn fc_total(&self) -> usize {
        self.fc_wave_units + self.fc_fp_units
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Dense {
    fn new(input: usize, output: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Dense {
            w: orthogonal(output, input, gain, rng),
            b: vec![0.0; output],
        }
    }

    fn zeros_like(&self) -> Self {
        Dense {
            w: Mat::zeros(self.w.rows(), self.w.cols()),
            b: vec![0.0; self.b.len()],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.matvec(x);
        add_assign(&mut y, &self.b);
        y
    }
}

/// Recurrent state of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hidden {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Hidden {
    pub fn zeros(units: usize) -> Self {
        Hidden {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

/// Per-step activation cache for backprop.
#[derive(Debug, Clone)]
pub struct StepCache {
    wave: Vec<f64>,
    fp: Vec<f64>,
    /// Concatenated FC pre-activations (before ReLU).
    fc_pre: Vec<f64>,
    lstm: LstmStep,
    /// Network output: policy probabilities or the raw value.
    pub out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub config: NetConfig,
    pub fc_wave: Dense,
    pub fc_fp: Option<Dense>,
    pub lstm: LstmCell,
    pub head: Dense,
}

impl Net {
    pub fn new(config: NetConfig, gain: f64, rng: &mut impl Rng) -> Self {
        let fc_wave = Dense::new(config.wave_dim, config.fc_wave_units, gain, rng);
        let fc_fp = (config.fc_fp_units > 0)
            .then(|| Dense::new(config.fp_dim, config.fc_fp_units, gain, rng));
        let lstm = LstmCell::new(config.fc_total(), config.lstm_units, gain, rng);
        let head = Dense::new(config.lstm_units, config.out_dim, gain, rng);
        Net {
            config,
            fc_wave,
            fc_fp,
            lstm,
            head,
        }
    }

    /// Same shapes, all zeros; the gradient / optimizer-state container.
    pub fn zeros_like(&self) -> Net {
        Net {
            config: self.config,
            fc_wave: self.fc_wave.zeros_like(),
            fc_fp: self.fc_fp.as_ref().map(Dense::zeros_like),
            lstm: self.lstm.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn fresh_hidden(&self) -> Hidden {
        Hidden::zeros(self.config.lstm_units)
    }

    /// Advances one step from `hidden`, returning the output, the cache
    /// needed for backprop, and the next hidden state.
    pub fn forward_step(
        &self,
        wave: &[f64],
        fp: &[f64],
        hidden: &Hidden,
    ) -> Result<(StepCache, Hidden), NnError> {
        if wave.len() != self.config.wave_dim {
            return Err(NnError::DimensionMismatch {
                what: "wave input",
                expected: self.config.wave_dim,
                got: wave.len(),
            });
        }
        if fp.len() != self.config.fp_dim {
            return Err(NnError::DimensionMismatch {
                what: "fingerprint input",
                expected: self.config.fp_dim,
                got: fp.len(),
            });
        }
        if !all_finite(wave) || !all_finite(fp) {
            return Err(NnError::NonFinite("network input"));
        }
        let mut fc_pre = self.fc_wave.apply(wave);
        if let Some(fc_fp) = &self.fc_fp {
            fc_pre.extend(fc_fp.apply(fp));
        }
        let relu: Vec<f64> = fc_pre.iter().map(|&v| v.max(0.0)).collect();
        let lstm = self.lstm.forward(&relu, &hidden.h, &hidden.c);
        let logits = self.head.apply(&lstm.h);
        if !all_finite(&logits) {
            return Err(NnError::NonFinite("head output"));
        }
        let out = match self.config.head {
            HeadKind::Softmax => softmax(&logits),
            HeadKind::Linear => logits,
        };
        let next = Hidden {
            h: lstm.h.clone(),
            c: lstm.c.clone(),
        };
        Ok((
            StepCache {
                wave: wave.to_vec(),
                fp: fp.to_vec(),
                fc_pre,
                lstm,
                out,
            },
            next,
        ))
    }

    /// Runs the whole input sequence from `start`, returning per-step
    /// caches and the final hidden state.
    pub fn forward_seq(
        &self,
        inputs: &[(Vec<f64>, Vec<f64>)],
        start: &Hidden,
    ) -> Result<(Vec<StepCache>, Hidden), NnError> {
        let mut hidden = start.clone();
        let mut caches = Vec::with_capacity(inputs.len());
        for (wave, fp) in inputs {
            let (cache, next) = self.forward_step(wave, fp, &hidden)?;
            caches.push(cache);
            hidden = next;
        }
        Ok((caches, hidden))
    }

    /// Backpropagation through time over a forward sequence.
    ///
    /// `d_logits` carries, per step, the loss gradient with respect to
    /// the head's pre-activation outputs (for the softmax head the caller
    /// folds the softmax Jacobian in; for the linear head it is the
    /// gradient on the value itself).
    pub fn backward_seq(&self, caches: &[StepCache], d_logits: &[Vec<f64>]) -> Net {
        assert_eq!(caches.len(), d_logits.len(), "one logit gradient per step");
        let mut grads = self.zeros_like();
        let units = self.config.lstm_units;
        let mut dh_next = vec![0.0; units];
        let mut dc_next = vec![0.0; units];
        for (cache, dl) in caches.iter().zip(d_logits).rev() {
            grads.head.w.add_outer(dl, &cache.lstm.h);
            add_assign(&mut grads.head.b, dl);
            let mut dh = dh_next.clone();
            self.head.w.add_t_matvec(dl, &mut dh);
            let (dr, dh_prev, dc_prev) =
                self.lstm.backward(&cache.lstm, &dh, &dc_next, &mut grads.lstm);
            // ReLU gate on the FC pre-activations.
            let dz: Vec<f64> = dr
                .iter()
                .zip(&cache.fc_pre)
                .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
                .collect();
            let (dz_wave, dz_fp) = dz.split_at(self.config.fc_wave_units);
            grads.fc_wave.w.add_outer(dz_wave, &cache.wave);
            add_assign(&mut grads.fc_wave.b, dz_wave);
            if let (Some(fc_fp_grads), true) = (grads.fc_fp.as_mut(), !dz_fp.is_empty()) {
                fc_fp_grads.w.add_outer(dz_fp, &cache.fp);
                add_assign(&mut fc_fp_grads.b, dz_fp);
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        grads
    }

    /// Every parameter buffer in a fixed traversal order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut slices = vec![self.fc_wave.w.as_mut_slice(), self.fc_wave.b.as_mut_slice()];
        if let Some(fc_fp) = &mut self.fc_fp {
            slices.push(fc_fp.w.as_mut_slice());
            slices.push(fc_fp.b.as_mut_slice());
        }
        slices.extend(self.lstm.param_slices_mut());
        slices.push(self.head.w.as_mut_slice());
        slices.push(self.head.b.as_mut_slice());
        slices
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut slices: Vec<&[f64]> = vec![self.fc_wave.w.as_slice(), self.fc_wave.b.as_slice()];
        if let Some(fc_fp) = &self.fc_fp {
            slices.push(fc_fp.w.as_slice());
            slices.push(fc_fp.b.as_slice());
        }
        slices.extend(self.lstm.param_slices());
        slices.push(self.head.w.as_slice());
        slices.push(self.head.b.as_slice());
        slices
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}
