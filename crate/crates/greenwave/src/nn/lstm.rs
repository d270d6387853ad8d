//! A single LSTM layer: standard input/forget/output gates with sigmoid
//! activations, tanh cell candidate, forget-gate bias starting at 1.

use super::init::orthogonal;
use super::linalg::{add_assign, sigmoid, Mat};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_xi: Mat,
    pub w_xf: Mat,
    pub w_xo: Mat,
    pub w_xg: Mat,
    pub w_hi: Mat,
    pub w_hf: Mat,
    pub w_ho: Mat,
    pub w_hg: Mat,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_g: Vec<f64>,
}

/// Cached activations for one time step, kept for backprop.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn new(input_dim: usize, units: usize, gain: f64, rng: &mut impl Rng) -> Self {
        LstmCell {
            w_xi: orthogonal(units, input_dim, gain, rng),
            w_xf: orthogonal(units, input_dim, gain, rng),
            w_xo: orthogonal(units, input_dim, gain, rng),
            w_xg: orthogonal(units, input_dim, gain, rng),
            w_hi: orthogonal(units, units, gain, rng),
            w_hf: orthogonal(units, units, gain, rng),
            w_ho: orthogonal(units, units, gain, rng),
            w_hg: orthogonal(units, units, gain, rng),
            b_i: vec![0.0; units],
            // Open forget gates at the start so early gradients flow.
            b_f: vec![1.0; units],
            b_o: vec![0.0; units],
            b_g: vec![0.0; units],
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmCell {
            w_xi: Mat::zeros(self.w_xi.rows(), self.w_xi.cols()),
            w_xf: Mat::zeros(self.w_xf.rows(), self.w_xf.cols()),
            w_xo: Mat::zeros(self.w_xo.rows(), self.w_xo.cols()),
            w_xg: Mat::zeros(self.w_xg.rows(), self.w_xg.cols()),
            w_hi: Mat::zeros(self.w_hi.rows(), self.w_hi.cols()),
            w_hf: Mat::zeros(self.w_hf.rows(), self.w_hf.cols()),
            w_ho: Mat::zeros(self.w_ho.rows(), self.w_ho.cols()),
            w_hg: Mat::zeros(self.w_hg.rows(), self.w_hg.cols()),
            b_i: vec![0.0; self.b_i.len()],
            b_f: vec![0.0; self.b_f.len()],
            b_o: vec![0.0; self.b_o.len()],
            b_g: vec![0.0; self.b_g.len()],
        }
    }

    pub fn units(&self) -> usize {
        self.b_i.len()
    }

    pub fn forward(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let gate = |wx: &Mat, wh: &Mat, b: &[f64]| {
            let mut z = wx.matvec(x);
            add_assign(&mut z, &wh.matvec(h_prev));
            add_assign(&mut z, b);
            z
        };
        let i: Vec<f64> = gate(&self.w_xi, &self.w_hi, &self.b_i)
            .into_iter()
            .map(sigmoid)
            .collect();
        let f: Vec<f64> = gate(&self.w_xf, &self.w_hf, &self.b_f)
            .into_iter()
            .map(sigmoid)
            .collect();
        let o: Vec<f64> = gate(&self.w_xo, &self.w_ho, &self.b_o)
            .into_iter()
            .map(sigmoid)
            .collect();
        let g: Vec<f64> = gate(&self.w_xg, &self.w_hg, &self.b_g)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let c: Vec<f64> = (0..self.units())
            .map(|k| f[k] * c_prev[k] + i[k] * g[k])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..self.units()).map(|k| o[k] * tanh_c[k]).collect();
        LstmStep {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            o,
            g,
            c,
            tanh_c,
            h,
        }
    }

    /// One step of backprop through time. `dh`/`dc` are the gradients
    /// flowing into this step's outputs; returns `(dx, dh_prev, dc_prev)`
    /// and accumulates parameter gradients into `grads`.
    pub fn backward(
        &self,
        step: &LstmStep,
        dh: &[f64],
        dc_in: &[f64],
        grads: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.units();
        let mut dz_i = vec![0.0; n];
        let mut dz_f = vec![0.0; n];
        let mut dz_o = vec![0.0; n];
        let mut dz_g = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let d_o = dh[k] * step.tanh_c[k];
            let dc = dc_in[k] + dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_i = dc * step.g[k];
            let d_f = dc * step.c_prev[k];
            let d_g = dc * step.i[k];
            dc_prev[k] = dc * step.f[k];
            dz_i[k] = d_i * step.i[k] * (1.0 - step.i[k]);
            dz_f[k] = d_f * step.f[k] * (1.0 - step.f[k]);
            dz_o[k] = d_o * step.o[k] * (1.0 - step.o[k]);
            dz_g[k] = d_g * (1.0 - step.g[k] * step.g[k]);
        }
        grads.w_xi.add_outer(&dz_i, &step.x);
        grads.w_xf.add_outer(&dz_f, &step.x);
        grads.w_xo.add_outer(&dz_o, &step.x);
        grads.w_xg.add_outer(&dz_g, &step.x);
        grads.w_hi.add_outer(&dz_i, &step.h_prev);
        grads.w_hf.add_outer(&dz_f, &step.h_prev);
        grads.w_ho.add_outer(&dz_o, &step.h_prev);
        grads.w_hg.add_outer(&dz_g, &step.h_prev);
        add_assign(&mut grads.b_i, &dz_i);
        add_assign(&mut grads.b_f, &dz_f);
        add_assign(&mut grads.b_o, &dz_o);
        add_assign(&mut grads.b_g, &dz_g);

        let mut dx = vec![0.0; step.x.len()];
        self.w_xi.add_t_matvec(&dz_i, &mut dx);
        self.w_xf.add_t_matvec(&dz_f, &mut dx);
        self.w_xo.add_t_matvec(&dz_o, &mut dx);
        self.w_xg.add_t_matvec(&dz_g, &mut dx);
        let mut dh_prev = vec![0.0; n];
        self.w_hi.add_t_matvec(&dz_i, &mut dh_prev);
        self.w_hf.add_t_matvec(&dz_f, &mut dh_prev);
        self.w_ho.add_t_matvec(&dz_o, &mut dh_prev);
        self.w_hg.add_t_matvec(&dz_g, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }

    /// All parameter buffers in a fixed order (weights then biases).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_xi.as_mut_slice(),
            self.w_xf.as_mut_slice(),
            self.w_xo.as_mut_slice(),
            self.w_xg.as_mut_slice(),
            self.w_hi.as_mut_slice(),
            self.w_hf.as_mut_slice(),
            self.w_ho.as_mut_slice(),
            self.w_hg.as_mut_slice(),
            self.b_i.as_mut_slice(),
            self.b_f.as_mut_slice(),
            self.b_o.as_mut_slice(),
            self.b_g.as_mut_slice(),
        ]
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            self.w_xi.as_slice(),
            self.w_xf.as_slice(),
            self.w_xo.as_slice(),
            self.w_xg.as_slice(),
            self.w_hi.as_slice(),
            self.w_hf.as_slice(),
            self.w_ho.as_slice(),
            self.w_hg.as_slice(),
            self.b_i.as_slice(),
            self.b_f.as_slice(),
            self.b_o.as_slice(),
            self.b_g.as_slice(),
        ]
    }
}
