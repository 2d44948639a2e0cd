//! LSTM cell: forward pass and hand-derived backward pass.
//!
//! Gate weights are stored stacked: `w_input` is `(4h, d)` and `w_hidden`
//! `(4h, h)`, with gate rows ordered input, forget, cell, output. Biases
//! follow the same layout. The split input/hidden bias pair is kept so the
//! parameter count matches the usual `4h(d + h + 2)` accounting.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_hidden: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden, input)),
            w_hidden: Array2::zeros((4 * hidden, hidden)),
            b_input: Array1::zeros(4 * hidden),
            b_hidden: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform init in [-1/sqrt(h), 1/sqrt(h)].
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input, hidden);
        for block in [&mut p.w_input, &mut p.w_hidden] {
            for v in block.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        for block in [&mut p.b_input, &mut p.b_hidden] {
            for v in block.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w_input.len() + self.w_hidden.len() + self.b_input.len() + self.b_hidden.len()
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub gate_i: Array1<f64>,
    pub gate_f: Array1<f64>,
    pub gate_g: Array1<f64>,
    pub gate_o: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
}

/// One forward step. Returns the new `(h, c)` plus the cache.
pub fn lstm_forward_step(
    params: &LstmLayerParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, LstmStepCache) {
    let h = params.hidden_size();
    let pre = params.w_input.dot(x) + &params.b_input + params.w_hidden.dot(h_prev)
        + &params.b_hidden;
    let gate_i = pre.slice(s![0..h]).mapv(sigmoid);
    let gate_f = pre.slice(s![h..2 * h]).mapv(sigmoid);
    let gate_g = pre.slice(s![2 * h..3 * h]).mapv(f64::tanh);
    let gate_o = pre.slice(s![3 * h..4 * h]).mapv(sigmoid);
    let c = &gate_f * c_prev + &gate_i * &gate_g;
    let tanh_c = c.mapv(f64::tanh);
    let h_new = &gate_o * &tanh_c;
    let cache = LstmStepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        c: c.clone(),
        tanh_c,
    };
    (h_new, c, cache)
}

/// One backward step. `dh`/`dc` are the loss gradients w.r.t. this step's
/// outputs (including contributions from later steps). Accumulates into
/// `grads` and returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_backward_step(
    params: &LstmLayerParams,
    grads: &mut LstmLayerParams,
    cache: &LstmStepCache,
    dh: &Array1<f64>,
    dc_in: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let h = params.hidden_size();
    let d_o = dh * &cache.tanh_c;
    let dc = dc_in + &(dh * &cache.gate_o * cache.tanh_c.mapv(|t| 1.0 - t * t));
    let d_f = &dc * &cache.c_prev;
    let d_i = &dc * &cache.gate_g;
    let d_g = &dc * &cache.gate_i;
    let dc_prev = &dc * &cache.gate_f;

    // Pre-activation gradients, stacked i|f|g|o.
    let mut d_pre = Array1::zeros(4 * h);
    d_pre
        .slice_mut(s![0..h])
        .assign(&(&d_i * &cache.gate_i * cache.gate_i.mapv(|v| 1.0 - v)));
    d_pre
        .slice_mut(s![h..2 * h])
        .assign(&(&d_f * &cache.gate_f * cache.gate_f.mapv(|v| 1.0 - v)));
    d_pre
        .slice_mut(s![2 * h..3 * h])
        .assign(&(&d_g * cache.gate_g.mapv(|v| 1.0 - v * v)));
    d_pre
        .slice_mut(s![3 * h..4 * h])
        .assign(&(&d_o * &cache.gate_o * cache.gate_o.mapv(|v| 1.0 - v)));

    // Outer products into the stacked weight blocks.
    for (mut row, &dp) in grads.w_input.rows_mut().into_iter().zip(d_pre.iter()) {
        row.scaled_add(dp, &cache.x);
    }
    for (mut row, &dp) in grads.w_hidden.rows_mut().into_iter().zip(d_pre.iter()) {
        row.scaled_add(dp, &cache.h_prev);
    }
    grads.b_input += &d_pre;
    grads.b_hidden += &d_pre;

    let dx = params.w_input.t().dot(&d_pre);
    let dh_prev = params.w_hidden.t().dot(&d_pre);
    (dx, dh_prev, dc_prev)
}
