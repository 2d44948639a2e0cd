//! GRU cell in the standard two-gate formulation:
//!
//! ```text
//! r = sigma(W_ir x + b_ir + W_hr h + b_hr)
//! z = sigma(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r .* (W_hn h + b_hn))
//! h' = (1 - z) .* n + z .* h
//! ```
//!
//! Stacked storage mirrors the LSTM layout with gate rows ordered reset,
//! update, candidate. Per step this costs `3h(d+h)` multiply-accumulates,
//! consistent with the `6h(d+h)` FLOP accounting used in [`crate::analysis`].

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruLayerParams {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_hidden: Array1<f64>,
}

impl GruLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((3 * hidden, input)),
            w_hidden: Array2::zeros((3 * hidden, hidden)),
            b_input: Array1::zeros(3 * hidden),
            b_hidden: Array1::zeros(3 * hidden),
        }
    }

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

#[derive(Debug, Clone)]
pub struct GruStepCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub gate_r: Array1<f64>,
    pub gate_z: Array1<f64>,
    pub cand: Array1<f64>,
    /// `W_hn h_prev + b_hn`, needed for the reset-gate gradient.
    pub hidden_cand: Array1<f64>,
}

pub fn gru_forward_step(
    params: &GruLayerParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
) -> (Array1<f64>, GruStepCache) {
    let h = params.hidden_size();
    let pre_x = params.w_input.dot(x) + &params.b_input;
    let pre_h = params.w_hidden.dot(h_prev) + &params.b_hidden;
    let gate_r = (&pre_x.slice(s![0..h]) + &pre_h.slice(s![0..h])).mapv(sigmoid);
    let gate_z = (&pre_x.slice(s![h..2 * h]) + &pre_h.slice(s![h..2 * h])).mapv(sigmoid);
    let hidden_cand = pre_h.slice(s![2 * h..3 * h]).to_owned();
    let cand = (&pre_x.slice(s![2 * h..3 * h]) + &(&gate_r * &hidden_cand)).mapv(f64::tanh);
    let h_new = (1.0 - &gate_z) * &cand + &gate_z * h_prev;
    let cache = GruStepCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        gate_r,
        gate_z,
        cand,
        hidden_cand,
    };
    (h_new, cache)
}

/// Backward step; accumulates into `grads`, returns `(dx, dh_prev)`.
pub fn gru_backward_step(
    params: &GruLayerParams,
    grads: &mut GruLayerParams,
    cache: &GruStepCache,
    dh: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let h = params.hidden_size();
    let d_z = dh * &(&cache.h_prev - &cache.cand);
    let d_n = dh * &cache.gate_z.mapv(|z| 1.0 - z);
    let mut dh_prev = dh * &cache.gate_z;

    let da_n = &d_n * &cache.cand.mapv(|n| 1.0 - n * n);
    let d_r = &da_n * &cache.hidden_cand;
    let d_m = &da_n * &cache.gate_r; // grad of W_hn h_prev + b_hn
    let da_r = &d_r * &cache.gate_r * &cache.gate_r.mapv(|r| 1.0 - r);
    let da_z = &d_z * &cache.gate_z * &cache.gate_z.mapv(|z| 1.0 - z);

    // Stacked pre-activation gradients r|z|n. The input-side and hidden-side
    // candidate pre-activations differ (reset gate), so build both stacks.
    let mut d_pre_x = Array1::zeros(3 * h);
    d_pre_x.slice_mut(s![0..h]).assign(&da_r);
    d_pre_x.slice_mut(s![h..2 * h]).assign(&da_z);
    d_pre_x.slice_mut(s![2 * h..3 * h]).assign(&da_n);
    let mut d_pre_h = Array1::zeros(3 * h);
    d_pre_h.slice_mut(s![0..h]).assign(&da_r);
    d_pre_h.slice_mut(s![h..2 * h]).assign(&da_z);
    d_pre_h.slice_mut(s![2 * h..3 * h]).assign(&d_m);

    for (mut row, &dp) in grads.w_input.rows_mut().into_iter().zip(d_pre_x.iter()) {
        row.scaled_add(dp, &cache.x);
    }
    for (mut row, &dp) in grads.w_hidden.rows_mut().into_iter().zip(d_pre_h.iter()) {
        row.scaled_add(dp, &cache.h_prev);
    }
    grads.b_input += &d_pre_x;
    grads.b_hidden += &d_pre_h;

    let dx = params.w_input.t().dot(&d_pre_x);
    dh_prev += &params.w_hidden.t().dot(&d_pre_h);
    (dx, dh_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_decay_state_by_half() {
        // r = z = 0.5, n = tanh(0) = 0, so h' = 0.5 h: the state decays
        // toward the 0.5-gated fixed point at zero.
        let p = GruLayerParams::zeros(1, 1);
        let x = Array1::from(vec![0.3]);
        let mut h = Array1::from(vec![0.8]);
        let (h1, _) = gru_forward_step(&p, &x, &h);
        assert!((h1[0] - 0.4).abs() < 1e-15);
        for _ in 0..50 {
            let (nh, _) = gru_forward_step(&p, &x, &h);
            h = nh;
        }
        assert!(h[0].abs() < 1e-12);
    }

    #[test]
    fn saturated_update_gate_preserves_state() {
        // Large positive update-gate bias forces z ~ 1, so h' ~ h.
        let mut p = GruLayerParams::zeros(2, 3);
        for i in 3..6 {
            p.b_input[i] = 30.0;
        }
        let x = Array1::from(vec![1.0, -1.0]);
        let h = Array1::from(vec![0.3, -0.7, 0.1]);
        let (h1, _) = gru_forward_step(&p, &x, &h);
        for (a, b) in h1.iter().zip(h.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn carried_state_equals_single_pass() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let p = GruLayerParams::init(2, 3, &mut rng);
        let seq: Vec<Array1<f64>> = (0..6)
            .map(|i| Array1::from(vec![0.3 * i as f64, 0.1 - 0.2 * i as f64]))
            .collect();
        let mut h = Array1::zeros(3);
        for x in &seq {
            let (nh, _) = gru_forward_step(&p, x, &h);
            h = nh;
        }
        let mut h2 = Array1::zeros(3);
        for part in [&seq[..2], &seq[2..]] {
            for x in part {
                let (nh, _) = gru_forward_step(&p, x, &h2);
                h2 = nh;
            }
        }
        assert_eq!(h, h2);
    }
}
