//! Dense head with concatenation shortcuts and inverted dropout.
//!
//! Layer inputs are described by a wiring map: source slot 0 is the head
//! input, slot `k` is the post-activation output of layer `k` (1-based).
//! Each layer consumes the concatenation of its sources. Dropout masks are
//! applied to the head input and after every hidden layer's activation, only
//! in training mode, scaled at train time so inference needs no rescaling.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    /// Slots concatenated to form this layer's input (0 = head input).
    pub sources: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseHeadParams {
    pub layers: Vec<DenseLayer>,
    /// Dropout probability in [0, 1).
    pub dropout: f64,
}

impl DenseHeadParams {
    /// The paper-style two-layer head: `input -> hidden` (rectifier), then
    /// `concat(input, hidden) -> output` (linear).
    pub fn standard<R: Rng>(
        input: usize,
        hidden: usize,
        output: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        let layer = |rows: usize, cols: usize, rng: &mut R| {
            let bound = 1.0 / (cols as f64).sqrt();
            let mut w = Array2::zeros((rows, cols));
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            let mut b = Array1::zeros(rows);
            for v in b.iter_mut() {
                *v = rng.random_range(-bound..bound);
            }
            (w, b)
        };
        let (w1, b1) = layer(hidden, input, rng);
        let (w2, b2) = layer(output, input + hidden, rng);
        Self {
            layers: vec![
                DenseLayer {
                    weight: w1,
                    bias: b1,
                    sources: vec![0],
                    activation: Activation::Relu,
                },
                DenseLayer {
                    weight: w2,
                    bias: b2,
                    sources: vec![0, 1],
                    activation: Activation::Linear,
                },
            ],
            dropout,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers
            .first()
            .map(|l| l.weight.ncols())
            .unwrap_or(0)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Check that every layer's declared input width equals the sum of its
    /// wired source widths.
    pub fn validate(&self, head_input: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        let mut widths = vec![head_input];
        for (li, layer) in self.layers.iter().enumerate() {
            let mut total = 0usize;
            for &src in &layer.sources {
                let w = *widths.get(src).ok_or_else(|| {
                    Error::Dimension(format!("layer {li} wires unknown slot {src}"))
                })?;
                total += w;
            }
            if layer.weight.ncols() != total {
                return Err(Error::Dimension(format!(
                    "layer {li} expects input {} but wiring provides {total}",
                    layer.weight.ncols()
                )));
            }
            if layer.weight.nrows() != layer.bias.len() {
                return Err(Error::Dimension(format!(
                    "layer {li} weight/bias row mismatch"
                )));
            }
            widths.push(layer.weight.nrows());
        }
        Ok(())
    }
}

/// Forward cache for one head evaluation.
#[derive(Debug, Clone)]
pub struct DenseCache {
    /// Slot values actually fed forward (post-dropout).
    pub slots: Vec<Array1<f64>>,
    /// Per-layer concatenated inputs.
    pub inputs: Vec<Array1<f64>>,
    /// Per-layer pre-activations.
    pub pres: Vec<Array1<f64>>,
    /// Dropout masks: index 0 masks the head input, index `k` the output of
    /// hidden layer `k`. Scaled by 1/(1-p); `None` outside training.
    pub masks: Vec<Option<Array1<f64>>>,
}

fn sample_mask<R: Rng>(len: usize, p: f64, rng: &mut R) -> Array1<f64> {
    let keep = 1.0 - p;
    Array1::from_iter((0..len).map(|_| {
        if rng.random_range(0.0..1.0) < keep {
            1.0 / keep
        } else {
            0.0
        }
    }))
}

/// Head forward pass. In training mode dropout masks are sampled from `rng`;
/// in inference the output is deterministic and `rng` is untouched.
pub fn dense_forward<R: Rng>(
    params: &DenseHeadParams,
    input: &Array1<f64>,
    train_mode: bool,
    rng: &mut R,
) -> (Array1<f64>, DenseCache) {
    let n_layers = params.layers.len();
    let use_dropout = train_mode && params.dropout > 0.0;
    let mut masks: Vec<Option<Array1<f64>>> = Vec::with_capacity(n_layers);
    let mut slots: Vec<Array1<f64>> = Vec::with_capacity(n_layers + 1);

    let input_mask = use_dropout.then(|| sample_mask(input.len(), params.dropout, rng));
    slots.push(match &input_mask {
        Some(m) => input * m,
        None => input.clone(),
    });
    masks.push(input_mask);

    let mut inputs = Vec::with_capacity(n_layers);
    let mut pres = Vec::with_capacity(n_layers);
    for (li, layer) in params.layers.iter().enumerate() {
        let concat: Array1<f64> = Array1::from_iter(
            layer
                .sources
                .iter()
                .flat_map(|&s| slots[s].iter().copied()),
        );
        let pre = layer.weight.dot(&concat) + &layer.bias;
        let mut act = pre.mapv(|v| layer.activation.apply(v));
        let last = li + 1 == n_layers;
        let mask = (use_dropout && !last).then(|| sample_mask(act.len(), params.dropout, rng));
        if let Some(m) = &mask {
            act = &act * m;
        }
        if !last {
            masks.push(mask);
        }
        inputs.push(concat);
        pres.push(pre);
        slots.push(act);
    }
    let out = slots.last().cloned().unwrap_or_else(|| input.clone());
    (
        out,
        DenseCache {
            slots,
            inputs,
            pres,
            masks,
        },
    )
}

/// Head backward pass: accumulates parameter gradients into `grads` and
/// returns the gradient w.r.t. the head input.
pub fn dense_backward(
    params: &DenseHeadParams,
    grads: &mut DenseHeadParams,
    cache: &DenseCache,
    d_out: &Array1<f64>,
) -> Array1<f64> {
    let n_layers = params.layers.len();
    // d_slots[k]: gradient w.r.t. slot value k (post-dropout for masked slots).
    let mut d_slots: Vec<Array1<f64>> = cache
        .slots
        .iter()
        .map(|s| Array1::zeros(s.len()))
        .collect();
    d_slots[n_layers] = d_out.clone();

    for li in (0..n_layers).rev() {
        let layer = &params.layers[li];
        let mut d_act = std::mem::take(&mut d_slots[li + 1]);
        // Hidden-slot dropout mask sits between the activation and the slot.
        if li + 1 < n_layers {
            if let Some(mask) = &cache.masks[li + 1] {
                d_act = &d_act * mask;
            }
        }
        let d_pre = &d_act
            * &cache.pres[li]
                .mapv(|p| layer.activation.derivative(p));
        let g = &mut grads.layers[li];
        for (mut row, &dp) in g.weight.rows_mut().into_iter().zip(d_pre.iter()) {
            row.scaled_add(dp, &cache.inputs[li]);
        }
        g.bias += &d_pre;
        let d_concat = layer.weight.t().dot(&d_pre);
        let mut offset = 0;
        for &src in &layer.sources {
            let w = cache.slots[src].len();
            let piece = d_concat.slice(ndarray::s![offset..offset + w]);
            d_slots[src] += &piece;
            offset += w;
        }
    }

    let mut d_input = std::mem::take(&mut d_slots[0]);
    if let Some(mask) = &cache.masks[0] {
        d_input = &d_input * mask;
    }
    d_input
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let n = 4;
        let head = DenseHeadParams {
            layers: vec![DenseLayer {
                weight: Array2::eye(n),
                bias: Array1::zeros(n),
                sources: vec![0],
                activation: Activation::Linear,
            }],
            dropout: 0.0,
        };
        head.validate(n).unwrap();
        let x = Array1::from(vec![1.0, -2.0, 3.5, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = dense_forward(&head, &x, true, &mut rng);
        assert_eq!(y, x);
    }

    #[test]
    fn inference_ignores_rng() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head = DenseHeadParams::standard(4, 8, 2, 0.4, &mut rng);
        let x = Array1::from(vec![0.5, -0.1, 2.0, 1.0]);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(999);
        let (y1, _) = dense_forward(&head, &x, false, &mut r1);
        let (y2, _) = dense_forward(&head, &x, false, &mut r2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn paper_scale_head_parameter_count() {
        // 2500 -> 2500 (rectifier), concat 5000 -> 2 (linear):
        // 2500*2501 + 2*5001 = 6,262,502.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = DenseHeadParams::standard(2500, 2500, 2, 0.4, &mut rng);
        head.validate(2500).unwrap();
        assert_eq!(head.num_params(), 6_262_502);
    }

    #[test]
    fn wiring_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut head = DenseHeadParams::standard(4, 8, 2, 0.0, &mut rng);
        head.layers[1].sources = vec![1]; // declared width now wrong
        assert!(head.validate(4).is_err());
    }
}
