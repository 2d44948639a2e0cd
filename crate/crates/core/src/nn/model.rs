//! The full traffic model: stacked recurrent layers feeding the dense head,
//! plus MSE loss and exact BPTT gradients for the fixed architecture.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dense::{dense_backward, dense_forward, DenseCache, DenseHeadParams};
use super::gru::{gru_backward_step, gru_forward_step, GruLayerParams, GruStepCache};
use super::lstm::{lstm_backward_step, lstm_forward_step, LstmLayerParams, LstmStepCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrentKind {
    Lstm,
    Gru,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrentLayer {
    Lstm(LstmLayerParams),
    Gru(GruLayerParams),
}

impl RecurrentLayer {
    pub fn hidden_size(&self) -> usize {
        match self {
            RecurrentLayer::Lstm(p) => p.hidden_size(),
            RecurrentLayer::Gru(p) => p.hidden_size(),
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            RecurrentLayer::Lstm(p) => p.input_size(),
            RecurrentLayer::Gru(p) => p.input_size(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            RecurrentLayer::Lstm(p) => p.num_params(),
            RecurrentLayer::Gru(p) => p.num_params(),
        }
    }
}

/// Snapshot-able per-layer recurrent state. Plain values: cloning a state
/// is the checkpoint operation the FLSP driver relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub hidden: Vec<Array1<f64>>,
    /// Cell states; empty for GRU layers.
    pub cell: Vec<Array1<f64>>,
}

/// Weights of the recurrent stack plus dense head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<RecurrentLayer>,
    pub head: DenseHeadParams,
}

impl ModelParams {
    pub fn kind(&self) -> RecurrentKind {
        match self.layers.first() {
            Some(RecurrentLayer::Gru(_)) => RecurrentKind::Gru,
            _ => RecurrentKind::Lstm,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map(|l| l.input_size()).unwrap_or(0)
    }

    pub fn output_size(&self) -> usize {
        self.head.output_size()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_size()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_params()).sum::<usize>() + self.head.num_params()
    }

    pub fn zero_state(&self) -> RecurrentState {
        RecurrentState {
            hidden: self
                .layers
                .iter()
                .map(|l| Array1::zeros(l.hidden_size()))
                .collect(),
            cell: self
                .layers
                .iter()
                .map(|l| match l {
                    RecurrentLayer::Lstm(p) => Array1::zeros(p.hidden_size()),
                    RecurrentLayer::Gru(_) => Array1::zeros(0),
                })
                .collect(),
        }
    }

    /// Same shapes, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for b in z.blocks_mut() {
            for v in b {
                *v = 0.0;
            }
        }
        z
    }

    /// All parameter blocks as flat slices, in a fixed documented order:
    /// per recurrent layer `w_input, w_hidden, b_input, b_hidden` (row-major),
    /// then per dense layer `weight, bias`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                RecurrentLayer::Lstm(p) => {
                    out.push(p.w_input.as_slice().unwrap());
                    out.push(p.w_hidden.as_slice().unwrap());
                    out.push(p.b_input.as_slice().unwrap());
                    out.push(p.b_hidden.as_slice().unwrap());
                }
                RecurrentLayer::Gru(p) => {
                    out.push(p.w_input.as_slice().unwrap());
                    out.push(p.w_hidden.as_slice().unwrap());
                    out.push(p.b_input.as_slice().unwrap());
                    out.push(p.b_hidden.as_slice().unwrap());
                }
            }
        }
        for l in &self.head.layers {
            out.push(l.weight.as_slice().unwrap());
            out.push(l.bias.as_slice().unwrap());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                RecurrentLayer::Lstm(p) => {
                    out.push(p.w_input.as_slice_mut().unwrap());
                    out.push(p.w_hidden.as_slice_mut().unwrap());
                    out.push(p.b_input.as_slice_mut().unwrap());
                    out.push(p.b_hidden.as_slice_mut().unwrap());
                }
                RecurrentLayer::Gru(p) => {
                    out.push(p.w_input.as_slice_mut().unwrap());
                    out.push(p.w_hidden.as_slice_mut().unwrap());
                    out.push(p.b_input.as_slice_mut().unwrap());
                    out.push(p.b_hidden.as_slice_mut().unwrap());
                }
            }
        }
        for l in &mut self.head.layers {
            out.push(l.weight.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
        }
        out
    }

    /// Block names aligned with [`ModelParams::blocks`], for diagnostics.
    pub fn block_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, _) in self.layers.iter().enumerate() {
            for name in ["w_input", "w_hidden", "b_input", "b_hidden"] {
                out.push(format!("rec{i}.{name}"));
            }
        }
        for (i, _) in self.head.layers.iter().enumerate() {
            out.push(format!("head{i}.weight"));
            out.push(format!("head{i}.bias"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model needs at least one recurrent layer".into()));
        }
        let mixed = self
            .layers
            .iter()
            .any(|l| matches!(l, RecurrentLayer::Lstm(_)))
            && self
                .layers
                .iter()
                .any(|l| matches!(l, RecurrentLayer::Gru(_)));
        if mixed {
            return Err(Error::Config("mixed LSTM/GRU stacks are not supported".into()));
        }
        let mut width = self.layers[0].input_size();
        for (i, l) in self.layers.iter().enumerate() {
            if l.input_size() != width {
                return Err(Error::Dimension(format!(
                    "recurrent layer {i} expects input {} but receives {width}",
                    l.input_size()
                )));
            }
            width = l.hidden_size();
        }
        self.head.validate(width)
    }
}

/// Build a fresh model: `hidden_sizes` recurrent layers of `kind`, then the
/// standard two-layer head `h -> h -> (concat 2h) -> output`.
/// Chrono-style gate-bias initialization: each unit's memory gate is biased
/// toward a timescale drawn log-uniformly from `[1, t_max]` steps, so the
/// stack starts out with long-range memory instead of having to discover it
/// against vanishing gradients. For LSTM the forget bias is set to
/// `ln(t)` and the input bias to `-ln(t)`; for GRU the update-gate bias is
/// set to `ln(t)`.
pub fn chrono_init<R: Rng>(params: &mut ModelParams, t_max: f64, rng: &mut R) -> Result<()> {
    if t_max < 1.0 {
        return Err(Error::Config(format!("chrono t_max = {t_max} must be >= 1")));
    }
    for layer in &mut params.layers {
        let h = layer.hidden_size();
        match layer {
            RecurrentLayer::Lstm(p) => {
                for j in 0..h {
                    let t: f64 = rng.random_range(1.0..=t_max);
                    p.b_input[h + j] = t.ln();
                    p.b_hidden[h + j] = 0.0;
                    p.b_input[j] = -t.ln();
                    p.b_hidden[j] = 0.0;
                }
            }
            RecurrentLayer::Gru(p) => {
                for j in 0..h {
                    let t: f64 = rng.random_range(1.0..=t_max);
                    p.b_input[h + j] = t.ln();
                    p.b_hidden[h + j] = 0.0;
                }
            }
        }
    }
    Ok(())
}

pub fn build_model<R: Rng>(
    kind: RecurrentKind,
    input: usize,
    hidden_sizes: &[usize],
    output: usize,
    dropout: f64,
    rng: &mut R,
) -> ModelParams {
    let mut layers = Vec::with_capacity(hidden_sizes.len());
    let mut d = input;
    for &h in hidden_sizes {
        layers.push(match kind {
            RecurrentKind::Lstm => RecurrentLayer::Lstm(LstmLayerParams::init(d, h, rng)),
            RecurrentKind::Gru => RecurrentLayer::Gru(GruLayerParams::init(d, h, rng)),
        });
        d = h;
    }
    let head = DenseHeadParams::standard(d, d, output, dropout, rng);
    ModelParams { layers, head }
}

pub enum RecCache {
    Lstm(LstmStepCache),
    Gru(GruStepCache),
}

pub struct StepCache {
    pub rec: Vec<RecCache>,
    pub dense: DenseCache,
}

/// Advance the model one slot: run the recurrent stack and head on `x`,
/// mutating `state` in place. Dropout is applied only when `train_mode`.
pub fn model_step<R: Rng>(
    params: &ModelParams,
    x: &Array1<f64>,
    state: &mut RecurrentState,
    train_mode: bool,
    rng: &mut R,
) -> (Array1<f64>, StepCache) {
    let mut rec_caches = Vec::with_capacity(params.layers.len());
    let mut feed = x.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        match layer {
            RecurrentLayer::Lstm(p) => {
                let (h, c, cache) =
                    lstm_forward_step(p, &feed, &state.hidden[li], &state.cell[li]);
                state.hidden[li] = h.clone();
                state.cell[li] = c;
                rec_caches.push(RecCache::Lstm(cache));
                feed = h;
            }
            RecurrentLayer::Gru(p) => {
                let (h, cache) = gru_forward_step(p, &feed, &state.hidden[li]);
                state.hidden[li] = h.clone();
                rec_caches.push(RecCache::Gru(cache));
                feed = h;
            }
        }
    }
    let (out, dense_cache) = dense_forward(&params.head, &feed, train_mode, rng);
    (
        out,
        StepCache {
            rec: rec_caches,
            dense: dense_cache,
        },
    )
}

/// Inference forward pass over a sequence from the given state. Returns the
/// per-step outputs and the carried state.
pub fn model_forward(
    params: &ModelParams,
    seq: &[Array1<f64>],
    state: &RecurrentState,
) -> (Vec<Array1<f64>>, RecurrentState) {
    let mut st = state.clone();
    let mut rng = NoRng;
    let outputs = seq
        .iter()
        .map(|x| model_step(params, x, &mut st, false, &mut rng).0)
        .collect();
    (outputs, st)
}

/// Mean square error over two equal-length sequences: the squared residuals
/// averaged over every step and feature.
pub fn mse_loss(pred: &[Array1<f64>], target: &[Array1<f64>]) -> f64 {
    assert_eq!(pred.len(), target.len(), "sequence length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        assert_eq!(p.len(), t.len(), "feature size mismatch");
        for (a, b) in p.iter().zip(t.iter()) {
            let r = a - b;
            sum += r * r;
        }
        count += p.len();
    }
    sum / count as f64
}

/// One training sample: an input window and its targets (same length).
pub type Window = (Vec<Array1<f64>>, Vec<Array1<f64>>);

/// Exact gradients of the batch-mean MSE through the unrolled model,
/// starting from the zero state. Dropout masks (when `train_mode` and the
/// head has dropout) are sampled once per sample per step from `rng` and the
/// gradients are exact w.r.t. those masks.
///
/// The first `burn_in` steps of every window are washout: they drive the
/// state but are excluded from the loss, so the model is not pressured to
/// recover from a cold start faster than the context it is meant to use.
///
/// Returns `(loss, grads)`; errors on non-finite loss or gradients.
pub fn bptt_gradients<R: Rng>(
    params: &ModelParams,
    batch: &[Window],
    burn_in: usize,
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, ModelParams)> {
    bptt_gradients_stateful(params, batch, None, burn_in, train_mode, rng)
        .map(|(loss, grads, _)| (loss, grads))
}

/// [`bptt_gradients`] with explicit initial states, for stateful truncated
/// BPTT: each window resumes from the state its stream ended the previous
/// segment in, and the final states are returned so training can carry them
/// forward (gradients are truncated at segment boundaries).
pub fn bptt_gradients_stateful<R: Rng>(
    params: &ModelParams,
    batch: &[Window],
    init: Option<&[RecurrentState]>,
    burn_in: usize,
    train_mode: bool,
    rng: &mut R,
) -> Result<(f64, ModelParams, Vec<RecurrentState>)> {
    if let Some(states) = init {
        if states.len() != batch.len() {
            return Err(Error::Dimension(format!(
                "{} initial states for {} windows",
                states.len(),
                batch.len()
            )));
        }
    }
    let mut grads = params.zeros_like();
    let mut total_loss = 0.0;
    let mut final_states = Vec::with_capacity(batch.len());
    let batch_n = batch.len().max(1) as f64;

    for (wi, (inputs, targets)) in batch.iter().enumerate() {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension("window input/target length mismatch".into()));
        }
        let steps = inputs.len();
        if steps == 0 {
            final_states.push(match init {
                Some(states) => states[wi].clone(),
                None => params.zero_state(),
            });
            continue;
        }
        if burn_in >= steps {
            return Err(Error::Config(format!(
                "burn_in = {burn_in} leaves no scored steps in a {steps}-step window"
            )));
        }
        // Forward, caching every step.
        let mut state = match init {
            Some(states) => states[wi].clone(),
            None => params.zero_state(),
        };
        let mut caches = Vec::with_capacity(steps);
        let mut preds = Vec::with_capacity(steps);
        for x in inputs {
            let (y, cache) = model_step(params, x, &mut state, train_mode, rng);
            preds.push(y);
            caches.push(cache);
        }
        final_states.push(state);
        let loss = mse_loss(&preds[burn_in..], &targets[burn_in..]);
        total_loss += loss / batch_n;

        // Backward through time.
        let n_elems = ((steps - burn_in) * preds[0].len()) as f64;
        let n_layers = params.layers.len();
        let mut dh_next: Vec<Array1<f64>> = params
            .layers
            .iter()
            .map(|l| Array1::zeros(l.hidden_size()))
            .collect();
        let mut dc_next: Vec<Array1<f64>> = params
            .layers
            .iter()
            .map(|l| match l {
                RecurrentLayer::Lstm(p) => Array1::zeros(p.hidden_size()),
                RecurrentLayer::Gru(_) => Array1::zeros(0),
            })
            .collect();

        for t in (0..steps).rev() {
            // Washout steps contribute no loss of their own, only state.
            let mut d_hidden_top = if t >= burn_in {
                let d_out =
                    (&preds[t] - &targets[t]).mapv(|r| 2.0 * r / (n_elems * batch_n));
                dense_backward(&params.head, &mut grads.head, &caches[t].dense, &d_out)
            } else {
                Array1::zeros(params.layers.last().unwrap().hidden_size())
            };
            for li in (0..n_layers).rev() {
                let dh = &dh_next[li] + &d_hidden_top;
                match (&params.layers[li], &mut grads.layers[li], &caches[t].rec[li]) {
                    (
                        RecurrentLayer::Lstm(p),
                        RecurrentLayer::Lstm(g),
                        RecCache::Lstm(cache),
                    ) => {
                        let (dx, dh_prev, dc_prev) =
                            lstm_backward_step(p, g, cache, &dh, &dc_next[li]);
                        dh_next[li] = dh_prev;
                        dc_next[li] = dc_prev;
                        d_hidden_top = dx;
                    }
                    (RecurrentLayer::Gru(p), RecurrentLayer::Gru(g), RecCache::Gru(cache)) => {
                        let (dx, dh_prev) = gru_backward_step(p, g, cache, &dh);
                        dh_next[li] = dh_prev;
                        d_hidden_top = dx;
                    }
                    _ => unreachable!("parameter/cache kind mismatch"),
                }
            }
            // d_hidden_top now holds the gradient w.r.t. the step input,
            // which is not a parameter; drop it.
        }
    }

    if !total_loss.is_finite() || grads.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((total_loss, grads, final_states))
}

/// An `Rng` for paths that never draw randomness (inference).
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference path must not draw randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference path must not draw randomness")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("inference path must not draw randomness")
    }
}
