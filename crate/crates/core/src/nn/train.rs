//! One-step-ahead training of the traffic model: windows sliced from traces,
//! batched exact BPTT gradients, Adam updates.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{
    bptt_gradients, bptt_gradients_stateful, build_model, chrono_init, ModelParams,
    RecurrentKind, RecurrentState, Window,
};
use super::norm::Normalizer;
use super::optim::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    /// BPTT window length in slots.
    pub window: usize,
    /// Stride between window starts.
    pub stride: usize,
    /// Leading washout steps per window: they drive the state but are
    /// excluded from the loss, so the model is never rewarded for fast
    /// cold-start recovery.
    pub burn_in: usize,
    /// When set, chrono-style gate-bias initialization draws each unit's
    /// memory timescale log-uniformly from `[1, t_max]` slots.
    pub chrono_t_max: Option<f64>,
    /// Stateful truncated BPTT: traces are split into `batch_size` parallel
    /// streams and the recurrent state carries across consecutive segments,
    /// so the model trains in the same unbounded-context regime a live
    /// streaming predictor runs in. `stride` is ignored in this mode.
    pub stateful: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 25,
            epochs: 20,
            dropout: 0.4,
            window: 128,
            stride: 64,
            burn_in: 0,
            chrono_t_max: None,
            stateful: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0,1)".into()));
        }
        if self.window < 2 || self.stride == 0 {
            return Err(Error::Config("window must be >= 2 and stride >= 1".into()));
        }
        if self.burn_in >= self.window {
            return Err(Error::Config("burn_in must be smaller than window".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

pub struct TrainedModel {
    pub model: ModelParams,
    pub norm: Normalizer,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
}

fn add_scaled(dst: &mut ModelParams, src: &ModelParams, scale: f64) {
    let s = src.blocks();
    for (i, d) in dst.blocks_mut().into_iter().enumerate() {
        for (a, b) in d.iter_mut().zip(s[i]) {
            *a += scale * b;
        }
    }
}

/// Slice one-step-ahead windows out of normalized traces.
fn make_windows(traces: &[Vec<[f64; 2]>], norm: &Normalizer, cfg: &TrainConfig) -> Vec<Window> {
    let mut windows = Vec::new();
    for trace in traces {
        let rows: Vec<Array1<f64>> = trace
            .iter()
            .map(|r| norm.apply(&Array1::from(vec![r[0], r[1]])))
            .collect();
        let w = cfg.window;
        if rows.len() < w + 1 {
            continue;
        }
        let mut t = 0;
        while t + w + 1 <= rows.len() {
            let inputs = rows[t..t + w].to_vec();
            let targets = rows[t + 1..t + w + 1].to_vec();
            windows.push((inputs, targets));
            t += cfg.stride;
        }
    }
    windows
}

/// Train a fresh model of the given architecture on per-slot
/// `[detected, collided]` traces.
pub fn train(
    traces: &[Vec<[f64; 2]>],
    kind: RecurrentKind,
    hidden_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let rows: Vec<Vec<f64>> = traces
        .iter()
        .flat_map(|t| t.iter().map(|r| vec![r[0], r[1]]))
        .collect();
    let norm = Normalizer::fit(&rows)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = build_model(kind, 2, hidden_sizes, 2, cfg.dropout, &mut rng);
    if let Some(t_max) = cfg.chrono_t_max {
        chrono_init(&mut model, t_max, &mut rng)?;
    }
    model.validate()?;
    let mut adam = AdamState::new(&model);
    let adam_cfg = cfg.adam();

    if cfg.stateful {
        return train_stateful(traces, &norm, model, adam, adam_cfg, cfg);
    }

    let windows = make_windows(traces, &norm, cfg);
    if windows.is_empty() {
        return Err(Error::Config(
            "training traces shorter than one window".into(),
        ));
    }

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // Per-sample gradients in parallel, summed in deterministic
            // order; dropout streams are seeded per (epoch, batch, sample).
            let per_sample: Vec<(f64, ModelParams)> = chunk
                .par_iter()
                .enumerate()
                .map(|(si, &wi)| {
                    let sample_seed = cfg
                        .seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add((epoch as u64) << 40)
                        .wrapping_add((bi as u64) << 20)
                        .wrapping_add(si as u64);
                    let mut srng = ChaCha8Rng::seed_from_u64(sample_seed);
                    bptt_gradients(
                        &model,
                        std::slice::from_ref(&windows[wi]),
                        cfg.burn_in,
                        true,
                        &mut srng,
                    )
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / chunk.len() as f64;
            let mut grads = model.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &per_sample {
                loss += l * scale;
                add_scaled(&mut grads, g, scale);
            }
            adam_step(&mut model, &grads, &mut adam, &adam_cfg);
            epoch_loss += loss;
            n_batches += 1;
        }
        loss_history.push(epoch_loss / n_batches as f64);
    }

    Ok(TrainedModel {
        model,
        norm,
        loss_history,
    })
}

/// Stateful truncated BPTT: each trace is split into contiguous shards that
/// run as parallel streams; within a shard the state carries from one
/// `window`-long segment to the next (gradients stop at segment
/// boundaries). One Adam step per segment position.
fn train_stateful(
    traces: &[Vec<[f64; 2]>],
    norm: &Normalizer,
    mut model: ModelParams,
    mut adam: AdamState,
    adam_cfg: AdamConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    // Normalize and shard. Every trace contributes `batch_size / n_traces`
    // shards (at least one), each long enough for a full segment.
    let shards_per_trace = (cfg.batch_size / traces.len().max(1)).max(1);
    let mut shards: Vec<Vec<Array1<f64>>> = Vec::new();
    for trace in traces {
        let rows: Vec<Array1<f64>> = trace
            .iter()
            .map(|r| norm.apply(&Array1::from(vec![r[0], r[1]])))
            .collect();
        let per = (rows.len() / shards_per_trace).max(cfg.window + 1);
        for chunk in rows.chunks(per) {
            if chunk.len() > cfg.window {
                shards.push(chunk.to_vec());
            }
        }
    }
    if shards.is_empty() {
        return Err(Error::Config(
            "training traces shorter than one window".into(),
        ));
    }
    let n_segs = shards
        .iter()
        .map(|s| (s.len() - 1) / cfg.window)
        .min()
        .unwrap();

    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut states: Vec<RecurrentState> =
            shards.iter().map(|_| model.zero_state()).collect();
        let mut epoch_loss = 0.0;
        for seg in 0..n_segs {
            let t = seg * cfg.window;
            // Only the cold-started first segment gets a washout.
            let burn_in = if seg == 0 { cfg.burn_in } else { 0 };
            let per_shard: Vec<(f64, ModelParams, Vec<RecurrentState>)> = shards
                .par_iter()
                .enumerate()
                .map(|(si, rows)| {
                    let sample_seed = cfg
                        .seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add((epoch as u64) << 40)
                        .wrapping_add((seg as u64) << 20)
                        .wrapping_add(si as u64);
                    let mut srng = ChaCha8Rng::seed_from_u64(sample_seed);
                    let window: Window = (
                        rows[t..t + cfg.window].to_vec(),
                        rows[t + 1..t + cfg.window + 1].to_vec(),
                    );
                    bptt_gradients_stateful(
                        &model,
                        std::slice::from_ref(&window),
                        Some(std::slice::from_ref(&states[si])),
                        burn_in,
                        true,
                        &mut srng,
                    )
                })
                .collect::<Result<_>>()?;

            let scale = 1.0 / shards.len() as f64;
            let mut grads = model.zeros_like();
            let mut loss = 0.0;
            for (si, (l, g, finals)) in per_shard.into_iter().enumerate() {
                loss += l * scale;
                add_scaled(&mut grads, &g, scale);
                states[si] = finals.into_iter().next().unwrap();
            }
            adam_step(&mut model, &grads, &mut adam, &adam_cfg);
            epoch_loss += loss;
        }
        loss_history.push(epoch_loss / n_segs as f64);
    }

    Ok(TrainedModel {
        model,
        norm: norm.clone(),
        loss_history,
    })
}
