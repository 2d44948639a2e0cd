//! Closed-form parameter and FLOP accounting for the supported
//! architectures under the rolling and feedback drivers, plus cross-checks
//! against the instrumented evaluation counters from live runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelParams, RecurrentKind};
use crate::predict::{Driver, StreamRun, StreamingConfig};

/// Architecture geometry the calculators operate on. Dense/fully-connected
/// layers are `(input, output)` pairs so concatenation wiring (inputs wider
/// than the previous output) is representable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchDescriptor {
    Recurrent {
        kind: RecurrentKind,
        /// Input feature size `h_0`.
        input: usize,
        /// Hidden sizes `h_1..h_L`.
        hidden: Vec<usize>,
        /// Dense layers as `(m_{l-1}, m_l)`.
        dense: Vec<(usize, usize)>,
    },
    Cnn1d {
        /// Input window size `W`.
        window: usize,
        /// Channel sizes `C_0..C_L`.
        channels: Vec<usize>,
        /// Kernel sizes `K_1..K_L`.
        kernels: Vec<usize>,
        /// Fully connected layers as `(m_{l-1}, m_l)`.
        fc: Vec<(usize, usize)>,
    },
}

impl ArchDescriptor {
    /// Geometry of an in-memory model, with concatenation-aware dense input
    /// sizes read off the actual weight shapes.
    pub fn from_model(model: &ModelParams) -> Self {
        ArchDescriptor::Recurrent {
            kind: model.kind(),
            input: model.input_size(),
            hidden: model.hidden_sizes(),
            dense: model
                .head
                .layers
                .iter()
                .map(|l| (l.weight.ncols(), l.weight.nrows()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ArchDescriptor::Recurrent {
                input,
                hidden,
                dense,
                ..
            } => {
                if *input == 0 || hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::Config(
                        "recurrent descriptor needs positive input and hidden sizes".into(),
                    ));
                }
                if dense.iter().any(|&(i, o)| i == 0 || o == 0) {
                    return Err(Error::Config("dense layer sizes must be positive".into()));
                }
            }
            ArchDescriptor::Cnn1d {
                window,
                channels,
                kernels,
                fc,
            } => {
                if *window == 0 || channels.len() < 2 || channels.contains(&0) {
                    return Err(Error::Config(
                        "CNN descriptor needs a window and at least one cell".into(),
                    ));
                }
                if kernels.len() != channels.len() - 1 || kernels.contains(&0) {
                    return Err(Error::Config(
                        "CNN needs one positive kernel size per cell".into(),
                    ));
                }
                if fc.iter().any(|&(i, o)| i == 0 || o == 0) {
                    return Err(Error::Config("FC layer sizes must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Exact parameter count for the descriptor.
pub fn param_count(arch: &ArchDescriptor) -> Result<u64> {
    arch.validate()?;
    Ok(match arch {
        ArchDescriptor::Recurrent {
            kind,
            input,
            hidden,
            dense,
        } => {
            let gates = match kind {
                RecurrentKind::Lstm => 4u64,
                RecurrentKind::Gru => 3u64,
            };
            let mut total = 0u64;
            let mut prev = *input as u64;
            for &h in hidden {
                let h = h as u64;
                total += gates * h * (prev + h + 2);
                prev = h;
            }
            for &(i, o) in dense {
                total += o as u64 * (i as u64 + 1);
            }
            total
        }
        ArchDescriptor::Cnn1d {
            channels,
            kernels,
            fc,
            ..
        } => {
            let mut total = 0u64;
            for (l, &k) in kernels.iter().enumerate() {
                total += channels[l + 1] as u64 * (channels[l] as u64 * k as u64 + 1);
            }
            for &(i, o) in fc {
                total += o as u64 * (i as u64 + 1);
            }
            total
        }
    })
}

/// FLOPs of a single pass through the network (one slot for the recurrent
/// stacks, one window for the CNN) — the bracketed term of the per-cycle
/// cost formulas.
pub fn flops_per_eval(arch: &ArchDescriptor) -> Result<f64> {
    arch.validate()?;
    Ok(match arch {
        ArchDescriptor::Recurrent {
            kind,
            input,
            hidden,
            dense,
        } => {
            let (gate_mul, act) = match kind {
                RecurrentKind::Lstm => (8.0, 29.0),
                RecurrentKind::Gru => (6.0, 22.0),
            };
            let mut total = 0.0;
            let mut prev = *input as f64;
            for &h in hidden {
                let h = h as f64;
                total += gate_mul * h * (prev + h) + act * h;
                prev = h;
            }
            for &(i, o) in dense {
                total += 2.0 * i as f64 * o as f64;
            }
            total
        }
        ArchDescriptor::Cnn1d {
            window,
            channels,
            kernels,
            fc,
        } => {
            let mut total = 0.0;
            for (l, &k) in kernels.iter().enumerate() {
                let spatial = *window as f64 / 2f64.powi(l as i32 + 1);
                total +=
                    spatial * channels[l + 1] as f64 * (2.0 * channels[l] as f64 * k as f64 + 0.5);
            }
            let mut fc_total = 0.0;
            let mut last_out = 0.0;
            for &(i, o) in fc {
                fc_total += 2.0 * i as f64 * o as f64 + o as f64;
                last_out = o as f64;
            }
            total + fc_total - last_out
        }
    })
}

/// FLOPs per emitted output slot under the given driver, per the closed-form
/// cost expressions: the per-eval cost times `(l_buff + l_p) / l_f` for the
/// rolling driver or `(l_f + l_p) / l_f` for the feedback driver. The CNN
/// runs a whole window per cycle, so its cost is `1 / l_f` per-eval.
pub fn flops_per_step(
    arch: &ArchDescriptor,
    streaming: &StreamingConfig,
    driver: Driver,
    l_buff: Option<usize>,
) -> Result<f64> {
    streaming.validate()?;
    let per_eval = flops_per_eval(arch)?;
    let l_f = streaming.l_f as f64;
    let l_p = streaming.l_p as f64;
    match arch {
        ArchDescriptor::Recurrent { .. } => match driver {
            Driver::Flsp => Ok((l_f + l_p) / l_f * per_eval),
            Driver::Rolling => {
                let l_buff = l_buff.ok_or_else(|| {
                    Error::Config("the rolling driver needs l_buff for cost accounting".into())
                })? as f64;
                Ok((l_buff + l_p) / l_f * per_eval)
            }
        },
        ArchDescriptor::Cnn1d { .. } => match driver {
            Driver::Rolling => Ok(per_eval / l_f),
            Driver::Flsp => Err(Error::Config(
                "the CNN-1D model has no recurrent state and only supports the rolling driver"
                    .into(),
            )),
        },
    }
}

/// Parameter count and per-slot costs for one architecture/geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub flops_per_eval: f64,
    pub flops_rolling: f64,
    /// Absent for architectures without live state (CNN-1D).
    pub flops_flsp: Option<f64>,
    /// flsp / rolling; absent when either side is.
    pub ratio: Option<f64>,
}

pub fn cost_report(
    arch: &ArchDescriptor,
    streaming: &StreamingConfig,
    l_buff: usize,
) -> Result<CostReport> {
    let params = param_count(arch)?;
    let per_eval = flops_per_eval(arch)?;
    let rolling = flops_per_step(arch, streaming, Driver::Rolling, Some(l_buff))?;
    let flsp = match arch {
        ArchDescriptor::Recurrent { .. } => {
            Some(flops_per_step(arch, streaming, Driver::Flsp, None)?)
        }
        ArchDescriptor::Cnn1d { .. } => None,
    };
    Ok(CostReport {
        params,
        flops_per_eval: per_eval,
        flops_rolling: rolling,
        flops_flsp: flsp,
        ratio: flsp.map(|f| f / rolling),
    })
}

/// Measured cost of a live run, next to what the formulas promise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalCost {
    pub cell_evals: u64,
    pub expected_evals: u64,
    pub flops: f64,
    pub cycles: u64,
}

/// Cross-check a run's instrumented counter against the closed form:
/// the feedback driver costs `l_hist + k (l_f + l_p)` evaluations after `k`
/// cycles; the rolling driver pays its (possibly still-filling) buffer plus
/// `l_p` every cycle. Total FLOPs are evaluations times the per-eval cost.
pub fn empirical_cost(
    run: &StreamRun,
    streaming: &StreamingConfig,
    driver: Driver,
    l_buff: Option<usize>,
    arch: &ArchDescriptor,
) -> Result<EmpiricalCost> {
    let k = run.blocks.len() as u64;
    let expected = match driver {
        Driver::Flsp => streaming.l_hist as u64 + k * (streaming.l_f + streaming.l_p) as u64,
        Driver::Rolling => {
            let mut total = 0u64;
            for step in 1..=k {
                let filled = streaming.l_hist as u64 + step * streaming.l_f as u64;
                let buf = match l_buff {
                    Some(cap) => filled.min(cap as u64),
                    None => filled,
                };
                total += buf + streaming.l_p as u64;
            }
            total
        }
    };
    Ok(EmpiricalCost {
        cell_evals: run.cell_evals,
        expected_evals: expected,
        flops: run.cell_evals as f64 * flops_per_eval(arch)?,
        cycles: k,
    })
}
