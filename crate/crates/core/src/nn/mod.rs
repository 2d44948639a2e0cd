//! From-scratch recurrent stack: LSTM/GRU cells, a dense head with
//! concatenation shortcuts, MSE loss, exact backpropagation through time,
//! and an Adam optimizer. Everything is double precision.

pub mod checkpoint;
pub mod dense;
pub mod gru;
pub mod lstm;
pub mod model;
pub mod norm;
pub mod optim;
pub mod train;

pub use checkpoint::{ArchInfo, Checkpoint};
pub use dense::{Activation, DenseHeadParams, DenseLayer};
pub use gru::GruLayerParams;
pub use lstm::LstmLayerParams;
pub use model::{
    bptt_gradients, bptt_gradients_stateful, build_model, chrono_init, model_forward, model_step,
    mse_loss, ModelParams,
    RecurrentKind, RecurrentLayer, RecurrentState,
};
pub use norm::Normalizer;
pub use optim::{adam_step, AdamConfig, AdamState};
pub use train::{train, TrainConfig, TrainedModel};

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}
