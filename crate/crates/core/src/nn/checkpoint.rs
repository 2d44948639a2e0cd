//! JSON checkpoints: version tag, architecture descriptor, normalization
//! constants, and the parameter blocks (row-major, in the documented block
//! order). JSON `f64` serialization round-trips exactly, so save/load is
//! deterministic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{ModelParams, RecurrentKind};
use super::norm::Normalizer;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Human-readable architecture summary carried alongside the raw blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchInfo {
    pub kind: RecurrentKind,
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub arch: ArchInfo,
    pub norm: Normalizer,
    pub model: ModelParams,
}

impl Checkpoint {
    pub fn new(model: ModelParams, norm: Normalizer) -> Self {
        let arch = ArchInfo {
            kind: model.kind(),
            input_size: model.input_size(),
            hidden_sizes: model.hidden_sizes(),
            output_size: model.output_size(),
            dropout: model.head.dropout,
        };
        Self {
            version: CHECKPOINT_VERSION,
            arch,
            norm,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        ck.model.validate()?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::build_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let model = build_model(RecurrentKind::Gru, 2, &[5, 5], 2, 0.2, &mut rng);
        let norm = Normalizer {
            mean: vec![3.25, -1.5],
            std: vec![0.1234567890123, 9.0],
        };
        let ck = Checkpoint::new(model, norm);
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let json2 = serde_json::to_string(&back).unwrap();
        assert_eq!(json, json2);
        assert_eq!(ck.arch, back.arch);
        for (a, b) in ck.model.blocks().iter().zip(back.model.blocks().iter()) {
            assert_eq!(a, b);
        }
    }
}
