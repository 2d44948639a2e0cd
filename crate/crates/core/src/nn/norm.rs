//! Per-feature affine normalization fitted on training data.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standardization to zero mean / unit variance, stored in checkpoints so
/// streaming inference normalizes exactly like training did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Identity transform for `features` features.
    pub fn identity(features: usize) -> Self {
        Self {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    /// Fit on rows of equal feature count. Degenerate (constant) features
    /// get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Config("cannot fit normalizer on empty data".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = v.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        Array1::from_iter(
            x.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| (v - m) / s),
        )
    }

    pub fn invert(&self, x: &Array1<f64>) -> Array1<f64> {
        Array1::from_iter(
            x.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (m, s))| v * s + m),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_then_invert_is_identity() {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![3.0 + (i as f64).sin() * 7.0, 40.0 + i as f64])
            .collect();
        let norm = Normalizer::fit(&rows).unwrap();
        let x = Array1::from(vec![12.5, 71.0]);
        let back = norm.invert(&norm.apply(&x));
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_data_is_standardized() {
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| vec![(i as f64 * 0.37).cos() * 5.0 + 2.0])
            .collect();
        let norm = Normalizer::fit(&rows).unwrap();
        let mut mean = 0.0;
        let mut var = 0.0;
        for r in &rows {
            let z = (r[0] - norm.mean[0]) / norm.std[0];
            mean += z / rows.len() as f64;
            var += z * z / rows.len() as f64;
        }
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_feature_keeps_unit_scale() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![4.0]).collect();
        let norm = Normalizer::fit(&rows).unwrap();
        assert_eq!(norm.std[0], 1.0);
        assert!(norm.apply(&Array1::from(vec![4.0]))[0].abs() < 1e-12);
    }
}
