//! Affine adapter `y = x·W + b` over frozen base embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_OUTPUT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_in × d_out`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub version: String,
}

impl Adapter {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            d_in,
            d_out,
            weights: vec![0.0; d_in * d_out],
            bias: vec![0.0; d_out],
            version: "zeros".into(),
        }
    }

    /// Square identity, or truncated identity when `d_out < d_in`.
    pub fn identity(d_in: usize, d_out: usize) -> Self {
        let mut a = Self::zeros(d_in, d_out);
        for i in 0..d_in.min(d_out) {
            a.weights[i * d_out + i] = 1.0;
        }
        a.version = "identity".into();
        a
    }

    /// Truncated identity plus uniform noise in `[-noise, noise]`; bias zero.
    pub fn init(d_in: usize, d_out: usize, noise: f64, seed: u64) -> Self {
        let mut a = Self::identity(d_in, d_out);
        if noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for w in &mut a.weights {
                *w += rng.random_range(-noise..=noise);
            }
        }
        a.version = format!("init-s{seed}");
        a
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.d_in * self.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.d_in * self.d_out,
                actual: self.weights.len(),
            });
        }
        if self.bias.len() != self.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.d_out,
                actual: self.bias.len(),
            });
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("adapter has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        let mut y = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            // hashed inputs are sparse
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.d_out..(i + 1) * self.d_out];
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exact() {
        let a = Adapter::identity(4, 4);
        let x = vec![0.5, -1.25, 0.0, 3.0];
        assert_eq!(a.apply(&x).unwrap(), x);
        let t = Adapter::identity(4, 2);
        assert_eq!(t.apply(&x).unwrap(), vec![0.5, -1.25]);
    }

    #[test]
    fn affine_map_matches_dense_product() {
        let mut a = Adapter::init(3, 2, 0.3, 9);
        a.bias = vec![0.1, -0.2];
        let x = [1.0, 2.0, -1.0];
        let y = a.apply(&x).unwrap();
        for (j, yj) in y.iter().enumerate() {
            let expected: f64 = a.bias[j] + (0..3).map(|i| x[i] * a.weights[i * 2 + j]).sum::<f64>();
            assert!((yj - expected).abs() < 1e-12);
        }
        assert!(a.apply(&[1.0]).is_err());
    }

    #[test]
    fn init_is_seeded_and_valid() {
        assert_eq!(Adapter::init(16, 8, 0.01, 3), Adapter::init(16, 8, 0.01, 3));
        assert_ne!(Adapter::init(16, 8, 0.01, 3).weights, Adapter::init(16, 8, 0.01, 4).weights);
        Adapter::init(16, 8, 0.01, 3).validate().unwrap();
        let mut bad = Adapter::zeros(2, 2);
        bad.weights[0] = f64::NAN;
        assert!(bad.validate().is_err());
    }
}
