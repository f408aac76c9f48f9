//! Synthetic planted-model datasets for smoke runs and tests.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{apply_mask, Dataset, FeatureMatrix, HiddenEntry, LabelMatrix, MaskSpec};
use crate::error::{GlocalError, Result};
use crate::model::sign;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub l: usize,
    pub n: usize,
    pub d: usize,
    pub k_true: usize,
    /// Standard deviation of Gaussian noise added to the planted scores.
    pub noise: f64,
    /// Percentage of label positions kept observed.
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub full: Dataset,
    pub masked: Dataset,
    pub hidden: Vec<HiddenEntry>,
    /// Planted scores `U* W*ᵀ X` before noise.
    pub planted_scores: Array2<f64>,
}

/// `X ~ N(0, 1)`, planted `U*`, `W*` with standard normal entries and
/// `Y = sign(U* W*ᵀ X + noise)`, then masked to `rho` percent.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthOutput> {
    if spec.k_true == 0 || spec.n == 0 || spec.d == 0 {
        return Err(GlocalError::InvalidArgument(
            "n, d and k_true must be positive".into(),
        ));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(GlocalError::InvalidArgument(format!(
            "noise must be finite and >= 0, got {}",
            spec.noise
        )));
    }
    let mask = MaskSpec::new(spec.rho, spec.seed.wrapping_add(1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = |rows, cols| -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    };
    let x = normal(spec.d, spec.n);
    let u = normal(spec.l, spec.k_true);
    let w = normal(spec.d, spec.k_true);
    let noise = normal(spec.l, spec.n);
    let planted_scores = u.dot(&w.t().dot(&x));
    let y = (&planted_scores + &(noise * spec.noise)).mapv(sign);
    let full = Dataset::new(FeatureMatrix::new(x)?, LabelMatrix::new(y)?)?;
    let (masked, hidden) = apply_mask(&full, &mask);
    Ok(SynthOutput {
        full,
        masked,
        hidden,
        planted_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64, rho: f64) -> SynthSpec {
        SynthSpec {
            l: 6,
            n: 50,
            d: 4,
            k_true: 2,
            noise,
            rho,
            seed: 17,
        }
    }

    #[test]
    fn noiseless_labels_are_planted_signs() {
        let out = synthesize(&spec(0.0, 100.0)).unwrap();
        assert_eq!(out.full, out.masked);
        assert!(out.hidden.is_empty());
        assert_eq!(out.full.labels.values(), &out.planted_scores.mapv(sign));
    }

    #[test]
    fn masking_follows_rho() {
        let out = synthesize(&spec(0.3, 30.0)).unwrap();
        assert_eq!(out.masked.labels.observed_count(), 90);
        assert_eq!(out.hidden.len(), 210);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize(&spec(0.5, 40.0)).unwrap();
        let b = synthesize(&spec(0.5, 40.0)).unwrap();
        assert_eq!(a.full, b.full);
        assert_eq!(a.masked, b.masked);
        assert_eq!(a.hidden, b.hidden);
    }
}
