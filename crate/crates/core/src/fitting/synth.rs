//! Seeded Poisson data around a model mean.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fitting::lm::FitData;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub x: Vec<f64>,
    /// model mean per pulse
    pub mean: Vec<f64>,
    /// summed counts over all pulses
    pub counts: Vec<f64>,
    pub pulses: u64,
    pub seed: u64,
}

impl SyntheticDataset {
    /// Per-pulse means with Poisson errors, ready to fit.
    pub fn fit_data(&self) -> Result<FitData> {
        FitData::from_counts(self.x.clone(), &self.counts, self.pulses as f64)
    }

    /// The noiseless means with the same errors as the noisy set.
    pub fn noiseless_fit_data(&self) -> Result<FitData> {
        let noisy = self.fit_data()?;
        FitData::new(self.x.clone(), self.mean.clone(), noisy.sigma)
    }
}

/// counts_i ~ Poisson(pulses · mean_i), drawn from ChaCha8 seeded with `seed`.
pub fn synthesize(x: &[f64], mean: &[f64], pulses: u64, seed: u64) -> Result<SyntheticDataset> {
    if pulses == 0 {
        return invalid("need at least one pulse per point");
    }
    if x.len() != mean.len() {
        return invalid("x grid and model means differ in length");
    }
    if let Some(m) = mean.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return invalid(format!("model mean must be finite and ≥ 0, got {m}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = mean
        .iter()
        .map(|&m| {
            let lambda = m * pulses as f64;
            if lambda == 0.0 {
                return Ok(0.0);
            }
            Poisson::new(lambda)
                .map(|d| d.sample(&mut rng))
                .map_err(|e| crate::Error::InvalidArgument(format!("Poisson mean {lambda}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SyntheticDataset { x: x.to_vec(), mean: mean.to_vec(), counts, pulses, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_gives_zero_counts_and_seeds_repeat() {
        let x = [0.0, 1.0, 2.0];
        let d = synthesize(&x, &[0.0; 3], 300, 1).unwrap();
        assert!(d.counts.iter().all(|c| *c == 0.0));
        let a = synthesize(&x, &[0.3, 1.0, 2.0], 3000, 9).unwrap();
        let b = synthesize(&x, &[0.3, 1.0, 2.0], 3000, 9).unwrap();
        assert_eq!(a, b);
        assert!(synthesize(&x, &[-0.1, 1.0, 1.0], 10, 1).is_err());
        assert!(synthesize(&x, &[0.1, 1.0, 1.0], 0, 1).is_err());
    }

    #[test]
    fn relative_noise_at_three_thousand_pulses() {
        let x: Vec<f64> = (0..4000).map(|i| i as f64).collect();
        let d = synthesize(&x, &vec![1.0; 4000], 3000, 3).unwrap();
        let rel: Vec<f64> = d.counts.iter().map(|c| c / 3000.0 - 1.0).collect();
        let sd = (rel.iter().map(|r| r * r).sum::<f64>() / rel.len() as f64).sqrt();
        assert!((sd - 1.0 / 3000f64.sqrt()).abs() < 0.1 / 3000f64.sqrt(), "{sd}");
    }
}
