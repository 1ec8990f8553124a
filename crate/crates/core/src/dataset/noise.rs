use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Seeded standard-normal source: ChaCha8 uniforms through Box–Muller.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every state entry, row by row.
pub fn add_noise(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(ds.clone());
    }
    let mut src = GaussianSource::new(seed);
    let x = ds.states().map(|v| v + sigma * src.next_normal());
    ds.with_states(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn flat(n: usize) -> Dataset {
        Dataset::new((0..n).map(|k| k as f64).collect(), Matrix::zeros(n, 1)).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let ds = flat(20);
        assert_eq!(add_noise(&ds, 0.0, 3).unwrap(), ds);
        assert!(add_noise(&ds, -1.0, 3).is_err());
    }

    #[test]
    fn sample_std_within_bounds() {
        let ds = flat(10_001);
        let noisy = add_noise(&ds, 0.1, 42).unwrap();
        let v = noisy.states().as_slice();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.097..=0.103).contains(&std), "std {std}");
        assert!(mean.abs() < 0.005);
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = flat(100);
        let a = add_noise(&ds, 0.5, 7).unwrap();
        assert_eq!(a, add_noise(&ds, 0.5, 7).unwrap());
        assert_ne!(a, add_noise(&ds, 0.5, 8).unwrap());
    }
}
