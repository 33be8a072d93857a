use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{log_grid, DensityModel, NuisanceKind, Support};
use crate::{Error, Result};

/// Independent `x1 ~ Poisson(z)` and `x2 ~ Poisson(z * theta)`.
///
/// The nuisance dictionary is the single nuisance score
/// `(x1 + x2) / z - (1 + theta)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonPair;

pub(crate) fn ln_factorial(k: f64) -> f64 {
    ln_gamma(k + 1.0)
}

/// Smallest `t` with `P(T > t) <= tail` for `T ~ Poisson(mean)`.
pub(crate) fn poisson_upper_quantile(mean: f64, tail: f64) -> u64 {
    let cap = (mean + 60.0 * mean.sqrt() + 60.0) as u64;
    let mut cdf = 0.0;
    for t in 0..cap {
        let tf = t as f64;
        cdf += (tf * mean.ln() - mean - ln_factorial(tf)).exp();
        if 1.0 - cdf <= tail {
            return t;
        }
    }
    cap
}

impl DensityModel for PoissonPair {
    fn name(&self) -> &str {
        "poisson-pair"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        NuisanceKind::Scalar
    }

    fn sample_dim(&self) -> usize {
        2
    }

    fn validate(&self, theta: &[f64], z: &[f64]) -> Result<()> {
        if theta[0] <= 0.0 {
            return Err(Error::Domain(format!("poisson-pair needs theta > 0, got {}", theta[0])));
        }
        match z {
            [v] if *v > 0.0 => Ok(()),
            _ => Err(Error::Domain(format!("poisson-pair needs a single positive rate, got z = {z:?}"))),
        }
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        let (x1, x2, l) = (x[0], x[1], z[0]);
        let m2 = l * theta[0];
        x1 * l.ln() - l - ln_factorial(x1) + x2 * m2.ln() - m2 - ln_factorial(x2)
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[1] / theta[0] - z[0]])
    }

    fn dictionary_len(&self, _z: &[f64]) -> usize {
        1
    }

    fn dictionary_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
        vec![(x[0] + x[1]) / z[0] - (1.0 + theta[0])]
    }

    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support> {
        Ok(Support::Simplex { max_sum: poisson_upper_quantile(z[0] * (1.0 + theta[0]), tail_mass) })
    }

    fn default_tail_mass(&self) -> f64 {
        1e-12
    }

    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let a = Poisson::new(z[0]).map_err(|e| Error::Domain(e.to_string()))?;
        let b = Poisson::new(z[0] * theta[0]).map_err(|e| Error::Domain(e.to_string()))?;
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let x1: f64 = a.sample(rng);
            let x2: f64 = b.sample(rng);
            out.push(x1);
            out.push(x2);
        }
        Ok(out)
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        log_grid(z)
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![2.0])
    }
}
