use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{log_grid, normal_half_width, DensityModel, NuisanceKind, Support};
use crate::{Error, Result};

/// `N(theta, z)` with `z` the variance.
///
/// The nuisance dictionary is the single function `(x - theta)^2 / z - 1`,
/// which is `2z` times the variance score.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalMean;

impl DensityModel for NormalMean {
    fn name(&self) -> &str {
        "normal-mean"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        NuisanceKind::Scalar
    }

    fn validate(&self, _theta: &[f64], z: &[f64]) -> Result<()> {
        match z {
            [v] if *v > 0.0 => Ok(()),
            _ => Err(Error::Domain(format!("normal-mean needs a single positive variance, got z = {z:?}"))),
        }
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        let u = x[0] - theta[0];
        -u * u / (2.0 * z[0]) - 0.5 * (2.0 * std::f64::consts::PI * z[0]).ln()
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![(x[0] - theta[0]) / z[0]])
    }

    fn dictionary_len(&self, _z: &[f64]) -> usize {
        1
    }

    fn dictionary_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
        let u = x[0] - theta[0];
        vec![u * u / z[0] - 1.0]
    }

    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support> {
        let w = normal_half_width(tail_mass) * z[0].sqrt();
        Ok(Support::Interval { lo: theta[0] - w, hi: theta[0] + w })
    }

    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let d = Normal::new(theta[0], z[0].sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| d.sample(rng)).collect())
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        log_grid(z)
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![1.0])
    }
}
