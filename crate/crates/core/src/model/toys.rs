//! Small models used to exercise edge cases of the efficiency calculus.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{normal_half_width, DensityModel, NuisanceKind, Support};
use crate::{Error, Result};

/// `N(z, theta)`: the variance is of interest and the mean is the nuisance.
///
/// The nuisance direction `x - z` moves with `z`, so no single unbiased
/// estimating function is orthogonal to every nuisance tangent at once and the
/// information score is strictly shorter than the efficient score.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShiftingNuisance;

impl DensityModel for ShiftingNuisance {
    fn name(&self) -> &str {
        "shifting-nuisance"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        NuisanceKind::Scalar
    }

    fn validate(&self, theta: &[f64], z: &[f64]) -> Result<()> {
        if theta[0] <= 0.0 || z.len() != 1 {
            return Err(Error::Domain("shifting-nuisance needs theta > 0 and a scalar z".into()));
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        let u = x[0] - z[0];
        -u * u / (2.0 * theta[0]) - 0.5 * (2.0 * std::f64::consts::PI * theta[0]).ln()
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let u = x[0] - z[0];
        Some(vec![(u * u - theta[0]) / (2.0 * theta[0] * theta[0])])
    }

    fn dictionary_len(&self, _z: &[f64]) -> usize {
        1
    }

    fn dictionary_at(&self, x: &[f64], _theta: &[f64], z: &[f64]) -> Vec<f64> {
        vec![x[0] - z[0]]
    }

    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support> {
        let w = normal_half_width(tail_mass) * theta[0].sqrt();
        Ok(Support::Interval { lo: z[0] - w, hi: z[0] + w })
    }

    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let d = Normal::new(z[0], theta[0].sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| d.sample(rng)).collect())
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|d| vec![z[0] + d]).collect()
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![0.0])
    }
}

/// `N(theta + z, 1)`: score and nuisance tangent coincide, so the efficient
/// score vanishes.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfoundedShift;

impl DensityModel for ConfoundedShift {
    fn name(&self) -> &str {
        "confounded-shift"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        NuisanceKind::Scalar
    }

    fn validate(&self, _theta: &[f64], z: &[f64]) -> Result<()> {
        if z.len() != 1 {
            return Err(Error::Domain("confounded-shift needs a scalar z".into()));
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        let u = x[0] - theta[0] - z[0];
        -u * u / 2.0 - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![x[0] - theta[0] - z[0]])
    }

    fn dictionary_len(&self, _z: &[f64]) -> usize {
        1
    }

    fn dictionary_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
        vec![x[0] - theta[0] - z[0]]
    }

    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support> {
        let w = normal_half_width(tail_mass);
        let c = theta[0] + z[0];
        Ok(Support::Interval { lo: c - w, hi: c + w })
    }

    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let d = Normal::new(theta[0] + z[0], 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        Ok((0..n).map(|_| d.sample(rng)).collect())
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|d| vec![z[0] + d]).collect()
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }
}
