use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DensityModel, NuisanceKind, Support};
use crate::measure::quadrature::composite_gauss_legendre;
use crate::{Error, Result};

/// Location family `f_z(x - theta)` with an even shape
/// `f_z(u) = phi(u) P(u)^2 / |z|^2`, `P = sum_k z_k h_{2k}` and `h_n` the
/// orthonormal Hermite polynomials. `z = (1, 0, ...)` is the standard normal.
///
/// The nuisance dictionary is `h_2, h_4, ..., h_{2m}` evaluated at `x - theta`
/// (then centered), a generic basis of even directions rather than the
/// scores of the finite shape family.
#[derive(Debug, Clone)]
pub struct SymmetricLocation {
    pub dictionary_size: usize,
}

impl Default for SymmetricLocation {
    fn default() -> Self {
        SymmetricLocation { dictionary_size: 6 }
    }
}

/// Orthonormal (probabilists') Hermite polynomials `h_0..=h_n` at `u`.
pub fn hermite_orthonormal(n: usize, u: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(1.0);
    if n >= 1 {
        h.push(u);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (u * h[k] - kf.sqrt() * h[k - 1]) / (kf + 1.0).sqrt();
        h.push(next);
    }
    h
}

fn shape_poly(z: &[f64], u: f64) -> (f64, f64) {
    let h = hermite_orthonormal(2 * z.len(), u);
    let mut p = 0.0;
    let mut dp = 0.0;
    for (k, c) in z.iter().enumerate() {
        p += c * h[2 * k];
        if k > 0 {
            dp += c * ((2 * k) as f64).sqrt() * h[2 * k - 1];
        }
    }
    (p, dp)
}

fn log_shape(z: &[f64], u: f64) -> f64 {
    let norm: f64 = z.iter().map(|c| c * c).sum();
    let (p, _) = shape_poly(z, u);
    -0.5 * u * u - 0.5 * (2.0 * std::f64::consts::PI).ln() + 2.0 * p.abs().ln() - norm.ln()
}

impl SymmetricLocation {
    fn upper_tail(z: &[f64], u: f64) -> f64 {
        let (x, w) = composite_gauss_legendre(u, u + 40.0, 16, 16);
        x.iter().zip(&w).map(|(x, w)| w * log_shape(z, *x).exp()).sum()
    }

    fn rejection_bound(z: &[f64]) -> f64 {
        // Proposal N(0, 4); the ratio decays like exp(-3u^2/8) times a polynomial.
        let mut m: f64 = 0.0;
        let mut u = 0.0;
        while u <= 40.0 {
            m = m.max(log_shape(z, u).exp() / proposal(u));
            u += 0.005;
        }
        1.05 * m
    }
}

fn proposal(u: f64) -> f64 {
    (-u * u / 8.0).exp() / (2.0 * (2.0 * std::f64::consts::PI).sqrt())
}

impl DensityModel for SymmetricLocation {
    fn name(&self) -> &str {
        "symmetric-location"
    }

    fn theta_dim(&self) -> usize {
        1
    }

    fn nuisance_kind(&self) -> NuisanceKind {
        NuisanceKind::BasisCoefficients
    }

    fn validate(&self, _theta: &[f64], z: &[f64]) -> Result<()> {
        let norm: f64 = z.iter().map(|c| c * c).sum();
        if z.is_empty() || norm <= 0.0 {
            return Err(Error::Domain("symmetric-location needs a nonzero coefficient vector".into()));
        }
        let sign = shape_poly(z, 0.0).0.signum();
        let mut u = 0.0;
        while u <= 40.0 {
            let (p, _) = shape_poly(z, u);
            if p == 0.0 || p.signum() != sign {
                return Err(Error::Domain(format!(
                    "shape polynomial for z = {z:?} vanishes near u = {u:.2}; the score would be undefined"
                )));
            }
            u += 0.01;
        }
        Ok(())
    }

    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64 {
        log_shape(z, x[0] - theta[0])
    }

    fn score_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let u = x[0] - theta[0];
        let (p, dp) = shape_poly(z, u);
        Some(vec![u - 2.0 * dp / p])
    }

    fn dictionary_len(&self, _z: &[f64]) -> usize {
        self.dictionary_size
    }

    fn dictionary_at(&self, x: &[f64], theta: &[f64], _z: &[f64]) -> Vec<f64> {
        let h = hermite_orthonormal(2 * self.dictionary_size, x[0] - theta[0]);
        (1..=self.dictionary_size).map(|k| h[2 * k]).collect()
    }

    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support> {
        let mut u = 2.0;
        while Self::upper_tail(z, u) > tail_mass / 2.0 {
            u += 0.25;
            if u > 200.0 {
                return Err(Error::Numerical("could not bracket the tail of the shape density".into()));
            }
        }
        Ok(Support::Interval { lo: theta[0] - u, hi: theta[0] + u })
    }

    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let m = Self::rejection_bound(z);
        let g = Normal::new(0.0, 2.0).expect("valid proposal");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u: f64 = g.sample(rng);
            let accept: f64 = rng.gen();
            if accept * m * proposal(u) <= log_shape(z, u).exp() {
                out.push(theta[0] + u);
            }
        }
        Ok(out)
    }

    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let mut base = z.to_vec();
        if base.len() < 2 {
            base.push(0.0);
        }
        let c1 = base[1];
        let values: Vec<f64> = if c1 > 0.0 {
            [0.0, -1.0, -0.5, 0.5, 1.0].iter().map(|e: &f64| c1 * 2f64.powf(*e)).collect()
        } else {
            vec![c1, c1 + 0.05, c1 + 0.1, c1 + 0.15, c1 + 0.2]
        };
        values
            .into_iter()
            .map(|v| {
                let mut c = base.clone();
                c[1] = v;
                c
            })
            .collect()
    }

    fn default_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![1.0, 0.3])
    }
}
