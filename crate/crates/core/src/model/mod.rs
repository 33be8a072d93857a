//! Density models: a density in `x` indexed by an interest parameter `theta`
//! and a nuisance `z`, with a score and a dictionary spanning the nuisance
//! tangent space.

mod custom;
pub mod expr;
mod normal_mean;
mod poisson_pair;
mod symmetric_location;
pub mod toys;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::measure::{center, Density, IntegrationScheme, L2Vec, Subspace};
use crate::{fd_step, Error, Result, Tolerances};

pub use custom::{CustomModel, CustomModelSpec, CustomSupport};
pub use normal_mean::NormalMean;
pub(crate) use poisson_pair::ln_factorial;
pub use poisson_pair::PoissonPair;
pub use symmetric_location::{hermite_orthonormal, SymmetricLocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceKind {
    Scalar,
    Vector,
    BasisCoefficients,
}

/// Region that carries all but a negligible amount of the mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Interval { lo: f64, hi: f64 },
    /// Integers `lo..=hi`.
    Lattice { lo: i64, hi: i64 },
    /// Nonnegative integer pairs with `x1 + x2 <= max_sum`.
    Simplex { max_sum: u64 },
}

impl Support {
    pub fn union(self, other: Support) -> Result<Support> {
        use Support::*;
        match (self, other) {
            (Interval { lo: a, hi: b }, Interval { lo: c, hi: d }) => Ok(Interval { lo: a.min(c), hi: b.max(d) }),
            (Lattice { lo: a, hi: b }, Lattice { lo: c, hi: d }) => Ok(Lattice { lo: a.min(c), hi: b.max(d) }),
            (Simplex { max_sum: a }, Simplex { max_sum: b }) => Ok(Simplex { max_sum: a.max(b) }),
            (a, b) => Err(Error::Config(format!("cannot merge supports {a:?} and {b:?}"))),
        }
    }
}

/// How to build an integration scheme for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSpec {
    /// Gauss-Legendre panels on the truncation interval.
    pub panels: usize,
    /// Points per panel.
    pub order: usize,
    /// Mass allowed outside the truncation region; `None` uses the model default.
    pub tail_mass: Option<f64>,
    /// Explicit truncation interval, overriding `tail_mass`.
    pub interval: Option<(f64, f64)>,
    /// Draw this many Monte-Carlo nodes instead of using quadrature.
    pub monte_carlo_nodes: Option<usize>,
    pub monte_carlo_seed: Option<u64>,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        SchemeSpec {
            panels: 24,
            order: 16,
            tail_mass: None,
            interval: None,
            monte_carlo_nodes: None,
            monte_carlo_seed: None,
        }
    }
}

/// Draws from a model, stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    data: Vec<f64>,
}

impl Sample {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Config(format!("sample of length {} does not have stride {dim}", data.len())));
        }
        Ok(Sample { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// A parametric or semiparametric family `p(x; theta, z)`.
///
/// Implementations provide pointwise evaluations; the free functions in this
/// module tabulate them on a scheme and center them.
pub trait DensityModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn theta_dim(&self) -> usize;
    fn nuisance_kind(&self) -> NuisanceKind;
    fn sample_dim(&self) -> usize {
        1
    }
    /// Rejects parameter values outside the model.
    fn validate(&self, theta: &[f64], z: &[f64]) -> Result<()>;
    fn log_density(&self, x: &[f64], theta: &[f64], z: &[f64]) -> f64;
    /// `d/dtheta log p` at `x`, if known in closed form.
    fn score_at(&self, _x: &[f64], _theta: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Number of nuisance dictionary elements at `z`.
    fn dictionary_len(&self, z: &[f64]) -> usize;
    /// Uncentered nuisance dictionary values at `x`.
    fn dictionary_at(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64>;
    /// Region holding all but `tail_mass` of the distribution.
    fn support(&self, theta: &[f64], z: &[f64], tail_mass: f64) -> Result<Support>;
    fn default_tail_mass(&self) -> f64 {
        1e-10
    }
    fn sample_into(&self, theta: &[f64], z: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
    /// Five nuisance values around `z`, including `z` itself in the middle.
    fn nuisance_grid(&self, z: &[f64]) -> Vec<Vec<f64>>;
    /// Default `(theta, z)` used when a caller gives none.
    fn default_point(&self) -> (Vec<f64>, Vec<f64>);
}

pub type ModelRef = Arc<dyn DensityModel>;

fn check_theta(model: &dyn DensityModel, theta: &[f64], z: &[f64]) -> Result<()> {
    if theta.len() != model.theta_dim() {
        return Err(Error::Config(format!(
            "model {} has theta of dimension {}, got {}",
            model.name(),
            model.theta_dim(),
            theta.len()
        )));
    }
    if theta.iter().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::Domain("parameters must be finite".into()));
    }
    model.validate(theta, z)
}

/// Tabulates `p(.; theta, z)` on `scheme` and checks its mass.
pub fn density(model: &dyn DensityModel, theta: &[f64], z: &[f64], scheme: &Arc<IntegrationScheme>) -> Result<Density> {
    density_with_tol(model, theta, z, scheme, Tolerances::default().mass)
}

pub fn density_with_tol(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    scheme: &Arc<IntegrationScheme>,
    tol_mass: f64,
) -> Result<Density> {
    check_theta(model, theta, z)?;
    if scheme.dim() != model.sample_dim() {
        return Err(Error::Config(format!(
            "scheme has dimension {} but model {} lives in dimension {}",
            scheme.dim(),
            model.name(),
            model.sample_dim()
        )));
    }
    let mut values = Vec::with_capacity(scheme.len());
    for (i, x) in scheme.nodes().enumerate() {
        let p = model.log_density(x, theta, z).exp();
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Domain(format!(
                "density of {} is {p} at node {i} (x = {x:?}); shrink the truncation or move the parameters",
                model.name()
            )));
        }
        values.push(p);
    }
    Density::new(scheme.clone(), values, tol_mass)
}

/// `d/dtheta log p(x)`, analytic when the model provides it and central
/// differences otherwise.
pub fn raw_score_at(model: &dyn DensityModel, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
    if let Some(s) = model.score_at(x, theta, z) {
        return s;
    }
    let mut out = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        let h = fd_step(theta[j]);
        t[j] = theta[j] + h;
        let up = model.log_density(x, &t, z);
        t[j] = theta[j] - h;
        let down = model.log_density(x, &t, z);
        t[j] = theta[j];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// The interest score components, centered, as vectors in L²(p).
pub fn score(model: &dyn DensityModel, theta: &[f64], z: &[f64], scheme: &Arc<IntegrationScheme>) -> Result<Vec<L2Vec>> {
    let d = density(model, theta, z, scheme)?;
    score_on(model, theta, z, &d)
}

/// Same as [`score`] for an already tabulated density.
pub fn score_on(model: &dyn DensityModel, theta: &[f64], z: &[f64], d: &Density) -> Result<Vec<L2Vec>> {
    let q = model.theta_dim();
    let mut cols = vec![Vec::with_capacity(d.len()); q];
    for x in d.scheme().nodes() {
        for (c, v) in cols.iter_mut().zip(raw_score_at(model, x, theta, z)) {
            c.push(v);
        }
    }
    cols.into_iter().map(|c| L2Vec::new(c, d.clone()).map(|v| center(&v))).collect()
}

/// Centered nuisance dictionary at `(theta, z)`.
pub fn nuisance_dictionary(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    scheme: &Arc<IntegrationScheme>,
) -> Result<Vec<L2Vec>> {
    let d = density(model, theta, z, scheme)?;
    dictionary_on(model, theta, z, &d)
}

pub fn dictionary_on(model: &dyn DensityModel, theta: &[f64], z: &[f64], d: &Density) -> Result<Vec<L2Vec>> {
    let k = model.dictionary_len(z);
    let mut cols = vec![Vec::with_capacity(d.len()); k];
    for x in d.scheme().nodes() {
        let v = model.dictionary_at(x, theta, z);
        if v.len() != k {
            return Err(Error::Model(format!(
                "model {} returned {} dictionary values, expected {k}",
                model.name(),
                v.len()
            )));
        }
        for (c, v) in cols.iter_mut().zip(v) {
            c.push(v);
        }
    }
    cols.into_iter().map(|c| L2Vec::new(c, d.clone()).map(|v| center(&v))).collect()
}

/// Orthonormal basis of the nuisance tangent span at `(theta, z)`.
pub fn nuisance_span_on(model: &dyn DensityModel, theta: &[f64], z: &[f64], d: &Density) -> Result<Subspace> {
    let dict = dictionary_on(model, theta, z, d)?;
    Subspace::orthonormal(d, &dict, 1e-10)
}

/// Seed of replication `rep` derived from a master seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, rep: u64) -> u64 {
    let mut x = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// `n` independent draws from `p(.; theta, z)`, reproducible from `seed`.
pub fn sample(model: &dyn DensityModel, theta: &[f64], z: &[f64], n: usize, seed: u64) -> Result<Sample> {
    check_theta(model, theta, z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = model.sample_into(theta, z, n, &mut rng)?;
    Sample::new(model.sample_dim(), data)
}

/// An integration scheme that covers every `(theta, z)` in `points`.
pub fn build_scheme(
    model: &dyn DensityModel,
    points: &[(Vec<f64>, Vec<f64>)],
    spec: &SchemeSpec,
) -> Result<Arc<IntegrationScheme>> {
    let Some(first) = points.first() else {
        return Err(Error::Config("no parameter points to build a scheme for".into()));
    };
    if let Some(n) = spec.monte_carlo_nodes {
        let seed = spec
            .monte_carlo_seed
            .ok_or_else(|| Error::Config("monte_carlo_seed is required for a Monte-Carlo scheme".into()))?;
        return monte_carlo_scheme(model, &first.0, &first.1, n, seed);
    }
    let tail = spec.tail_mass.unwrap_or_else(|| model.default_tail_mass());
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::Config(format!("tail_mass must lie in (0, 1), got {tail}")));
    }
    let mut support: Option<Support> = None;
    for (theta, z) in points {
        check_theta(model, theta, z)?;
        let s = model.support(theta, z, tail)?;
        support = Some(match support {
            None => s,
            Some(u) => u.union(s)?,
        });
    }
    match (support.expect("nonempty points"), spec.interval) {
        (Support::Interval { .. }, Some((lo, hi))) => IntegrationScheme::gauss_legendre(lo, hi, spec.panels, spec.order),
        (Support::Interval { lo, hi }, None) => IntegrationScheme::gauss_legendre(lo, hi, spec.panels, spec.order),
        (Support::Lattice { lo, hi }, _) => IntegrationScheme::lattice_range(lo, hi),
        (Support::Simplex { max_sum }, _) => IntegrationScheme::lattice_simplex(max_sum),
    }
}

/// Scheme at a single parameter point with default settings.
pub fn default_scheme(model: &dyn DensityModel, theta: &[f64], z: &[f64]) -> Result<Arc<IntegrationScheme>> {
    build_scheme(model, &[(theta.to_vec(), z.to_vec())], &SchemeSpec::default())
}

/// Monte-Carlo scheme whose nodes are `n` draws from `p(.; theta, z)`.
pub fn monte_carlo_scheme(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    n: usize,
    seed: u64,
) -> Result<Arc<IntegrationScheme>> {
    if n == 0 {
        return Err(Error::Config("a Monte-Carlo scheme needs at least one node".into()));
    }
    let s = sample(model, theta, z, n, seed)?;
    let q = s.iter().map(|x| model.log_density(x, theta, z).exp()).collect();
    IntegrationScheme::monte_carlo(s.dim(), s.as_flat().to_vec(), q, seed)
}

/// The three models shipped with the crate.
pub fn builtin_models() -> Vec<ModelRef> {
    vec![Arc::new(NormalMean), Arc::new(SymmetricLocation::default()), Arc::new(PoissonPair)]
}

/// Built-in and toy models by name.
pub fn model_by_name(name: &str) -> Option<ModelRef> {
    let all: Vec<ModelRef> = builtin_models()
        .into_iter()
        .chain([Arc::new(toys::ShiftingNuisance) as ModelRef, Arc::new(toys::ConfoundedShift) as ModelRef])
        .collect();
    all.into_iter().find(|m| m.name() == name)
}

/// Multiplicative grid `z * 2^{-1, -1/2, 0, 1/2, 1}` for positive scalars.
pub(crate) fn log_grid(z: &[f64]) -> Vec<Vec<f64>> {
    [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|e: &f64| z.iter().map(|v| v * 2f64.powf(*e)).collect()).collect()
}

/// Upper quantile of the standard normal for a two-sided tail of `tail_mass`.
pub(crate) fn normal_half_width(tail_mass: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(1.0 - tail_mass / 2.0)
}

#[cfg(test)]
mod tests;
