//! Functionals of a density, their gradients, and checks that a candidate
//! gradient really differentiates the functional along a tangent cone.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{loewner_min_eigenvalue, matrix_rows};
use crate::measure::{center, gram, inner_product, project, Density, L2Vec, Subspace};
use crate::model::{self, DensityModel};
use crate::tangent::default_t_grid;
use crate::{Error, Result, Tolerances};

type EvalFn = dyn Fn(&Density) -> Vec<f64> + Send + Sync;

/// A map from densities to `R^q`.
#[derive(Clone)]
pub struct Functional {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl Functional {
    pub fn new(name: impl Into<String>, dim: usize, eval: impl Fn(&Density) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Functional { name: name.into(), dim, eval: Arc::new(eval) }
    }

    /// `int x p` on the first coordinate.
    pub fn mean() -> Self {
        Self::moment(1)
    }

    /// `int x^k p` on the first coordinate.
    pub fn moment(k: i32) -> Self {
        Functional::new(format!("moment-{k}"), 1, move |d: &Density| {
            let v: Vec<f64> = d.scheme().nodes().map(|x| x[0].powi(k)).collect();
            vec![d.expect(&v)]
        })
    }

    /// `g(phi(p))` for a smooth `g: R^q -> R^m`.
    pub fn compose(&self, name: impl Into<String>, out_dim: usize, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        let inner = self.eval.clone();
        Functional::new(name, out_dim, move |d: &Density| g(&inner(d)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, d: &Density) -> Vec<f64> {
        (self.eval)(d)
    }
}

/// The gradient of `int x^k p`: `x^k - E[x^k]`.
pub fn moment_gradient(d: &Density, k: i32) -> Result<L2Vec> {
    Ok(center(&L2Vec::from_fn(d, |x| x[0].powi(k))?))
}

/// One row of the directional check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalResidual {
    pub component: usize,
    pub direction: usize,
    /// Extrapolated `d/dt phi(p (1 + t nu))` at zero.
    pub derivative: f64,
    /// `<gradient, nu>`.
    pub inner: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct GradientResult {
    pub directional: Vec<DirectionalResidual>,
    pub max_residual: f64,
    pub passes: bool,
    /// Projection of each gradient component onto the cone span.
    pub canonical: Vec<L2Vec>,
    pub cov_canonical: DMatrix<f64>,
    pub cov_gradient: DMatrix<f64>,
    /// Smallest eigenvalue of `cov_gradient - cov_canonical`.
    pub loewner_gap: f64,
}

/// Checks `d/dt phi(p_t) = <grad, nu>` along the linear path
/// `p_t = p (1 + t nu)` for every basis direction `nu` of `cone`.
///
/// Each direction is rescaled by its sup norm so the path stays positive; the
/// derivative is Richardson-extrapolated from the two smallest `t` of the grid.
pub fn verify_gradient(
    phi: &Functional,
    p: &Density,
    cone: &Subspace,
    grad: &[L2Vec],
    tol: &Tolerances,
) -> Result<GradientResult> {
    verify_gradient_on_grid(phi, p, cone, grad, &default_t_grid(), tol)
}

pub fn verify_gradient_on_grid(
    phi: &Functional,
    p: &Density,
    cone: &Subspace,
    grad: &[L2Vec],
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<GradientResult> {
    if grad.len() != phi.dim() {
        return Err(Error::Config(format!("functional has dimension {}, gradient has {} components", phi.dim(), grad.len())));
    }
    if !cone.density().same_as(p) {
        return Err(Error::Config("cone must live in L² of the base density".into()));
    }
    for (i, g) in grad.iter().enumerate() {
        if g.mean().abs() > tol.mass * (1.0 + g.norm()) {
            return Err(Error::Precondition(format!("gradient component {i} is not centered")));
        }
    }
    let mut ts: Vec<f64> = t_grid.to_vec();
    ts.sort_by(|a, b| a.total_cmp(b));
    let (t_small, t_large) = match ts.as_slice() {
        [a, b, ..] => (*a, *b),
        _ => return Err(Error::Config("need at least two t values".into())),
    };
    let base_value = phi.eval(p);
    let mut directional = Vec::new();
    for (k, nu) in cone.basis().iter().enumerate() {
        let scale = nu.sup_norm();
        if scale == 0.0 {
            continue;
        }
        // Sup norm 1 keeps 1 + t nu positive for every t < 1.
        let unit = nu.scale(1.0 / scale);
        let quotient = |t: f64| -> Result<Vec<f64>> {
            let v = p.values().iter().zip(unit.values()).map(|(p, n)| p * (1.0 + t * n)).collect();
            let pt = Density::unchecked(p.scheme().clone(), v)?;
            Ok(phi.eval(&pt).iter().zip(&base_value).map(|(a, b)| (a - b) / t).collect())
        };
        let ds = quotient(t_small)?;
        let dl = quotient(t_large)?;
        for (i, g) in grad.iter().enumerate() {
            let derivative = scale * (t_large * ds[i] - t_small * dl[i]) / (t_large - t_small);
            let inner = inner_product(g, nu)?;
            directional.push(DirectionalResidual { component: i, direction: k, derivative, inner, residual: (derivative - inner).abs() });
        }
    }
    let max_residual = directional.iter().map(|d| d.residual).fold(0.0, f64::max);
    let canonical = grad.iter().map(|g| project(g, cone)).collect::<Result<Vec<_>>>()?;
    let cov_canonical = gram(&canonical)?;
    let cov_gradient = gram(grad)?;
    let loewner_gap = loewner_min_eigenvalue(&cov_gradient, &cov_canonical);
    Ok(GradientResult {
        directional,
        max_residual,
        passes: max_residual < tol.grad,
        canonical,
        cov_canonical,
        cov_gradient,
        loewner_gap,
    })
}

/// Gradient of `g(phi)` from the gradient of `phi` and the Jacobian of `g`.
pub fn chain_rule(grad: &[L2Vec], jacobian: &DMatrix<f64>) -> Result<Vec<L2Vec>> {
    if jacobian.ncols() != grad.len() {
        return Err(Error::Config(format!("Jacobian has {} columns for {} gradient components", jacobian.ncols(), grad.len())));
    }
    matrix_rows(jacobian).iter().map(|row| L2Vec::combination(row, grad)).collect()
}

/// Result of the Monte-Carlo check that an influence function gives the
/// asymptotic covariance of the one-step estimator.
#[derive(Debug, Clone, Serialize)]
pub struct InfluenceCheck {
    pub n: usize,
    pub reps: usize,
    /// Empirical covariance of `sqrt(n) (theta_hat - theta_0)`, row-major.
    pub empirical: Vec<Vec<f64>>,
    /// `int IC IC^T p` by quadrature, row-major.
    pub target: Vec<Vec<f64>>,
    /// Frobenius norm of the difference over that of the target.
    pub relative_error: f64,
}

/// Draws `reps` samples of size `n`, forms `theta_0 + mean IC` and compares
/// the spread with `int IC IC^T p`.
#[allow(clippy::too_many_arguments)]
pub fn influence_to_estimator_check(
    ic: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    q: usize,
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<InfluenceCheck> {
    if n == 0 || reps < 2 {
        return Err(Error::Config("need n >= 1 and reps >= 2".into()));
    }
    let scheme = model::default_scheme(model, theta, z)?;
    let d = model::density(model, theta, z, &scheme)?;
    let mut cols = vec![Vec::with_capacity(d.len()); q];
    for x in scheme.nodes() {
        let v = ic(x);
        if v.len() != q {
            return Err(Error::Config(format!("influence function returned {} values, expected {q}", v.len())));
        }
        for (c, v) in cols.iter_mut().zip(v) {
            c.push(v);
        }
    }
    let vecs = cols.into_iter().map(|c| L2Vec::new(c, d.clone())).collect::<Result<Vec<_>>>()?;
    let target = gram(&vecs)?;
    let estimates: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(model::derive_seed(seed, r as u64));
            let xs = model.sample_into(theta, z, n, &mut rng)?;
            let mut acc = vec![0.0; q];
            for x in xs.chunks_exact(model.sample_dim()) {
                for (a, v) in acc.iter_mut().zip(ic(x)) {
                    *a += v;
                }
            }
            Ok(acc.iter().map(|a| a / (n as f64).sqrt()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let emp = crate::linalg::empirical_covariance(&estimates, None);
    let diff = (&emp - &target).norm();
    Ok(InfluenceCheck {
        n,
        reps,
        empirical: matrix_rows(&emp),
        target: matrix_rows(&target),
        relative_error: diff / target.norm(),
    })
}
