use std::fmt;
use std::sync::Arc;

use crate::measure::{Density, L2Vec};
use crate::model::{self, DensityModel, ModelRef};
use crate::{Error, Result};

type EvalFn = dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// An estimating function `psi(x; theta)`, or `psi(x; theta, z)` for a
/// quasi-inference function that needs the nuisance value.
#[derive(Clone)]
pub struct InferenceFn {
    name: String,
    q: usize,
    depends_on_nuisance: bool,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for InferenceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InferenceFn").field("name", &self.name).field("q", &self.q).field("depends_on_nuisance", &self.depends_on_nuisance).finish()
    }
}

impl InferenceFn {
    /// A function of `(x, theta)` only.
    pub fn new(name: impl Into<String>, q: usize, f: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InferenceFn { name: name.into(), q, depends_on_nuisance: false, eval: Arc::new(move |x, t, _| f(x, t)) }
    }

    /// A function that also reads the nuisance value.
    pub fn with_nuisance(name: impl Into<String>, q: usize, f: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        InferenceFn { name: name.into(), q, depends_on_nuisance: true, eval: Arc::new(f) }
    }

    /// Scalar shorthand for `new`.
    pub fn scalar(name: impl Into<String>, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, 1, move |x, t| vec![f(x, t[0])])
    }

    /// The model's own score, which needs `z`.
    pub fn score_of(model: ModelRef) -> Self {
        let name = format!("{} score", model.name());
        let q = model.theta_dim();
        Self::with_nuisance(name, q, move |x, t, z| model::raw_score_at(model.as_ref(), x, t, z))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn depends_on_nuisance(&self) -> bool {
        self.depends_on_nuisance
    }

    pub fn eval(&self, x: &[f64], theta: &[f64], z: &[f64]) -> Vec<f64> {
        (self.eval)(x, theta, z)
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        InferenceFn { name: name.into(), ..self.clone() }
    }

    /// `c psi`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        InferenceFn {
            name: format!("{c}*{}", self.name),
            q: self.q,
            depends_on_nuisance: self.depends_on_nuisance,
            eval: Arc::new(move |x, t, z| inner(x, t, z).into_iter().map(|v| c * v).collect()),
        }
    }

    /// Values at every node of `d`'s scheme, one vector per component.
    pub fn tabulate(&self, theta: &[f64], z: &[f64], d: &Density) -> Result<Vec<L2Vec>> {
        let n = d.len();
        let mut cols = vec![Vec::with_capacity(n); self.q];
        for (i, x) in d.scheme().nodes().enumerate() {
            let v = self.eval(x, theta, z);
            if v.len() != self.q {
                return Err(Error::Config(format!("{} returned {} values, expected {}", self.name, v.len(), self.q)));
            }
            for (c, val) in cols.iter_mut().zip(v) {
                if !val.is_finite() {
                    return Err(Error::Domain(format!("{} is not finite at node {i} (x = {x:?})", self.name)));
                }
                c.push(val);
            }
        }
        cols.into_iter().map(|c| L2Vec::new(c, d.clone())).collect()
    }

    /// `E[d psi_i / d theta_j]` by central differences at each node.
    pub fn sensitivity(&self, theta: &[f64], z: &[f64], d: &Density) -> Result<nalgebra::DMatrix<f64>> {
        let q = self.q;
        let p = theta.len();
        let mut s = nalgebra::DMatrix::zeros(q, p);
        for j in 0..p {
            let h = crate::fd_step(theta[j]);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += h;
            tm[j] -= h;
            let plus = self.tabulate(&tp, z, d)?;
            let minus = self.tabulate(&tm, z, d)?;
            for i in 0..q {
                s[(i, j)] = (plus[i].mean() - minus[i].mean()) / (2.0 * h);
            }
        }
        Ok(s)
    }
}

/// Check that the function is usable with the model at all.
pub(crate) fn check_dims(psi: &InferenceFn, model: &dyn DensityModel) -> Result<()> {
    if psi.q() != model.theta_dim() {
        return Err(Error::Config(format!("{} has {} components but {} has theta of dimension {}", psi.name(), psi.q(), model.name(), model.theta_dim())));
    }
    Ok(())
}
