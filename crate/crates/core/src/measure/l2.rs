use super::density::Density;
use crate::{Error, Result};

/// An element of L²(p): function values at the nodes plus the density that
/// defines the inner product.
#[derive(Clone, Debug)]
pub struct L2Vec {
    values: Vec<f64>,
    density: Density,
}

impl L2Vec {
    pub fn new(values: Vec<f64>, density: Density) -> Result<Self> {
        if values.len() != density.len() {
            return Err(Error::Config(format!(
                "vector has {} values but the density has {} nodes",
                values.len(),
                density.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at node {i} ({:?})",
                density.scheme().node(i)
            )));
        }
        Ok(L2Vec { values, density })
    }

    /// Tabulates `f` at every node of the density's scheme.
    pub fn from_fn(density: &Density, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = density.scheme().nodes().map(f).collect();
        Self::new(values, density.clone())
    }

    pub fn zeros(density: &Density) -> Self {
        L2Vec { values: vec![0.0; density.len()], density: density.clone() }
    }

    pub fn constant(density: &Density, c: f64) -> Self {
        L2Vec { values: vec![c; density.len()], density: density.clone() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    /// `E_p[f]`.
    pub fn mean(&self) -> f64 {
        self.density.expect(&self.values)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.density
            .effective_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum()
    }

    /// Largest absolute value over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> L2Vec {
        L2Vec { values: self.values.iter().map(|v| c * v).collect(), density: self.density.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> L2Vec {
        L2Vec { values: self.values.iter().map(|v| f(*v)).collect(), density: self.density.clone() }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &L2Vec) -> Result<L2Vec> {
        check_same(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(L2Vec { values, density: self.density.clone() })
    }

    pub fn add(&self, other: &L2Vec) -> Result<L2Vec> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &L2Vec) -> Result<L2Vec> {
        self.axpy(-1.0, other)
    }

    /// Pointwise product, useful for building new functions from old ones.
    pub fn mul(&self, other: &L2Vec) -> Result<L2Vec> {
        check_same(self, other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Ok(L2Vec { values, density: self.density.clone() })
    }

    /// `sum_k coeffs[k] * vecs[k]`; `vecs` must be nonempty.
    pub fn combination(coeffs: &[f64], vecs: &[L2Vec]) -> Result<L2Vec> {
        let first = vecs
            .first()
            .ok_or_else(|| Error::Config("linear combination of no vectors".into()))?;
        if coeffs.len() != vecs.len() {
            return Err(Error::Config("coefficient count does not match vector count".into()));
        }
        let mut out = vec![0.0; first.values.len()];
        for (c, v) in coeffs.iter().zip(vecs) {
            check_same(first, v)?;
            for (o, x) in out.iter_mut().zip(&v.values) {
                *o += c * x;
            }
        }
        Ok(L2Vec { values: out, density: first.density.clone() })
    }

    /// The same function values read under another density on the same scheme.
    pub fn with_density(&self, density: &Density) -> Result<L2Vec> {
        if density.scheme().id() != self.density.scheme().id() {
            return Err(Error::Config("cannot move a vector to a different scheme".into()));
        }
        Ok(L2Vec { values: self.values.clone(), density: density.clone() })
    }
}

pub(crate) fn check_same(a: &L2Vec, b: &L2Vec) -> Result<()> {
    check_densities(&a.density, &b.density)
}

pub(crate) fn check_densities(a: &Density, b: &Density) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else if a.scheme().id() != b.scheme().id() {
        Err(Error::Config(format!(
            "scheme mismatch: {:016x} vs {:016x}",
            a.scheme().id(),
            b.scheme().id()
        )))
    } else {
        Err(Error::Config("vectors live in L² of different densities".into()))
    }
}

/// `<f, g> = sum_i w_i f(x_i) g(x_i) p(x_i)`.
pub fn inner_product(f: &L2Vec, g: &L2Vec) -> Result<f64> {
    check_same(f, g)?;
    Ok(f.density
        .effective_weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// `f - E_p[f]`, normalised by the tabulated mass so the result integrates to
/// zero up to rounding.
pub fn center(f: &L2Vec) -> L2Vec {
    let m = f.mean() / f.density.mass();
    f.map(|v| v - m)
}

/// Matrix of inner products `<a_i, b_j>`.
pub fn cross_gram(a: &[L2Vec], b: &[L2Vec]) -> Result<nalgebra::DMatrix<f64>> {
    let mut g = nalgebra::DMatrix::zeros(a.len(), b.len());
    for (i, u) in a.iter().enumerate() {
        for (j, v) in b.iter().enumerate() {
            g[(i, j)] = inner_product(u, v)?;
        }
    }
    Ok(g)
}

/// Symmetric Gram matrix `<a_i, a_j>`.
pub fn gram(a: &[L2Vec]) -> Result<nalgebra::DMatrix<f64>> {
    let k = a.len();
    let mut g = nalgebra::DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = inner_product(&a[i], &a[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
