use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::density::Density;
use super::l2::{check_densities, cross_gram, gram, inner_product, L2Vec};
use crate::{Error, Result};

/// A finite-dimensional subspace of L²(p) given by a basis and its Gram matrix.
///
/// Projections solve against `gram + ridge * I`, which must be positive
/// definite. The empty subspace is allowed and projects everything to zero.
#[derive(Clone, Debug)]
pub struct Subspace {
    density: Density,
    basis: Vec<L2Vec>,
    gram: DMatrix<f64>,
    ridge: f64,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl Subspace {
    pub fn new(basis: Vec<L2Vec>, ridge: f64) -> Result<Self> {
        let density = basis
            .first()
            .ok_or_else(|| Error::Config("a subspace needs at least one basis vector; use Subspace::empty".into()))?
            .density()
            .clone();
        Self::with_density(density, basis, ridge)
    }

    pub fn empty(density: &Density) -> Self {
        Subspace {
            density: density.clone(),
            basis: Vec::new(),
            gram: DMatrix::zeros(0, 0),
            ridge: 0.0,
            factor: None,
        }
    }

    fn with_density(density: Density, basis: Vec<L2Vec>, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
        }
        for b in &basis {
            check_densities(&density, b.density())?;
        }
        if basis.is_empty() {
            return Ok(Self::empty(&density));
        }
        let g = gram(&basis)?;
        let k = basis.len();
        let regular = &g + DMatrix::identity(k, k) * ridge;
        let factor = Cholesky::new(regular).ok_or_else(|| {
            let trace = g.trace();
            Error::Numerical(format!(
                "Gram matrix of {k} basis vectors is not positive definite; \
                 retry with ridge > 0 (suggested {:e})",
                1e-10 * trace / k as f64
            ))
        })?;
        Ok(Subspace { density, basis, gram: g, ridge, factor: Some(factor) })
    }

    /// Orthonormal basis for the span of `vectors`, by modified Gram-Schmidt
    /// with one reorthogonalisation pass. A vector is dropped when what is left
    /// of it after removing earlier directions is below `rel_tol` times its
    /// original norm.
    pub fn orthonormal(density: &Density, vectors: &[L2Vec], rel_tol: f64) -> Result<Self> {
        let mut basis: Vec<L2Vec> = Vec::new();
        for v in vectors {
            check_densities(density, v.density())?;
            let original = v.norm();
            if original == 0.0 {
                continue;
            }
            let mut r = v.clone();
            for _ in 0..2 {
                for q in &basis {
                    let c = inner_product(q, &r)?;
                    r = r.axpy(-c, q)?;
                }
            }
            let n = r.norm();
            if n > rel_tol * original {
                basis.push(r.scale(1.0 / n));
            }
        }
        Self::with_density(density.clone(), basis, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[L2Vec] {
        &self.basis
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    /// `1e-10 * trace(G) / dim`, a ridge that rescues nearly dependent bases.
    pub fn suggested_ridge(&self) -> f64 {
        if self.dim() == 0 {
            0.0
        } else {
            1e-10 * self.gram.trace() / self.dim() as f64
        }
    }

    /// Condition number of the Gram matrix (largest over smallest eigenvalue).
    pub fn condition_number(&self) -> f64 {
        if self.dim() == 0 {
            return 1.0;
        }
        let e = self.gram.clone().symmetric_eigenvalues();
        let max = e.iter().cloned().fold(f64::MIN, f64::max);
        let min = e.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Coefficients `c` with `project(f) = sum_k c_k b_k`.
    pub fn coefficients(&self, f: &L2Vec) -> Result<DVector<f64>> {
        check_densities(&self.density, f.density())?;
        let Some(factor) = &self.factor else {
            return Ok(DVector::zeros(0));
        };
        let rhs = DVector::from_iterator(
            self.dim(),
            self.basis.iter().map(|b| inner_product(b, f)).collect::<Result<Vec<_>>>()?,
        );
        Ok(factor.solve(&rhs))
    }

    pub(crate) fn factor(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.factor.as_ref()
    }
}

/// Orthogonal projection of `f` onto `s`.
pub fn project(f: &L2Vec, s: &Subspace) -> Result<L2Vec> {
    let c = s.coefficients(f)?;
    if s.dim() == 0 {
        return Ok(L2Vec::zeros(f.density()));
    }
    L2Vec::combination(c.as_slice(), s.basis())
}

/// `f - project(f, s)`.
pub fn complement_project(f: &L2Vec, s: &Subspace) -> Result<L2Vec> {
    let p = project(f, s)?;
    f.sub(&p)
}

/// Cosines of the principal angles between two subspaces, largest first.
/// There are `min(dim s1, dim s2)` of them, each clamped to `[0, 1]`.
pub fn principal_angles(s1: &Subspace, s2: &Subspace) -> Result<Vec<f64>> {
    check_densities(s1.density(), s2.density())?;
    let (Some(f1), Some(f2)) = (s1.factor(), s2.factor()) else {
        return Ok(Vec::new());
    };
    let c = cross_gram(s1.basis(), s2.basis())?;
    // M = L1^{-1} C L2^{-T}
    let l1 = f1.l();
    let l2 = f2.l();
    let a = l1
        .solve_lower_triangular(&c)
        .ok_or_else(|| Error::Numerical("degenerate basis in principal angles".into()))?;
    let m = l2
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::Numerical("degenerate basis in principal angles".into()))?
        .transpose();
    let mut sv: Vec<f64> = m.singular_values().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.truncate(s1.dim().min(s2.dim()));
    Ok(sv)
}
