use std::fmt;
use std::sync::Arc;

use super::scheme::{IntegrationScheme, SchemeKind};
use crate::{Error, Result};

/// A density tabulated on the nodes of a scheme.
///
/// Cloning is cheap. `effective` holds `measure_i * p_i`, so an expectation is
/// a single dot product. On Monte-Carlo schemes the effective weights are
/// self-normalised, which keeps the total mass at 1 for densities other than
/// the one the nodes were drawn from.
#[derive(Clone)]
pub struct Density {
    scheme: Arc<IntegrationScheme>,
    values: Arc<[f64]>,
    effective: Arc<[f64]>,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Density")
            .field("scheme_id", &self.scheme.id())
            .field("nodes", &self.values.len())
            .field("mass", &self.mass())
            .finish()
    }
}

impl Density {
    /// Wraps tabulated values, checking finiteness, nonnegativity and that the
    /// total mass is within `tol_mass` of one.
    pub fn new(scheme: Arc<IntegrationScheme>, values: Vec<f64>, tol_mass: f64) -> Result<Self> {
        let d = Self::unchecked(scheme, values)?;
        let mass = d.scheme.integrate(&d.values);
        let m = if d.scheme.kind() == SchemeKind::MonteCarlo { 1.0 } else { mass };
        let err = (m - 1.0).abs();
        if err.is_nan() || err > tol_mass {
            return Err(Error::Precondition(format!(
                "density mass is {mass}, outside 1 +/- {tol_mass}"
            )));
        }
        Ok(d)
    }

    /// Same as [`Density::new`] without the mass check.
    pub fn unchecked(scheme: Arc<IntegrationScheme>, values: Vec<f64>) -> Result<Self> {
        if values.len() != scheme.len() {
            return Err(Error::Config(format!(
                "density has {} values but the scheme has {} nodes",
                values.len(),
                scheme.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!(
                "density value {} at node {i} ({:?}) is not a finite nonnegative number",
                values[i],
                scheme.node(i)
            )));
        }
        let mut effective: Vec<f64> =
            scheme.measure_weights().iter().zip(&values).map(|(w, p)| w * p).collect();
        if scheme.kind() == SchemeKind::MonteCarlo {
            let total: f64 = effective.iter().sum();
            if total <= 0.0 {
                return Err(Error::Domain("density vanishes on every Monte-Carlo node".into()));
            }
            effective.iter_mut().for_each(|e| *e /= total);
        }
        Ok(Density { scheme, values: values.into(), effective: effective.into() })
    }

    pub fn scheme(&self) -> &Arc<IntegrationScheme> {
        &self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `measure_i * p_i` at each node.
    pub fn effective_weights(&self) -> &[f64] {
        &self.effective
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.effective.iter().sum()
    }

    /// `E_p[f]` for values tabulated on the same nodes.
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.effective.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// True when both densities live on the same scheme with the same values.
    pub fn same_as(&self, other: &Density) -> bool {
        Arc::ptr_eq(&self.values, &other.values)
            || (self.scheme.id() == other.scheme.id() && self.values[..] == other.values[..])
    }

    /// Index of the first node where the density is not strictly positive.
    pub fn first_nonpositive(&self) -> Option<usize> {
        self.values.iter().position(|v| *v <= 0.0)
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        match self.first_nonpositive() {
            None => Ok(()),
            Some(i) => Err(Error::Domain(format!(
                "density is zero at node {i} ({:?})",
                self.scheme.node(i)
            ))),
        }
    }
}
