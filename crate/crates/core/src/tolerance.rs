use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every check in the crate.
///
/// The defaults are the values the acceptance suite is pinned to. All fields
/// must be strictly positive except `psd`, which is the (negative) floor
/// allowed for the smallest eigenvalue in a Löwner comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Total mass and centering.
    pub mass: f64,
    /// Relative orthogonality of projection residuals.
    pub orth: f64,
    /// Final remainder norm for a converging path.
    pub path: f64,
    /// Directional-derivative residual for gradients.
    pub grad: f64,
    /// Distance of principal-angle cosines from 1.
    pub sub: f64,
    /// Relative residual in equivalence tests.
    pub equiv: f64,
    /// Root-finding residual per coordinate.
    pub root: f64,
    /// Smallest eigenvalue accepted as nonnegative.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mass: 1e-6,
            orth: 1e-8,
            path: 1e-4,
            grad: 1e-5,
            sub: 1e-6,
            equiv: 1e-6,
            root: 1e-8,
            psd: -1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> crate::Result<()> {
        let named = [
            ("mass", self.mass),
            ("orth", self.orth),
            ("path", self.path),
            ("grad", self.grad),
            ("sub", self.sub),
            ("equiv", self.equiv),
            ("root", self.root),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(crate::Error::Config(format!(
                    "tolerance `{name}` must be positive, got {v}"
                )));
            }
        }
        if !(self.psd.is_finite() && self.psd <= 0.0) {
            return Err(crate::Error::Config(format!(
                "tolerance `psd` must be nonpositive, got {}",
                self.psd
            )));
        }
        Ok(())
    }
}

/// Central-difference step for a parameter value: `max(1, |v|) * eps^(1/3)`.
pub fn fd_step(v: f64) -> f64 {
    v.abs().max(1.0) * f64::EPSILON.cbrt()
}
