//! Differentiable paths through a density and the remainder diagnostics that
//! tell the different notions of differentiability apart.
//!
//! A path `p_t` with claimed tangent `nu` is written
//! `p_t = p + t p nu + t p r_t`. The remainder `r_t` is measured in L¹, L²,
//! sup norm and the two pieces of the weak criterion; the Hellinger remainder
//! `(sqrt(p_t) - sqrt(p)) / (t sqrt(p)) - nu / 2` is tracked alongside.

use std::sync::Arc;

use serde::Serialize;

use crate::measure::{Density, IntegrationScheme, L2Vec};
use crate::model::{self, DensityModel};
use crate::{Error, Result, Tolerances};

/// `2^-k` for `k = k_min..=k_max`, largest first.
pub fn dyadic_grid(k_min: u32, k_max: u32) -> Vec<f64> {
    (k_min..=k_max).map(|k| 2f64.powi(-(k as i32))).collect()
}

/// The grid used when a caller does not pass one: `2^-3 .. 2^-16`.
pub fn default_t_grid() -> Vec<f64> {
    dyadic_grid(3, 16)
}

/// A one-dimensional path of densities through `base`, tabulated at a grid of
/// `t` values, with the tangent it is claimed to have.
#[derive(Debug, Clone)]
pub struct PathSpec {
    base: Density,
    tangent: L2Vec,
    t_grid: Vec<f64>,
    densities: Vec<Density>,
}

fn check_tangent(base: &Density, tangent: &L2Vec, tol_mass: f64) -> Result<()> {
    if !tangent.density().same_as(base) {
        return Err(Error::Config("claimed tangent must live in L² of the base density".into()));
    }
    let m = tangent.mean();
    if m.abs() > tol_mass * (1.0 + tangent.norm()) {
        return Err(Error::Precondition(format!("claimed tangent is not centered: E[nu] = {m:e}")));
    }
    Ok(())
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 3 {
        return Err(Error::Config("a path needs at least three t values".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Config("t values must be positive".into()));
    }
    if t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("t grid must be strictly decreasing".into()));
    }
    Ok(())
}

impl PathSpec {
    /// Path from explicitly tabulated densities, one per `t`.
    pub fn new(base: Density, tangent: L2Vec, t_grid: Vec<f64>, densities: Vec<Density>) -> Result<Self> {
        check_grid(&t_grid)?;
        check_tangent(&base, &tangent, Tolerances::default().mass)?;
        if densities.len() != t_grid.len() {
            return Err(Error::Config("need one density per t value".into()));
        }
        for d in &densities {
            if d.scheme().id() != base.scheme().id() {
                return Err(Error::Config("path densities must share the base scheme".into()));
            }
        }
        Ok(PathSpec { base, tangent, t_grid, densities })
    }

    /// `p_t = p (1 + t nu)`, which has tangent `nu` and zero remainder.
    pub fn linear(base: &Density, tangent: &L2Vec, t_grid: &[f64]) -> Result<Self> {
        check_grid(t_grid)?;
        check_tangent(base, tangent, Tolerances::default().mass)?;
        let most_negative = tangent.values().iter().cloned().fold(0.0, f64::min);
        let max_feasible_t = if most_negative < 0.0 { -1.0 / most_negative } else { f64::INFINITY };
        if t_grid[0] >= max_feasible_t {
            return Err(Error::Path { max_feasible_t });
        }
        let densities = t_grid
            .iter()
            .map(|t| {
                let v = base.values().iter().zip(tangent.values()).map(|(p, n)| p * (1.0 + t * n)).collect();
                Density::unchecked(base.scheme().clone(), v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PathSpec { base: base.clone(), tangent: tangent.clone(), t_grid: t_grid.to_vec(), densities })
    }

    /// `p_t = p(.; theta + t * direction, z)` with the tangent `score . direction`.
    pub fn parametric(
        model: &dyn DensityModel,
        theta: &[f64],
        z: &[f64],
        direction: &[f64],
        scheme: &Arc<IntegrationScheme>,
        t_grid: &[f64],
    ) -> Result<Self> {
        check_grid(t_grid)?;
        if direction.len() != theta.len() {
            return Err(Error::Config("direction must have the dimension of theta".into()));
        }
        let base = model::density(model, theta, z, scheme)?;
        let l = model::score_on(model, theta, z, &base)?;
        let tangent = L2Vec::combination(direction, &l)?;
        let densities = t_grid
            .iter()
            .map(|t| {
                let th: Vec<f64> = theta.iter().zip(direction).map(|(a, d)| a + t * d).collect();
                model::density(model, &th, z, scheme)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(base, tangent, t_grid.to_vec(), densities)
    }

    /// Keeps the path but claims a different tangent.
    pub fn with_claimed_tangent(mut self, tangent: L2Vec) -> Result<Self> {
        check_tangent(&self.base, &tangent, Tolerances::default().mass)?;
        self.tangent = tangent;
        Ok(self)
    }

    pub fn base(&self) -> &Density {
        &self.base
    }

    pub fn tangent(&self) -> &L2Vec {
        &self.tangent
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn densities(&self) -> &[Density] {
        &self.densities
    }

    /// Remainder `r_t` at the `k`-th grid value.
    pub fn remainder(&self, k: usize) -> Result<L2Vec> {
        let t = self.t_grid[k];
        let v = self.densities[k]
            .values()
            .iter()
            .zip(self.base.values())
            .zip(self.tangent.values())
            .map(|((pt, p), nu)| (pt - p) / (t * p) - nu)
            .collect();
        L2Vec::new(v, self.base.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converging,
    NotConverging,
    Inconclusive,
}

/// Remainder norms at one value of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRow {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
    pub weak1: f64,
    pub weak2: f64,
    pub hellinger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub sup: Verdict,
    pub l2: Verdict,
    pub weak: Verdict,
    pub l1: Verdict,
    pub hellinger: Verdict,
}

/// Log-log slopes of the remainder norms against `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slopes {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub sup: Option<f64>,
    pub weak2: Option<f64>,
    pub hellinger: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDiagnostic {
    pub rows: Vec<PathRow>,
    pub verdicts: Verdicts,
    pub slopes: Slopes,
    /// Largest `|r_t|` over nodes of positive density at the smallest `t`.
    pub essential_sup: f64,
    /// Verdicts raised to converging because a stronger notion converged.
    pub promoted: Vec<String>,
    /// Worst relative error of `p + t p nu + t p r_t` against `p_t`.
    pub identity_error: f64,
}

/// Tabulates the remainder norms over the grid and classifies convergence in
/// each sense from the last three grid values.
pub fn diagnose_path(path: &PathSpec, tol: &Tolerances) -> Result<PathDiagnostic> {
    path.base.require_positive()?;
    let eff = path.base.effective_weights();
    let mut rows = Vec::with_capacity(path.t_grid.len());
    let mut identity_error: f64 = 0.0;
    for (k, &t) in path.t_grid.iter().enumerate() {
        let r = path.remainder(k)?;
        let (mut l1, mut l2, mut sup, mut weak1, mut weak2, mut hel) = (0.0, 0.0, 0.0f64, 0.0, 0.0, 0.0);
        let pt = path.densities[k].values();
        for i in 0..r.values().len() {
            let ri = r.values()[i];
            let a = ri.abs();
            let w = eff[i];
            l1 += w * a;
            l2 += w * ri * ri;
            sup = sup.max(a);
            if t * a > 1.0 {
                weak1 += w * a;
            } else {
                weak2 += w * ri * ri;
            }
            let p = path.base.values()[i];
            let nu = path.tangent.values()[i];
            let s = ((pt[i] / p).sqrt() - 1.0) / t - 0.5 * nu;
            hel += w * s * s;
            let rebuilt = p + t * p * nu + t * p * ri;
            let scale = pt[i].abs().max(p);
            identity_error = identity_error.max((rebuilt - pt[i]).abs() / scale);
        }
        rows.push(PathRow { t, l1, l2: l2.sqrt(), sup, weak1: weak1 / t, weak2, hellinger: hel.sqrt() });
    }

    let col = |f: fn(&PathRow) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let judge = |v: Vec<f64>| classify(&v, tol.path);
    let sup = judge(col(|r| r.sup));
    let l2 = judge(col(|r| r.l2));
    let l1 = judge(col(|r| r.l1));
    let w1 = judge(col(|r| r.weak1));
    let w2 = judge(col(|r| r.weak2));
    let weak = match (w1, w2) {
        (Verdict::Converging, Verdict::Converging) => Verdict::Converging,
        (Verdict::NotConverging, _) | (_, Verdict::NotConverging) => Verdict::NotConverging,
        _ => Verdict::Inconclusive,
    };
    let hellinger = judge(col(|r| r.hellinger));

    // Sup norm implies L², which implies the weak criterion, which implies L¹.
    let mut chain = [sup, l2, weak, l1];
    let names = ["l2", "weak", "l1"];
    let mut promoted = Vec::new();
    for i in 0..3 {
        if chain[i] == Verdict::Converging && chain[i + 1] != Verdict::Converging {
            chain[i + 1] = Verdict::Converging;
            promoted.push(names[i].to_string());
        }
    }
    let verdicts = Verdicts { sup: chain[0], l2: chain[1], weak: chain[2], l1: chain[3], hellinger };

    let ts = col(|r| r.t);
    let slopes = Slopes {
        l1: loglog_slope(&ts, &col(|r| r.l1)),
        l2: loglog_slope(&ts, &col(|r| r.l2)),
        sup: loglog_slope(&ts, &col(|r| r.sup)),
        weak2: loglog_slope(&ts, &col(|r| r.weak2)),
        hellinger: loglog_slope(&ts, &col(|r| r.hellinger)),
    };
    let essential_sup = rows.last().map(|r| r.sup).unwrap_or(0.0);
    Ok(PathDiagnostic { rows, verdicts, slopes, essential_sup, promoted, identity_error })
}

/// Converging: the last three values never increase (values below a noise
/// floor of `1e-6 * tol` count as zero) and the last is below `tol`.
/// Not converging: the last value is at least `tol` and less than halved over
/// the last two grid steps. Anything else is inconclusive.
pub fn classify(values: &[f64], tol: f64) -> Verdict {
    let n = values.len();
    if n < 3 {
        return Verdict::Inconclusive;
    }
    let (a, b, c) = (values[n - 3], values[n - 2], values[n - 1]);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Verdict::NotConverging;
    }
    let floor = 1e-6 * tol;
    let step_ok = |prev: f64, next: f64| next <= floor || next <= prev * (1.0 + 1e-9);
    if c < tol && step_ok(a, b) && step_ok(b, c) {
        Verdict::Converging
    } else if c >= tol && c > 0.5 * a {
        Verdict::NotConverging
    } else {
        Verdict::Inconclusive
    }
}

/// Least-squares slope of `log y` on `log t` over points with `y > 0`;
/// `None` with fewer than three such points.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, y)| **y > 1e-300).map(|(t, y)| (t.ln(), y.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
