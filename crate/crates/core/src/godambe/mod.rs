//! Sensitivity, variability and Godambe information of estimating functions,
//! their split into an information part and an ancillary part, equivalence
//! up to a matrix factor, and optimality comparisons against `l_I`.

mod battery;
mod inference_fn;

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::efficiency::{information_score_at, AmbientSpec, InformationScore};
use crate::linalg::{inverse, min_eigenvalue, serialize_matrix, serialize_opt_matrix, spd_inverse, symmetrize};
use crate::measure::{gram, inner_product, project, Density, IntegrationScheme, L2Vec, Subspace};
use crate::model::{self, DensityModel, SchemeSpec};
use crate::{fd_step, Error, Result, Tolerances};

pub use battery::{battery_for, conditional_score, location_battery, poisson_pair_battery};
pub use inference_fn::InferenceFn;

/// Measured value of one regularity condition and whether it held.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Check {
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn below(value: f64, threshold: f64) -> Self {
        Check { passed: value.is_finite() && value < threshold, value, threshold }
    }

    fn above(value: f64, threshold: f64) -> Self {
        Check { passed: value.is_finite() && value > threshold, value, threshold }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Regularity {
    /// `max_i |E psi_i| / max(1, ||psi_i||)` with finite second moments.
    pub unbiased: Check,
    /// Relative gap between `d/dtheta E_theta[psi]` and
    /// `E[d psi/dtheta] + E[psi l^T]`, each computed numerically.
    pub interchange: Check,
    /// `|det S|` over the product of its row norms.
    pub nonsingular_sensitivity: Check,
    /// Smallest eigenvalue of `V` over `trace(V)/q`.
    pub positive_variability: Check,
}

impl Regularity {
    pub fn passed(&self) -> bool {
        self.unbiased.passed && self.interchange.passed && self.nonsingular_sensitivity.passed && self.positive_variability.passed
    }
}

pub const INTERCHANGE_TOL: f64 = 1e-4;

/// Records which regularity conditions hold at `(theta, z)`; only malformed
/// input is an error.
pub fn check_regularity(
    psi: &InferenceFn,
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    scheme: &Arc<IntegrationScheme>,
    tol: &Tolerances,
) -> Result<Regularity> {
    inference_fn::check_dims(psi, model)?;
    let d = model::density(model, theta, z, scheme)?;
    let tab = psi.tabulate(theta, z, &d)?;
    let s = psi.sensitivity(theta, z, &d)?;
    Ok(regularity_from(psi, model, theta, z, &d, &tab, &s, tol))
}

#[allow(clippy::too_many_arguments)]
fn regularity_from(
    psi: &InferenceFn,
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    d: &Density,
    tab: &[L2Vec],
    s: &DMatrix<f64>,
    tol: &Tolerances,
) -> Regularity {
    let bias = tab.iter().map(|v| v.mean().abs() / v.norm().max(1.0)).fold(0.0, f64::max);
    let finite = tab.iter().all(|v| v.norm().is_finite());
    let unbiased = Check::below(if finite { bias } else { f64::INFINITY }, tol.mass);

    let interchange = Check::below(interchange_gap(psi, model, theta, z, d, tab, s).unwrap_or(f64::INFINITY), INTERCHANGE_TOL);

    let q = s.nrows();
    let row_norms: f64 = (0..q).map(|i| s.row(i).norm()).product();
    let det = if s.is_square() { s.determinant().abs() } else { 0.0 };
    let nonsingular_sensitivity = Check::above(if row_norms > 0.0 { det / row_norms } else { 0.0 }, 1e-10);

    let v = gram(tab).unwrap_or_else(|_| DMatrix::zeros(q, q));
    let tr = v.trace();
    let ratio = if tr > 0.0 { min_eigenvalue(&v) / (tr / q as f64) } else { 0.0 };
    let positive_variability = Check::above(ratio, 1e-10);

    Regularity { unbiased, interchange, nonsingular_sensitivity, positive_variability }
}

fn interchange_gap(psi: &InferenceFn, model: &dyn DensityModel, theta: &[f64], z: &[f64], d: &Density, tab: &[L2Vec], s: &DMatrix<f64>) -> Result<f64> {
    let scheme = d.scheme();
    let raw: Vec<Vec<f64>> = scheme.nodes().map(|x| model::raw_score_at(model, x, theta, z)).collect();
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        let h = fd_step(theta[j]);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[j] += h;
        tm[j] -= h;
        let dp = model::density(model, &tp, z, scheme)?;
        let dm = model::density(model, &tm, z, scheme)?;
        let vp = psi.tabulate(&tp, z, &dp)?;
        let vm = psi.tabulate(&tm, z, &dm)?;
        let lj: Vec<f64> = raw.iter().map(|r| r[j]).collect();
        for i in 0..tab.len() {
            let lhs = (vp[i].mean() - vm[i].mean()) / (2.0 * h);
            let cross: f64 = d.expect(&tab[i].values().iter().zip(&lj).map(|(a, b)| a * b).collect::<Vec<_>>());
            let rhs = s[(i, j)] + cross;
            let scale = s[(i, j)].abs().max(cross.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// Split of `psi` into its projection on `span(l_I)` and the remainder.
pub fn decompose(psi: &[L2Vec], e_span: &Subspace) -> Result<(Vec<L2Vec>, Vec<L2Vec>)> {
    let mut info = Vec::with_capacity(psi.len());
    let mut anc = Vec::with_capacity(psi.len());
    for p in psi {
        let pi = project(p, e_span)?;
        anc.push(p.sub(&pi)?);
        info.push(pi);
    }
    Ok((info, anc))
}

#[derive(Debug, Clone, Serialize)]
pub struct GodambeReport {
    pub name: String,
    pub depends_on_nuisance: bool,
    #[serde(serialize_with = "serialize_matrix")]
    pub s: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub v: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j: DMatrix<f64>,
    /// `-<psi_I, l_I^T>`, defined even when the information part is not
    /// itself a regular estimating function.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub s_ext: Option<DMatrix<f64>>,
    /// Godambe information of the information part, built from `s_ext`.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub j_info_part: Option<DMatrix<f64>>,
    /// `K` with `psi_I = K l_I`.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub k: Option<DMatrix<f64>>,
    /// `max |s_ext - s|`; large values point at a coarse scheme or ambient.
    pub s_ext_gap: Option<f64>,
    /// `max |<psi_A, l_I>|`.
    pub ancillary_residual: Option<f64>,
    pub regularity: Regularity,
}

/// `S`, `V`, `J = S V^-1 S^T` and, given the information score at the same
/// `(theta, z)`, the extended quantities.
pub fn godambe_information(
    psi: &InferenceFn,
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    scheme: &Arc<IntegrationScheme>,
    info: Option<&InformationScore>,
    tol: &Tolerances,
) -> Result<GodambeReport> {
    inference_fn::check_dims(psi, model)?;
    let d = match info {
        Some(i) if Arc::ptr_eq(i.e_span.density().scheme(), scheme) || i.e_span.density().scheme().id() == scheme.id() => i.e_span.density().clone(),
        Some(_) => return Err(Error::Config("information score was computed on a different scheme".into())),
        None => model::density(model, theta, z, scheme)?,
    };
    let tab = psi.tabulate(theta, z, &d)?;
    let s = psi.sensitivity(theta, z, &d)?;
    let regularity = regularity_from(psi, model, theta, z, &d, &tab, &s, tol);
    let v = symmetrize(&gram(&tab)?);
    let v_inv = spd_inverse(&v, "variability").map_err(|_| {
        let ridge = 1e-10 * v.trace().abs().max(1.0);
        Error::Numerical(format!("variability of {} is singular; a ridge of about {ridge:.1e} would regularise it", psi.name()))
    })?;
    let j = symmetrize(&(&s * v_inv * s.transpose()));

    let (mut s_ext, mut j_info_part, mut k, mut s_ext_gap, mut ancillary_residual) = (None, None, None, None, None);
    if let Some(info) = info {
        let (pi, pa) = decompose(&tab, &info.e_span)?;
        let q = tab.len();
        let p = info.l_i.len();
        let se = DMatrix::from_fn(q, p, |a, b| -inner_product(&pi[a], &info.l_i[b]).unwrap_or(f64::NAN));
        let mut anc = 0.0f64;
        for a in &pa {
            for l in &info.l_i {
                anc = anc.max(inner_product(a, l)?.abs());
            }
        }
        ancillary_residual = Some(anc);
        s_ext_gap = Some((&se - &s).amax());
        if let Ok(vi_inv) = spd_inverse(&gram(&pi)?, "variability of the information part") {
            j_info_part = Some(symmetrize(&(&se * vi_inv * se.transpose())));
        }
        if let Ok(ji_inv) = inverse(&info.j_i, "information-score covariance") {
            k = Some(-(&se * ji_inv));
        }
        s_ext = Some(se);
    }
    Ok(GodambeReport { name: psi.name().to_string(), depends_on_nuisance: psi.depends_on_nuisance(), s, v, j, s_ext, j_info_part, k, s_ext_gap, ancillary_residual, regularity })
}

/// Least-squares fit `psi ~ K phi` at one point.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceFit {
    #[serde(serialize_with = "serialize_matrix")]
    pub k: DMatrix<f64>,
    /// `||psi - K phi|| / ||psi||` summed over components.
    pub residual: f64,
    pub full_rank: bool,
}

pub fn equivalence_fit(psi: &[L2Vec], phi: &[L2Vec]) -> Result<EquivalenceFit> {
    let c = crate::measure::cross_gram(psi, phi)?;
    let g = gram(phi)?;
    let Ok(g_inv) = spd_inverse(&g, "gram of phi") else {
        return Ok(EquivalenceFit { k: DMatrix::zeros(psi.len(), phi.len()), residual: 1.0, full_rank: false });
    };
    let k = c * g_inv;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, p) in psi.iter().enumerate() {
        let row: Vec<f64> = k.row(i).iter().cloned().collect();
        let fit = L2Vec::combination(&row, phi)?;
        num += p.sub(&fit)?.norm_sq();
        den += p.norm_sq();
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { 1.0 };
    let full_rank = if k.is_square() && k.nrows() > 0 {
        let sv = k.clone().singular_values();
        sv.min() > 1e-10 * sv.max()
    } else {
        false
    };
    Ok(EquivalenceFit { k, residual, full_rank })
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRow {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub fit: EquivalenceFit,
    pub equivalent: bool,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_psi: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_phi: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub psi: String,
    pub phi: String,
    pub equivalent: bool,
    pub rows: Vec<EquivalenceRow>,
}

/// `psi = K(theta, z) phi` with `K` of full rank at every grid point.
pub fn equivalence_check(
    psi: &InferenceFn,
    phi: &InferenceFn,
    model: &dyn DensityModel,
    theta_grid: &[Vec<f64>],
    z_grid: &[Vec<f64>],
    spec: &SchemeSpec,
    tol: &Tolerances,
) -> Result<EquivalenceReport> {
    if psi.q() != phi.q() {
        return Err(Error::Config(format!("{} and {} have different dimensions", psi.name(), phi.name())));
    }
    let pts: Vec<(Vec<f64>, Vec<f64>)> = theta_grid.iter().flat_map(|t| z_grid.iter().map(move |z| (t.clone(), z.clone()))).collect();
    let scheme = model::build_scheme(model, &pts, spec)?;
    let rows = pts
        .par_iter()
        .map(|(theta, z)| -> Result<EquivalenceRow> {
            let d = model::density(model, theta, z, &scheme)?;
            let a = psi.tabulate(theta, z, &d)?;
            let b = phi.tabulate(theta, z, &d)?;
            let fit = equivalence_fit(&a, &b)?;
            let j_psi = godambe_information(psi, model, theta, z, &scheme, None, tol)?.j;
            let j_phi = godambe_information(phi, model, theta, z, &scheme, None, tol)?.j;
            let equivalent = fit.residual < tol.equiv && fit.full_rank;
            Ok(EquivalenceRow { theta: theta.clone(), z: z.clone(), fit, equivalent, j_psi, j_phi })
        })
        .collect::<Result<Vec<_>>>()?;
    let equivalent = rows.iter().all(|r| r.equivalent);
    Ok(EquivalenceReport { psi: psi.name().to_string(), phi: phi.name().to_string(), equivalent, rows })
}

/// Outcome of comparing two information matrices in the Löwner order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Better,
    Worse,
    Equal,
    Incomparable,
}

/// Löwner comparison of `a` against `b`; differences within `1e-8` relative
/// to the larger trace count as zero.
pub fn loewner_compare(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Order {
    let eig = symmetrize(&(a - b)).symmetric_eigenvalues();
    let scale = a.trace().abs().max(b.trace().abs()).max(1.0);
    let lo = eig.min() / scale;
    let hi = eig.max() / scale;
    let eps = 1e-8;
    match (lo >= -eps, hi <= eps) {
        (true, true) => Order::Equal,
        (true, false) => Order::Better,
        (false, true) => Order::Worse,
        (false, false) => Order::Incomparable,
    }
}

/// Largest `|<psi, nu>| / (||psi|| ||nu||)` over the nuisance dictionaries of
/// the grid (or of `z` alone for functions that need `z`).
pub fn nuisance_orthogonality(psi: &InferenceFn, model: &dyn DensityModel, theta: &[f64], z: &[f64], z_grid: &[Vec<f64>], scheme: &Arc<IntegrationScheme>) -> Result<f64> {
    let own = [z.to_vec()];
    let grid: &[Vec<f64>] = if psi.depends_on_nuisance() { &own } else { z_grid };
    let mut worst = 0.0f64;
    for zs in grid {
        let d = model::density(model, theta, zs, scheme)?;
        let tab = psi.tabulate(theta, z, &d)?;
        for nu in model::dictionary_on(model, theta, zs, &d)? {
            for p in &tab {
                let den = p.norm() * nu.norm();
                if den > 0.0 {
                    worst = worst.max(inner_product(p, &nu)?.abs() / den);
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub name: String,
    pub regular: bool,
    pub depends_on_nuisance: bool,
    /// The information-ordering claim covers regular functions free of `z`.
    pub bound_applies: bool,
    pub godambe: GodambeReport,
    /// Smallest eigenvalue of `J(psi_I) - J(psi)`.
    pub info_part_gap: Option<f64>,
    /// `max |J(psi_I) - J_I|`.
    pub info_part_minus_bound: Option<f64>,
    /// Fit of `psi_I` against `l_I`.
    pub info_part_vs_information_score: EquivalenceFit,
    pub nuisance_orthogonality: f64,
    /// Number of ranked candidates that beat this one in the Löwner order;
    /// `None` for candidates outside the claim (irregular or needing `z`).
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub model: String,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub j_i: DMatrix<f64>,
    pub candidates: Vec<CandidateReport>,
    /// `comparisons[a][b]` is candidate `a` against candidate `b`.
    pub comparisons: Vec<Vec<Order>>,
    /// Ranked candidate names from best to worst; ties keep battery order.
    pub ranking: Vec<String>,
    pub unranked: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn optimality_battery(
    candidates: &[InferenceFn],
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    z_grid: &[Vec<f64>],
    scheme: &Arc<IntegrationScheme>,
    ambient: &AmbientSpec,
    tol: &Tolerances,
) -> Result<OptimalityReport> {
    let info = information_score_at(model, theta, z, z_grid, scheme, ambient)?;
    let mut reports = candidates
        .par_iter()
        .map(|psi| -> Result<CandidateReport> {
            let g = godambe_information(psi, model, theta, z, scheme, Some(&info), tol)?;
            let tab = psi.tabulate(theta, z, info.e_span.density())?;
            let (pi, _) = decompose(&tab, &info.e_span)?;
            let fit = equivalence_fit(&pi, &info.l_i)?;
            let regular = g.regularity.passed();
            Ok(CandidateReport {
                name: psi.name().to_string(),
                regular,
                depends_on_nuisance: psi.depends_on_nuisance(),
                bound_applies: regular && !psi.depends_on_nuisance(),
                info_part_gap: g.j_info_part.as_ref().map(|ji| min_eigenvalue(&symmetrize(&(ji - &g.j)))),
                info_part_minus_bound: g.j_info_part.as_ref().map(|ji| (ji - &info.j_i).amax()),
                info_part_vs_information_score: fit,
                nuisance_orthogonality: nuisance_orthogonality(psi, model, theta, z, z_grid, scheme)?,
                godambe: g,
                rank: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = reports.len();
    let comparisons: Vec<Vec<Order>> = (0..n).map(|a| (0..n).map(|b| loewner_compare(&reports[a].godambe.j, &reports[b].godambe.j)).collect()).collect();
    let eligible: Vec<usize> = (0..n).filter(|&i| reports[i].bound_applies).collect();
    for &a in &eligible {
        reports[a].rank = Some(eligible.iter().filter(|&&b| comparisons[b][a] == Order::Better).count());
    }
    let mut order = eligible.clone();
    order.sort_by_key(|&i| reports[i].rank);
    let ranking = order.iter().map(|&i| reports[i].name.clone()).collect();
    let unranked = (0..n).filter(|i| !eligible.contains(i)).map(|i| reports[i].name.clone()).collect();
    Ok(OptimalityReport { model: model.name().to_string(), theta: theta.to_vec(), z: z.to_vec(), j_i: info.j_i.clone(), candidates: reports, comparisons, ranking, unranked })
}
