//! Efficient scores, the information score and the space of functions that
//! stay orthogonal to every nuisance tangent across a grid of nuisance values.
//!
//! The efficient score at `(theta, z)` is the part of the score orthogonal to
//! the nuisance tangents at that `z` only. The information score projects the
//! score onto the smaller space `F_IA` of functions orthogonal to the
//! m-transported nuisance tangents of every `z*` in a grid, which is what an
//! estimating function that does not know `z` can reach.

mod transport;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::{loewner_min_eigenvalue, matrix_rows, min_eigenvalue, spd_inverse};
use crate::measure::{center, complement_project, gram, inner_product, principal_angles, project, Density, IntegrationScheme, L2Vec, Subspace};
use crate::model::hermite_orthonormal as hermite;
use crate::model::{self, DensityModel, SchemeSpec};
use crate::{Error, Result, Tolerances};

pub use transport::{doubly_center, e_transport, m_transport, transport_residuals, TransportResiduals};

/// Random functions centered under the densities at `z` and `z_star`, with
/// the transport identities checked between them.
pub fn random_transport_check(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    z_star: &[f64],
    scheme: &Arc<IntegrationScheme>,
    count: usize,
    seed: u64,
) -> Result<TransportResiduals> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let d = model::density(model, theta, z, scheme)?;
    let ds = model::density(model, theta, z_star, scheme)?;
    let spec = AmbientSpec { degree: 5, lattice_degree: 3, ..AmbientSpec::default() };
    let dirs = polynomial_directions(&d, &spec)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // Helper with the largest change of mean between the two densities.
    let shift = |v: &L2Vec| (v.mean() / d.mass() - ds.expect(v.values()) / ds.mass()).abs();
    let h = dirs.iter().max_by(|a, b| shift(a).total_cmp(&shift(b))).cloned().ok_or_else(|| Error::Config("no test directions".into()))?;
    let mut vecs = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs: Vec<f64> = dirs.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
        let g = L2Vec::combination(&coeffs, &dirs)?;
        vecs.push(doubly_center(&g, &h, &ds)?);
    }
    transport_residuals(&vecs, &ds)
}

/// Efficient score and information at one `(theta, z)`.
#[derive(Debug, Clone)]
pub struct EfficientScore {
    pub score: Vec<L2Vec>,
    pub l_e: Vec<L2Vec>,
    pub j_e: DMatrix<f64>,
    pub nuisance_span: Subspace,
    /// Smallest eigenvalue of `j_e`.
    pub min_eigenvalue: f64,
    /// `j_e` is numerically singular: the score lies in the nuisance span.
    pub singular: bool,
}

/// `l_E = l - proj(l | T_N)` and `J_E = <l_E, l_E^T>`.
pub fn efficient_score(model: &dyn DensityModel, theta: &[f64], z: &[f64], scheme: &Arc<IntegrationScheme>) -> Result<EfficientScore> {
    let d = model::density(model, theta, z, scheme)?;
    efficient_score_on(model, theta, z, &d)
}

pub fn efficient_score_on(model: &dyn DensityModel, theta: &[f64], z: &[f64], d: &Density) -> Result<EfficientScore> {
    let score = model::score_on(model, theta, z, d)?;
    let span = model::nuisance_span_on(model, theta, z, d)?;
    let l_e = score.iter().map(|l| complement_project(l, &span)).collect::<Result<Vec<_>>>()?;
    let j_e = gram(&l_e)?;
    let j_score = gram(&score)?;
    let min_eigenvalue = min_eigenvalue(&j_e);
    let singular = min_eigenvalue <= 1e-10 * j_score.trace().max(f64::MIN_POSITIVE) / j_e.nrows() as f64;
    Ok(EfficientScore { score, l_e, j_e, nuisance_span: span, min_eigenvalue, singular })
}

/// Recipe for the finite ambient space inside which `F_IA` is computed.
///
/// The ambient holds the score at each reference, the nuisance dictionary of
/// every grid point m-transported to each reference, and polynomials in the
/// standardised sample point (Hermite up to `degree` on the line, monomials of
/// total degree at most `lattice_degree` on the pair lattice).
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbientSpec {
    pub degree: usize,
    pub lattice_degree: usize,
    /// Extra nuisance values whose scores and transported dictionaries are
    /// included, so that one ambient serves several references.
    pub extra_references: Vec<Vec<f64>>,
    pub include_transported: bool,
}

impl Default for AmbientSpec {
    fn default() -> Self {
        AmbientSpec { degree: 8, lattice_degree: 4, extra_references: Vec::new(), include_transported: true }
    }
}

fn grid_with(z_grid: &[Vec<f64>], z: &[f64]) -> Vec<Vec<f64>> {
    let mut g = z_grid.to_vec();
    if !g.iter().any(|v| v.as_slice() == z) {
        g.push(z.to_vec());
    }
    g
}

/// Nuisance dictionary at each `z*` of the grid, m-transported to `to`.
pub fn transported_nuisance(model: &dyn DensityModel, theta: &[f64], z_grid: &[Vec<f64>], to: &Density) -> Result<Vec<L2Vec>> {
    let mut out = Vec::new();
    for zs in z_grid {
        let ds = model::density(model, theta, zs, to.scheme())?;
        for nu in model::dictionary_on(model, theta, zs, &ds)? {
            out.push(m_transport(&nu, to)?);
        }
    }
    Ok(out)
}

fn polynomial_directions(d: &Density, spec: &AmbientSpec) -> Result<Vec<L2Vec>> {
    let dim = d.scheme().dim();
    let coord = |j: usize| -> Result<(f64, f64)> {
        let x = L2Vec::from_fn(d, |x| x[j])?;
        let m = x.mean();
        let sd = center(&x).norm().max(1e-12);
        Ok((m, sd))
    };
    let mut out = Vec::new();
    if dim == 1 {
        let (m, sd) = coord(0)?;
        for k in 1..=spec.degree {
            out.push(L2Vec::from_fn(d, |x| hermite(k, (x[0] - m) / sd)[k])?);
        }
    } else {
        let (m1, s1) = coord(0)?;
        let (m2, s2) = coord(1)?;
        for total in 1..=spec.lattice_degree {
            for a in 0..=total {
                let b = total - a;
                out.push(L2Vec::from_fn(d, |x| ((x[0] - m1) / s1).powi(a as i32) * ((x[1] - m2) / s2).powi(b as i32))?);
            }
        }
    }
    Ok(out)
}

/// Builds the ambient space at reference `z_ref`; every vector is centered
/// under the reference density and the basis is orthonormal.
pub fn build_ambient(
    model: &dyn DensityModel,
    theta: &[f64],
    z_ref: &[f64],
    z_grid: &[Vec<f64>],
    scheme: &Arc<IntegrationScheme>,
    spec: &AmbientSpec,
) -> Result<Subspace> {
    let d = model::density(model, theta, z_ref, scheme)?;
    let grid = grid_with(z_grid, z_ref);
    let mut refs = vec![z_ref.to_vec()];
    refs.extend(spec.extra_references.iter().cloned());
    let mut raw: Vec<L2Vec> = Vec::new();
    for r in &refs {
        let dr = model::density(model, theta, r, scheme)?;
        for l in model::score_on(model, theta, r, &dr)? {
            raw.push(center(&l.with_density(&d)?));
        }
        if spec.include_transported {
            let grid_r = grid_with(&grid, r);
            for w in transported_nuisance(model, theta, &grid_r, &dr)? {
                raw.push(center(&w.with_density(&d)?));
            }
        }
    }
    for p in polynomial_directions(&d, spec)? {
        raw.push(center(&p));
    }
    Subspace::orthonormal(&d, &raw, 1e-9)
}

/// `F_IA` inside a finite ambient space.
#[derive(Debug, Clone)]
pub struct FiaSpace {
    pub space: Subspace,
    pub ambient_dim: usize,
    /// Number of transported nuisance vectors and the rank of their span.
    pub transported: usize,
    pub transported_rank: usize,
    /// Largest relative distance from the ambient of a transported nuisance
    /// vector or score component.
    pub max_ambient_residual: f64,
}

/// Relative ambient residual above which `fia_space` refuses to continue.
pub const AMBIENT_RESIDUAL_TOL: f64 = 1e-6;

/// Orthogonal complement, inside `ambient`, of the nuisance dictionaries of
/// every grid point m-transported to `(theta, z_ref)`.
///
/// The ambient may be built at another reference on the same scheme; its
/// vectors are then re-centered under the reference density first.
pub fn fia_space(
    model: &dyn DensityModel,
    theta: &[f64],
    z_ref: &[f64],
    z_grid: &[Vec<f64>],
    ambient: &Subspace,
) -> Result<FiaSpace> {
    let scheme = ambient.density().scheme().clone();
    let d = model::density(model, theta, z_ref, &scheme)?;
    let moved: Vec<L2Vec> = ambient.basis().iter().map(|b| e_transport(b, &d)).collect::<Result<_>>()?;
    let amb = Subspace::orthonormal(&d, &moved, 1e-9)?;
    let grid = grid_with(z_grid, z_ref);
    let w = transported_nuisance(model, theta, &grid, &d)?;

    let mut worst = 0.0f64;
    let mut offending = Vec::new();
    let score = model::score_on(model, theta, z_ref, &d)?;
    for (label, v) in w.iter().enumerate().map(|(i, v)| (format!("transported nuisance #{i}"), v)).chain(score.iter().enumerate().map(|(i, v)| (format!("score component {i}"), v))) {
        let n = v.norm();
        if n == 0.0 {
            continue;
        }
        let r = complement_project(v, &amb)?.norm() / n;
        worst = worst.max(r);
        if r > AMBIENT_RESIDUAL_TOL {
            offending.push(format!("{label} (residual {r:.2e})"));
        }
    }
    if !offending.is_empty() {
        return Err(Error::Config(format!("ambient space is too small; not contained: {}", offending.join(", "))));
    }

    let m = amb.dim();
    let k = w.len();
    let mut c = DMatrix::zeros(m, k);
    for (i, q) in amb.basis().iter().enumerate() {
        for (j, v) in w.iter().enumerate() {
            c[(i, j)] = inner_product(q, v)?;
        }
    }
    let (rank, u) = if k == 0 || m == 0 {
        (0, DMatrix::zeros(m, 0))
    } else {
        let svd = c.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-9 * smax && svd.singular_values[i] > 1e-14).collect();
        let ur = DMatrix::from_fn(m, keep.len(), |r, cc| u[(r, keep[cc])]);
        (keep.len(), ur)
    };
    let proj = DMatrix::identity(m, m) - &u * u.transpose();
    let eig = proj.symmetric_eigen();
    let mut basis = Vec::new();
    for idx in 0..m {
        if eig.eigenvalues[idx] > 0.5 {
            let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
            basis.push(L2Vec::combination(v.as_slice(), amb.basis())?);
        }
    }
    let space = if basis.is_empty() { Subspace::empty(&d) } else { Subspace::orthonormal(&d, &basis, 1e-9)? };
    Ok(FiaSpace { space, ambient_dim: m, transported: k, transported_rank: rank, max_ambient_residual: worst })
}

/// Information score `l_I = proj(l | F_IA)` with its covariance.
#[derive(Debug, Clone)]
pub struct InformationScore {
    pub l_i: Vec<L2Vec>,
    pub j_i: DMatrix<f64>,
    /// `span(l_I)`, which contains every regular estimating function's
    /// information-relevant part.
    pub e_span: Subspace,
    pub fia: FiaSpace,
}

pub fn information_score(model: &dyn DensityModel, theta: &[f64], z: &[f64], fia: FiaSpace) -> Result<InformationScore> {
    let d = fia.space.density().clone();
    let score = model::score_on(model, theta, z, &d)?;
    let l_i = score.iter().map(|l| project(l, &fia.space)).collect::<Result<Vec<_>>>()?;
    let j_i = gram(&l_i)?;
    let e_span = Subspace::orthonormal(&d, &l_i, 1e-9)?;
    Ok(InformationScore { l_i, j_i, e_span, fia })
}

/// Ambient, `F_IA` and information score at one reference with defaults.
pub fn information_score_at(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    z_grid: &[Vec<f64>],
    scheme: &Arc<IntegrationScheme>,
    spec: &AmbientSpec,
) -> Result<InformationScore> {
    let amb = build_ambient(model, theta, z, z_grid, scheme, spec)?;
    let fia = fia_space(model, theta, z, z_grid, &amb)?;
    information_score(model, theta, z, fia)
}

/// Residuals of the gradient built from the information score.
#[derive(Debug, Clone, Serialize)]
pub struct GradientBridge {
    /// `max |<phi, nu>|` over the normalised nuisance dictionary at `z`.
    pub nuisance_residual: f64,
    /// `max |<phi_i, l_j> - delta_ij|`.
    pub identity_residual: f64,
}

/// `phi = J_I^{-1} l_I` is orthogonal to the nuisance tangents and has
/// `<phi, l^T> = I`.
pub fn gradient_bridge(model: &dyn DensityModel, theta: &[f64], z: &[f64], info: &InformationScore) -> Result<(Vec<L2Vec>, GradientBridge)> {
    let d = info.fia.space.density().clone();
    let inv = spd_inverse(&info.j_i, "information-score covariance")?;
    let phi: Vec<L2Vec> = matrix_rows(&inv).iter().map(|row| L2Vec::combination(row, &info.l_i)).collect::<Result<_>>()?;
    let dict = model::dictionary_on(model, theta, z, &d)?;
    let mut nres = 0.0f64;
    for nu in &dict {
        let n = nu.norm();
        for p in &phi {
            nres = nres.max((inner_product(p, nu)? / n).abs());
        }
    }
    let l = model::score_on(model, theta, z, &d)?;
    let mut ires = 0.0f64;
    for (i, p) in phi.iter().enumerate() {
        for (j, lj) in l.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            ires = ires.max((inner_product(p, lj)? - target).abs());
        }
    }
    Ok((phi, GradientBridge { nuisance_residual: nres, identity_residual: ires }))
}

/// Attainability diagnostics at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct AttainabilityRow {
    pub z: Vec<f64>,
    /// Smallest principal-angle cosine between `span(l_E)` and `F_IA`.
    pub min_cosine: f64,
    pub j_e: Vec<Vec<f64>>,
    pub j_i: Vec<Vec<f64>>,
    /// Dimension of the ambient part of the nuisance complement and of `F_IA`.
    pub complement_dim: usize,
    pub fia_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Attainability {
    pub attainable: bool,
    pub rows: Vec<AttainabilityRow>,
    /// Index into `rows` of the grid point with the smallest cosine.
    pub worst: usize,
}

/// The efficient bound is attained by an estimating function free of `z`
/// exactly when the efficient score lies in `F_IA`; this checks that at every
/// grid point through principal angles.
pub fn attainability_check(
    model: &dyn DensityModel,
    theta: &[f64],
    z_grid: &[Vec<f64>],
    scheme: &Arc<IntegrationScheme>,
    spec: &AmbientSpec,
    tol: &Tolerances,
) -> Result<Attainability> {
    let mut rows = Vec::new();
    for z in z_grid {
        let eff = efficient_score(model, theta, z, scheme)?;
        let info = information_score_at(model, theta, z, z_grid, scheme, spec)?;
        let min_cosine = if eff.singular {
            0.0
        } else {
            let le = Subspace::orthonormal(info.fia.space.density(), &eff.l_e, 1e-9)?;
            let c = principal_angles(&le, &info.fia.space)?;
            if c.len() < le.dim() {
                0.0
            } else {
                c.iter().cloned().fold(1.0, f64::min)
            }
        };
        let complement_dim = info.fia.ambient_dim.saturating_sub(eff.nuisance_span.dim());
        rows.push(AttainabilityRow {
            z: z.clone(),
            min_cosine,
            j_e: matrix_rows(&eff.j_e),
            j_i: matrix_rows(&info.j_i),
            complement_dim,
            fia_dim: info.fia.space.dim(),
        });
    }
    let worst = rows.iter().enumerate().min_by(|a, b| a.1.min_cosine.total_cmp(&b.1.min_cosine)).map(|(i, _)| i).unwrap_or(0);
    let attainable = !rows.is_empty() && rows.iter().all(|r| r.min_cosine > 1.0 - tol.sub);
    Ok(Attainability { attainable, rows, worst })
}

/// Everything the efficiency subcommand reports.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub model: String,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub z_grid: Vec<Vec<f64>>,
    pub j_e: Vec<Vec<f64>>,
    pub j_i: Vec<Vec<f64>>,
    pub j_e_singular: bool,
    /// Smallest eigenvalue of `J_E - J_I`.
    pub loewner_gap: f64,
    pub l_e_norms: Vec<f64>,
    pub l_i_norms: Vec<f64>,
    /// `max_i ||l_I,i - l_E,i||`.
    pub l_i_minus_l_e: f64,
    /// Largest `|<l_E, nu>|` over the normalised nuisance dictionary.
    pub orthogonality_residual: f64,
    pub fia_dim: usize,
    pub ambient_dim: usize,
    pub bridge: Option<GradientBridge>,
    pub attainability: Attainability,
}

/// Scheme that covers `theta` with every nuisance value of the grid.
pub fn scheme_for_grid(model: &dyn DensityModel, theta: &[f64], z_grid: &[Vec<f64>], spec: &SchemeSpec) -> Result<Arc<IntegrationScheme>> {
    let pts: Vec<(Vec<f64>, Vec<f64>)> = z_grid.iter().map(|z| (theta.to_vec(), z.clone())).collect();
    model::build_scheme(model, &pts, spec)
}

pub fn efficiency_report(
    model: &dyn DensityModel,
    theta: &[f64],
    z: &[f64],
    z_grid: &[Vec<f64>],
    scheme: &Arc<IntegrationScheme>,
    spec: &AmbientSpec,
    tol: &Tolerances,
) -> Result<EfficiencyReport> {
    let eff = efficient_score(model, theta, z, scheme)?;
    let info = information_score_at(model, theta, z, z_grid, scheme, spec)?;
    let d = info.fia.space.density().clone();
    let dict = model::dictionary_on(model, theta, z, &d)?;
    let mut orth = 0.0f64;
    for le in &eff.l_e {
        for nu in &dict {
            orth = orth.max((inner_product(le, nu)? / nu.norm()).abs());
        }
    }
    let diff = eff.l_e.iter().zip(&info.l_i).map(|(a, b)| a.sub(b).map(|v| v.norm())).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let bridge = if min_eigenvalue(&info.j_i) > 1e-10 * info.j_i.trace().abs().max(f64::MIN_POSITIVE) {
        Some(gradient_bridge(model, theta, z, &info)?.1)
    } else {
        None
    };
    let attainability = attainability_check(model, theta, z_grid, scheme, spec, tol)?;
    Ok(EfficiencyReport {
        model: model.name().to_string(),
        theta: theta.to_vec(),
        z: z.to_vec(),
        z_grid: z_grid.to_vec(),
        j_e: matrix_rows(&eff.j_e),
        j_i: matrix_rows(&info.j_i),
        j_e_singular: eff.singular,
        loewner_gap: loewner_min_eigenvalue(&eff.j_e, &info.j_i),
        l_e_norms: eff.l_e.iter().map(|v| v.norm()).collect(),
        l_i_norms: info.l_i.iter().map(|v| v.norm()).collect(),
        l_i_minus_l_e: diff,
        orthogonality_residual: orth,
        fia_dim: info.fia.space.dim(),
        ambient_dim: info.fia.ambient_dim,
        bridge,
        attainability,
    })
}

#[cfg(test)]
mod tests;
