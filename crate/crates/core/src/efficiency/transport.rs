//! Parallel transports between the L²₀ spaces of two densities on one scheme.

use crate::measure::{Density, L2Vec};
use crate::{Error, Result};

fn check_pair(a: &L2Vec, to: &Density) -> Result<()> {
    if a.density().scheme().id() != to.scheme().id() {
        return Err(Error::Config("transport needs both densities on the same scheme".into()));
    }
    Ok(())
}

/// Mixture transport: `a -> (p_from / p_to) a`.
///
/// Preserves inner products in the sense `<b, T a>_to = <b, a>_from`, and
/// takes centered functions to centered functions.
pub fn m_transport(a: &L2Vec, to: &Density) -> Result<L2Vec> {
    check_pair(a, to)?;
    if a.density().same_as(to) {
        return Ok(a.clone());
    }
    to.require_positive()?;
    let v = a
        .values()
        .iter()
        .zip(a.density().values())
        .zip(to.values())
        .map(|((a, pf), pt)| a * pf / pt)
        .collect();
    L2Vec::new(v, to.clone())
}

/// Exponential transport: `a -> a - E_to[a]`.
pub fn e_transport(a: &L2Vec, to: &Density) -> Result<L2Vec> {
    check_pair(a, to)?;
    let moved = a.with_density(to)?;
    Ok(crate::measure::center(&moved))
}

/// Largest violation of each transport identity over a batch of vectors.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct TransportResiduals {
    /// Destination means of both transports.
    pub centering: f64,
    /// `<a, Tm b>_to - <a, b>_from`.
    pub m_inner: f64,
    /// `<Te a, Tm b>_to - <a, b>_from`.
    pub duality: f64,
    /// Round trips and self-transport, as a sup norm.
    pub round_trip: f64,
}

impl TransportResiduals {
    pub fn max(&self) -> f64 {
        self.centering.max(self.m_inner).max(self.duality).max(self.round_trip)
    }
}

/// Shifts `g` by a constant and a multiple of `h` so that it has mean zero
/// under both densities.
pub fn doubly_center(g: &L2Vec, h: &L2Vec, other: &Density) -> Result<L2Vec> {
    let d = g.density();
    let (g1, h1) = (g.mean() / d.mass(), h.mean() / d.mass());
    let (g2, h2) = (other.expect(g.values()) / other.mass(), other.expect(h.values()) / other.mass());
    let det = h2 - h1;
    if det.abs() < 1e-12 {
        return Err(Error::Numerical("helper function has equal means under both densities".into()));
    }
    // g - c1 - c2 h with c1 + c2 h1 = g1 and c1 + c2 h2 = g2.
    let c2 = (g2 - g1) / det;
    let c1 = g1 - c2 * h1;
    Ok(g.axpy(-c2, h)?.map(|v| v - c1))
}

/// Checks every transport identity for all pairs drawn from `vectors`, which
/// must be centered under both `from` and `to`.
pub fn transport_residuals(vectors: &[L2Vec], to: &Density) -> Result<TransportResiduals> {
    let mut r = TransportResiduals::default();
    let sup = |a: &L2Vec, b: &L2Vec| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for a in vectors {
        let from = a.density();
        let am = m_transport(a, to)?;
        let ae = e_transport(a, to)?;
        r.centering = r.centering.max((am.mean() / to.mass()).abs()).max((ae.mean() / to.mass()).abs());
        let back_m = m_transport(&am, from)?;
        let back_e = e_transport(&ae, from)?;
        let self_m = m_transport(a, from)?;
        let self_e = e_transport(a, from)?;
        let scale = a.sup_norm().max(1.0);
        r.round_trip = r.round_trip.max((sup(&back_m, a).max(sup(&back_e, a)).max(sup(&self_m, a)).max(sup(&self_e, a))) / scale);
        for b in vectors {
            let bm = m_transport(b, to)?;
            let base = crate::measure::inner_product(a, b)?;
            let a_to = a.with_density(to)?;
            let scale = (a.norm() * b.norm()).max(1e-300);
            r.m_inner = r.m_inner.max((crate::measure::inner_product(&a_to, &bm)? - base).abs() / scale);
            r.duality = r.duality.max((crate::measure::inner_product(&ae, &bm)? - base).abs() / scale);
        }
    }
    Ok(r)
}
