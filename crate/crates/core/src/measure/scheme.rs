use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use super::quadrature::composite_gauss_legendre;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    GaussLegendre,
    Lattice,
    MonteCarlo,
}

/// A fixed node set with weights against which every function is tabulated.
///
/// Nodes are stored flat with stride `dim` (1 for the real line, 2 for the
/// lattice pair model). For Monte-Carlo schemes the weights are `1/N` and the
/// draw density at each node is kept so that integrals against other
/// densities can be reweighted.
#[derive(Debug)]
pub struct IntegrationScheme {
    id: u64,
    kind: SchemeKind,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    proposal: Option<Vec<f64>>,
    measure: Vec<f64>,
    seed: Option<u64>,
    truncation: Option<(f64, f64)>,
}

impl IntegrationScheme {
    fn build(
        kind: SchemeKind,
        dim: usize,
        nodes: Vec<f64>,
        weights: Vec<f64>,
        proposal: Option<Vec<f64>>,
        seed: Option<u64>,
        truncation: Option<(f64, f64)>,
    ) -> Result<Arc<Self>> {
        if dim == 0 || !nodes.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "node array of length {} does not match dimension {dim}",
                nodes.len()
            )));
        }
        let n = nodes.len() / dim;
        if n == 0 || weights.len() != n {
            return Err(Error::Config(format!(
                "scheme needs one weight per node ({} nodes, {} weights)",
                n,
                weights.len()
            )));
        }
        if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::Config("scheme nodes and weights must be finite".into()));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::Config("scheme weights must be positive".into()));
        }
        let measure = match &proposal {
            Some(q) => {
                if q.len() != n || q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config(
                        "Monte-Carlo draw density must be positive at every node".into(),
                    ));
                }
                weights.iter().zip(q).map(|(w, q)| w / q).collect()
            }
            None => weights.clone(),
        };
        let mut h = std::collections::hash_map::DefaultHasher::new();
        kind.hash(&mut h);
        dim.hash(&mut h);
        seed.hash(&mut h);
        for v in nodes.iter().chain(&weights).chain(proposal.iter().flatten()) {
            v.to_bits().hash(&mut h);
        }
        Ok(Arc::new(IntegrationScheme {
            id: h.finish(),
            kind,
            dim,
            nodes,
            weights,
            proposal,
            measure,
            seed,
            truncation,
        }))
    }

    /// Composite Gauss-Legendre rule on `[lo, hi]`.
    pub fn gauss_legendre(lo: f64, hi: f64, panels: usize, order: usize) -> Result<Arc<Self>> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid truncation interval [{lo}, {hi}]")));
        }
        if panels == 0 || order == 0 {
            return Err(Error::Config("panels and order must be positive".into()));
        }
        let (x, w) = composite_gauss_legendre(lo, hi, panels, order);
        Self::build(SchemeKind::GaussLegendre, 1, x, w, None, None, Some((lo, hi)))
    }

    /// Counting measure on the given lattice points (flat, stride `dim`).
    pub fn lattice(dim: usize, nodes: Vec<f64>) -> Result<Arc<Self>> {
        let n = nodes.len().checked_div(dim).unwrap_or(0);
        Self::build(SchemeKind::Lattice, dim, nodes, vec![1.0; n], None, None, None)
    }

    /// Integers `lo..=hi`.
    pub fn lattice_range(lo: i64, hi: i64) -> Result<Arc<Self>> {
        if hi < lo {
            return Err(Error::Config(format!("empty lattice range {lo}..={hi}")));
        }
        Self::lattice(1, (lo..=hi).map(|k| k as f64).collect())
    }

    /// Pairs of nonnegative integers with `x1 + x2 <= max_sum`, ordered by
    /// the sum and then by `x2`, so that each fiber of the sum is contiguous.
    pub fn lattice_simplex(max_sum: u64) -> Result<Arc<Self>> {
        let mut nodes = Vec::new();
        for t in 0..=max_sum {
            for x2 in 0..=t {
                nodes.push((t - x2) as f64);
                nodes.push(x2 as f64);
            }
        }
        Self::lattice(2, nodes)
    }

    /// Monte-Carlo scheme over `nodes` drawn from `draw_density` with `seed`.
    pub fn monte_carlo(dim: usize, nodes: Vec<f64>, draw_density: Vec<f64>, seed: u64) -> Result<Arc<Self>> {
        let n = nodes.len().checked_div(dim).unwrap_or(0);
        let w = vec![1.0 / n.max(1) as f64; n];
        Self::build(SchemeKind::MonteCarlo, dim, nodes, w, Some(draw_density), Some(seed), None)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights against Lebesgue or counting measure. Equal to `weights` except
    /// for Monte-Carlo schemes, where each weight is divided by the draw density.
    pub fn measure_weights(&self) -> &[f64] {
        &self.measure
    }

    pub fn draw_density(&self) -> Option<&[f64]> {
        self.proposal.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn truncation(&self) -> Option<(f64, f64)> {
        self.truncation
    }

    /// `sum_i measure_i * values_i`, the scheme's estimate of the integral.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.measure.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}
