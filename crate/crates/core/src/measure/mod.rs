//! Hilbert-space calculus on L²(p) for a density tabulated on a node set.
//!
//! Everything downstream is expressed through four operations: the weighted
//! inner product, centering, projection onto a finite basis and principal
//! angles between two finite subspaces.

mod density;
mod l2;
pub mod quadrature;
mod scheme;
mod subspace;

pub use density::Density;
pub use l2::{center, cross_gram, gram, inner_product, L2Vec};
pub use scheme::{IntegrationScheme, SchemeKind};
pub use subspace::{complement_project, principal_angles, project, Subspace};

#[cfg(test)]
mod tests;
