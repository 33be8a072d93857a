//! Semiparametric efficiency on a grid.
//!
//! Densities are tabulated on a fixed node set and the score, nuisance
//! tangents, gradients and estimating functions become vectors in a weighted
//! L² space. On top of that calculus the crate computes efficient and
//! information scores, Godambe information, Z-estimators and conditional
//! inference functions.

mod error;
pub mod conditioning;
pub mod efficiency;
pub mod estimate;
pub mod functional;
pub mod godambe;
pub mod linalg;
pub mod measure;
pub mod model;
pub mod tangent;
mod tolerance;

pub use error::{Error, Result};
pub use tolerance::{fd_step, Tolerances};

/// The guide's chapters, compiled as doctests so their examples stay current.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/hilbert.md")]
    pub mod hilbert {}
    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}
    #[doc = include_str!("../../../book/src/paths.md")]
    pub mod paths {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    pub mod gradients {}
    #[doc = include_str!("../../../book/src/efficiency.md")]
    pub mod efficiency {}
    #[doc = include_str!("../../../book/src/godambe.md")]
    pub mod godambe {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    pub mod estimation {}
    #[doc = include_str!("../../../book/src/conditioning.md")]
    pub mod conditioning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
