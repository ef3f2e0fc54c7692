//! Nonlinear matrix recovery by rank minimization of lifted features.
//!
//! Data `M` whose columns lie on an algebraic variety becomes low rank after a
//! polynomial or Gaussian lifting. Recovery searches for `X` consistent with
//! linear measurements `A(X) = b` whose lifted matrix is closest to rank `r`,
//! optimising over the product of the affine measurement set and a Grassmann
//! manifold.

pub mod error;
pub mod lifting;
pub mod linalg;
pub mod manifold;
pub mod objective;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
