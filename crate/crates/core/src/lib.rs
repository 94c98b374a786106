//! Bayesian nonparametric survival inference for hazard mixture models.
//!
//! Posterior moments of the survival function come from a marginal Gibbs
//! sampler; full posterior distributions are then rebuilt from those moments
//! with a Jacobi-polynomial density expansion.

pub(crate) mod dd;
pub mod error;
pub mod functionals;
pub mod gibbs;
pub mod hazard;
pub mod io;
pub mod jacobi;
pub mod moments;
pub mod pipeline;
pub mod plot;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
pub use moments::MomentVector;
