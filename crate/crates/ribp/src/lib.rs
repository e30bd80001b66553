//! Restricted Indian buffet process (rIBP) models.
//!
//! An IBP-style binary latent-feature prior imposes a Poisson law on the
//! number of features per data point. Restricting the Bernoulli-process
//! conditionals to a user-chosen row-sum law `f` removes that assumption
//! while keeping the matrix rows exchangeable. This crate provides:
//!
//! - [`poibin`]: exact (recursive and DFT) and approximate (skew-normal)
//!   Poisson-binomial computation, plus conditional Bernoulli sampling and
//!   evaluation — the kernel behind every restricted-model probability;
//! - [`model`]: domain types (feature matrices, row-sum laws, truncated
//!   beta-process priors) and generative/evaluation primitives;
//! - [`linear_gaussian`]: a collapsed linear-Gaussian observation model
//!   with incremental row rescoring for MCMC;
//! - [`inference`]: Gibbs and Metropolis-Hastings samplers for the
//!   truncated restricted model, plus an exact enumeration oracle;
//! - [`predictive`]: importance-sampled predictive distributions using
//!   conjugate unrestricted-posterior proposals;
//! - [`exchangeability`]: exact enumeration/quadrature checks that the
//!   three-urn buffet is exchangeable, its direct restriction is not, the
//!   latent restriction is, and the sum-one restricted gamma-Poisson
//!   process is a Chinese restaurant process.

pub mod error;
pub mod exchangeability;
pub mod inference;
pub mod linear_gaussian;
pub mod model;
pub mod poibin;
pub mod predictive;
pub mod quadrature;

pub use error::{Error, Result};
