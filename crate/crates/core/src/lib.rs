//! Neighbour-driven Gaussian process variational autoencoders.
//!
//! Two scalable GPVAE objectives are provided, both built on nearest-neighbour
//! conditioning sets over the auxiliary inputs:
//!
//! * HPA: a hierarchical prior that keeps only the covariance among each
//!   point's `H` nearest neighbours ([`elbo::elbo_hpa`]).
//! * SPA: a Vecchia-style chain of conditionals on the `H` nearest
//!   predecessors, i.e. a sparse Cholesky factor of the prior precision
//!   ([`elbo::elbo_spa`]).
//!
//! The exact full-batch GPVAE objective ([`elbo::elbo_full`]) and the standard
//! VAE objective ([`elbo::elbo_vae`]) are included as reference points.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod elbo;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod neighbours;
pub mod nets;
pub mod predict;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use kernels::{KernelKind, KernelSpec, LatentPrior};
pub use linalg::{CholeskyFactor, Matrix};
pub use neighbours::{ConditioningSet, NeighbourIndex, NeighbourSets};
pub use nets::{Activation, LikelihoodFamily, MlpParams, ModelParams};
