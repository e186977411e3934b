//! Parameter-expanded stochastic-gradient MCMC for Bayesian neural networks.
//!
//! The crate provides:
//!
//! - a small dense [`tensor`] kernel with a seeded, counter-based random
//!   stream, Kronecker products, and singular values;
//! - [`nn`]: MLPs under standard (SP) and expanded (EP) parameterizations,
//!   where each weight matrix is a product `P_c ⋯ P_1 · V · Q_1 ⋯ Q_d` of
//!   trainable factors that merge back into a single matrix for inference;
//! - [`potential`]: Gaussian-prior categorical-likelihood potentials and
//!   their minibatch estimators;
//! - [`samplers`]: SGLD, pSGLD, SGHMC, SGNHT, leapfrog HMC, and the cyclical
//!   step-size schedule;
//! - [`targets`]: analytic toy targets (a 25-component Gaussian mixture and
//!   its product-factorized wrapper);
//! - [`analysis`]: ensemble metrics (ERR/NLL/AMB/ECE), sample-diversity
//!   diagnostics, preconditioner and step-distance-bound audits, and
//!   loss-landscape tools;
//! - [`data`]: synthetic datasets, IDX/CSV ingestion, seeded minibatching;
//! - [`store`]: bit-exact checkpoint persistence.

pub mod analysis;
pub mod data;
pub mod error;
pub mod nn;
pub mod potential;
pub mod samplers;
pub mod store;
pub mod targets;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{Activation, InitScheme, LayerSpec, Mlp, ParamMode, ParamTree};
pub use tensor::{RngStream, Tensor};
