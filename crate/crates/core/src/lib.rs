//! Small-support approximation of Markov transition kernels.
//!
//! The library builds scenario lattices for discrete-time Markov systems by
//! quantizing each transition kernel with respect to an integrated
//! transportation distance (a marginal-weighted aggregation of per-state
//! Wasserstein distances), evaluates dynamic risk measures backward over the
//! lattice, and certifies the evaluation error from the per-stage kernel
//! distances.
//!
//! Modules:
//! - [`transport`]: exact and entropic discrete optimal transport.
//! - [`kernel_metric`]: discrete kernels, marginal compositions, and the
//!   integrated transportation distance.
//! - [`lattice`]: particle sampling, representative-point selection
//!   (facility-location program), implied kernels, and stage errors.
//! - [`risk`]: transition risk mappings and backward evaluation with
//!   a-priori error bounds.
//! - [`markets`]: multi-asset GBM dynamics, basket puts, and the binomial
//!   lattice baseline pricer.
//! - [`experiments`]: seeded experiment runners and CSV report emission.

pub mod exec;
pub mod experiments;
pub mod kernel_metric;
pub mod lattice;
pub mod markets;
pub mod risk;
pub mod smalllp;
pub mod transport;

pub use kernel_metric::{DiscreteKernel, Marginal};
pub use transport::{DiscreteMeasure, GroundCost, TransportPlan};
