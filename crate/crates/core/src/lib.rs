//! Deterministic simulation of pseudo-asynchronous local SGD (PALSGD) and the
//! data-parallel baselines it is compared against: DDP, Local SGD and DiLoCo.
//!
//! The crate is organised bottom-up:
//!
//! - [`vecmath`]: flat parameter vectors and counter-based random streams.
//! - [`workloads`]: stochastic objectives (quadratic, logistic regression, MLP)
//!   with IID worker shards.
//! - [`optim`]: inner (SGD, momentum SGD, AdamW) and outer (SGD, Nesterov)
//!   optimizer state machines.
//! - [`algorithms`]: worker state, local steps, synchronization rounds and the
//!   training loop shared by every variant.
//! - [`cluster`]: logical clock and ring all-reduce cost model.
//! - [`experiments`]: JSON configuration, metrics emission, sweeps and the
//!   convergence-rate verification suite used by the `palsgd` binary.

pub mod algorithms;
pub mod cluster;
pub mod error;
pub mod experiments;
pub mod optim;
pub mod vecmath;
pub mod workloads;

pub use error::{Error, Result};
pub use vecmath::{ParamVector, Purpose, RngStream};
