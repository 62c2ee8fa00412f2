//! Simulation and learning workbench for RSSI-driven UAV swarm pursuit.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: log-distance path loss plus spatially correlated Rician
//!   fading with a Clarke sum-of-sinusoids Doppler process.
//! - [`world`]: the six-UAV octahedral swarm, target placement, RSSI
//!   observation matrices, axis/distance rewards and termination.
//! - [`net`]: the per-dimension recurrent policy/value network with exact
//!   backpropagation through time and Adam.
//! - [`trainer`]: asynchronous advantage actor-critic with a shared global
//!   store, worker threads and an early-stopping evaluator.
//! - [`eval`]: batch episode evaluation, movement CDFs, percentiles and
//!   total tracking time.
//! - [`config`]: the flat TOML configuration with documented defaults.
//!
//! Batch workloads (evaluation episodes, channel sample generation) go
//! through [`par`], which uses rayon when the `parallel` feature is on and a
//! plain sequential loop otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod net;
pub mod par;
pub mod policy;
pub mod seed;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
