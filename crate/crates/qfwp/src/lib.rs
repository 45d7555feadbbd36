//! Quantum fast weight programmer.
//!
//! A classical "slow programmer" network emits, at every time step, a layer
//! vector `L` and a qubit vector `Q` whose outer product is added onto the
//! rotation angles of a simulated variational quantum circuit (the "fast
//! programmer"). The accumulated angles act as the model's short-term memory,
//! so sequences can be handled by a plain feed-forward network without any
//! recurrent connections.
//!
//! The crate bundles everything needed to train and evaluate such models:
//!
//! - [`sim`]: exact statevector simulation of the H / Ry / CNOT circuit
//!   family with Pauli-Z expectations and parameter-shift gradients,
//! - [`nn`]: dense layers with reverse-mode gradients and Adam,
//! - [`model`]: the slow programmer, the outer-product update, and the
//!   forward/backward passes over sequences,
//! - [`timeseries`]: benchmark generators (damped pendulum, Bessel J2,
//!   NARMA) and the windowed training harness,
//! - [`minigrid`]: a deterministic empty-gridworld environment with
//!   egocentric observations,
//! - [`a3c`]: asynchronous advantage actor-critic training on the gridworld.

pub mod a3c;
pub mod error;
pub mod minigrid;
pub mod model;
pub mod nn;
pub mod sim;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod timeseries;

pub use error::{Error, Result};
