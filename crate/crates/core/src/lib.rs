//! Simulation and optimization of transmitter-side multidimensional signal
//! rotations for multichannel transmission impaired by memoryless Gaussian
//! residual phase noise.
//!
//! The crate provides:
//!
//! * rotation-matrix construction (Hadamard, Givens products, DFT, random,
//!   and the fixed SER-optimized 4D rotation) and fast complex-basis
//!   Hadamard application,
//! * Gray-labeled square-QAM constellations,
//! * the phase-noise channel model and its large-channel-count asymptotic
//!   surrogate,
//! * joint-channel (approximate MAP) and per-channel receivers, including a
//!   numerical-integration posterior oracle,
//! * BLER/SER/BER/AIR estimation with mergeable accumulators,
//! * a deterministic Monte Carlo engine, and
//! * surrogate-based black-box optimization of 4D rotation angles.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and
//! parallel execution live in the companion `rotsim` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod channel;
pub mod constellation;
pub mod error;
pub mod metrics;
pub mod montecarlo;
pub mod optimizer;
pub mod receivers;
pub mod rotations;
pub mod streams;

pub use error::Error;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
