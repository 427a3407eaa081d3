//! Probability-proportional-to-size (PPS) gradient quantization and the
//! accelerated stochastic methods built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`quantize`] | PPS encoder/decoder, top-M / random-M baselines, wire format, bit meter |
//! | [`oracles`] | stochastic first-order oracles, mini-batching, quantized calls |
//! | [`schedules`] | coefficient sequences, sample-size policies, theory constants and bounds |
//! | [`solvers`] | primal accelerated method and primal-dual method for affine constraints |
//! | [`network`] | topologies, Laplacian spectra, synchronous decentralised simulator |
//! | [`problems`] | quadratic, log-sum-exp and semi-discrete Wasserstein barycentre instances |
//!
//! Every randomised routine takes an explicit RNG handle; nothing in the crate
//! holds global mutable state, so runs are reproducible from a seed.

pub mod error;
pub mod linalg;
pub mod network;
pub mod oracles;
pub mod problems;
pub mod quantize;
pub mod rng;
pub mod schedules;
pub mod solvers;

pub use error::{Error, Result};
