//! Over-smoothing laboratory for deep message-passing graph neural networks.
//!
//! The crate bundles a small dense reverse-mode autodiff engine, GCN / GAT /
//! SAGE backbones with the common residual families (Res, InitialRes, Dense,
//! JK) and the posterior-sampled node-adaptive residual module, closed-form
//! oracles for the linear residual recursions, smoothness metrics, and a
//! training / sweep harness.

pub mod error;
pub mod graph;
pub mod harness;
pub mod layers;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod par;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
