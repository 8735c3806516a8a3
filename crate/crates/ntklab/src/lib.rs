//! A numerical laboratory for shallow bias-trained ReLU networks in the
//! under-parametrized NTK regime on [-1, 1]: the kernel's explicit
//! eigen-system, exact training dynamics, concentration and perturbation
//! experiments, closed-form convergence bounds with independent oracles,
//! and a reproducible width-sweep harness.

pub mod bounds;
pub mod config;
pub mod error;
pub mod grid;
pub mod network;
pub mod ntk;
pub mod report;
pub mod spectral;
pub mod sweep;
pub mod targets;
pub mod training;

pub use error::{NtkLabError, Result};
