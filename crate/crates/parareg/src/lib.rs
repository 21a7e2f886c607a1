//! Cooperative output regulation for networks of heterogeneous 1-D parabolic
//! agents with spatially- and time-varying coefficients.
//!
//! The crate implements the full design pipeline — communication-graph
//! analysis, cooperative reference observers, time-varying backstepping
//! kernels, regulator equations, local disturbance observers — together with
//! a method-of-lines closed-loop simulator and a config-driven CLI.

pub mod distobs;
pub mod error;
pub mod exosys;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod netgraph;
pub mod plant;
pub mod refnet;
pub mod regulator;
pub mod runner;
pub mod signal;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
