//! Simulation and validation of Brownian motion conditioned to stay in an
//! open set, and of cluster boundaries in coalescing stochastic flows.

pub mod analytic;
pub mod error;
pub mod flows;
pub mod io;
pub mod meander;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use rng::RngStream;
