//! Monte-Carlo model of the underwater optical wireless channel with
//! absorption, particle scattering and turbulence-induced small-angle
//! scattering in a single photon-transport kernel.

pub mod config;
pub mod datalink;
pub mod error;
pub mod phase;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
