//! Separating internal (network) and external (out-of-network) influence in
//! information diffusion.
//!
//! A node's chance of infection depends on how many times it has been exposed
//! to a contagion, through an exposure curve `η(x)`. Exposures arrive from
//! infected in-neighbours after a random delay and from an unobserved external
//! source at rate `λ_ext(t)`. Given a network and one infection trace,
//! [`inference::fit`] recovers both.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod exposure;
pub mod hazards;
pub mod inference;
pub mod network;
pub mod numeric;
pub mod rate_table;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
