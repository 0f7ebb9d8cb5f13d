//! Hoeffding-type deviation bounds for Markov chains with an `L2(pi)` spectral gap,
//! plus exact finite-chain oracles and Monte Carlo harnesses that check them.

pub mod bounds;
pub mod error;
pub mod oracle;
pub mod rng;
pub mod simulate;
pub mod spectral;

pub use error::{Error, ErrorClass, Result};
