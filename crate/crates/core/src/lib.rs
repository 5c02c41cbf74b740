//! Two-qubit quantum noise spectroscopy: noise synthesis, fixed-total-time
//! pulse sequences, filter functions, Monte-Carlo simulation, a cumulant
//! oracle and spectral reconstruction.

pub mod error;
pub mod estimation;
pub mod filter;
pub mod noise;
pub mod oracle;
pub mod plan;
pub mod pulses;
pub mod quadrature;
pub mod records;
pub mod rng;
pub mod simulator;
pub mod studies;
pub mod system;

pub use error::{ErrorKind, QnsError, Result};
