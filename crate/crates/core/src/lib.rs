//! Simulation, tomography and calibration toolkit for fixed-frequency transmon devices.
//!
//! Conventions used throughout: rates are ordinary frequencies in MHz, times
//! are in microseconds, and evolution is `U = exp(-i 2π t H)` with `H` in MHz.

pub mod calibration;
pub mod device;
pub mod error;
pub mod fitting;
pub mod hamiltonian_tomography;
pub mod process_tomography;
pub mod quantum;
pub mod rates;
pub mod tls_analysis;

pub use error::{Error, Result};
pub use rates::RateTable;
