//! Monostatic OFDM sensing simulation.
//!
//! The processing chain follows a communication-centric OFDM frame through a
//! multi-target delay-Doppler channel and back into range and velocity
//! estimates:
//!
//! 1. [`frame`] draws random symbol frames from a modulation alphabet.
//! 2. [`channel`] builds the frequency-domain channel and adds noise.
//! 3. [`rdm`] applies the matched filter and forms the range-Doppler matrix.
//! 4. [`estimate`] detects peaks, refines them off-grid and maps them to
//!    distance and velocity, alongside the Cramér-Rao bounds.
//! 5. [`mitigate`] removes modulation-induced interference with coherent
//!    successive target cancellation and its two-pass enhancement.
//! 6. [`harness`] runs seeded Monte-Carlo trials and aggregates per-target MSE.

pub mod channel;
pub mod error;
pub mod estimate;
pub mod frame;
pub mod harness;
pub mod mitigate;
pub mod rdm;

pub use error::{IsacError, Result};

use ndarray::Array2;
use num_complex::Complex64;

/// Complex N×M matrix, rows indexed by subcarrier (or delay bin), columns by
/// OFDM symbol (or Doppler bin).
pub type CMatrix = Array2<Complex64>;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
