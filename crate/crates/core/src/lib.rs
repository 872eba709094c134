//! Noisy quantum homodyne tomography.
//!
//! Simulates homodyne measurements of a quantum state under detection
//! losses, reconstructs its Wigner function with a deconvolving
//! filtered-back-projection kernel estimator, and selects the bandwidth
//! adaptively with a Lepski-type procedure.

pub mod adapt;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod harness;
pub mod io;
pub mod simulate;
pub mod special;
pub mod states;
pub mod tomography;
pub mod validation;

pub use error::{Error, Result};
pub use grid::{GridSpec, WignerGrid};
