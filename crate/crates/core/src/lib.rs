//! Quantum model of impulsive stimulated Raman scattering with phonon
//! squeezing: Gaussian phonon dynamics, probe read-out, a truncated Fock-space
//! reference, a balanced-detector simulator and the spectral analysis chain.

pub mod analysis;
pub mod detector;
pub mod error;
pub mod io;
pub mod phonon;
pub mod oracle;
pub mod probe;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
