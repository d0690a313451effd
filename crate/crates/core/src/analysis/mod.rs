//! Spectral and statistical analysis of pump-probe traces: detrended FFT
//! peaks, Morlet time-frequency maps and lifetimes, and fluence-series fits.

mod fluence;
mod spectrum;
mod wavelet;

pub use spectrum::*;
pub use wavelet::*;
pub use fluence::*;
