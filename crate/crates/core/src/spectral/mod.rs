//! Spectra, peak detection and line-shape fitting.

mod detect;
mod fit;
mod lineshape;
mod spectrum;

pub use detect::detect_peaks;
pub use fit::{fit_peak, fit_peaks, EnergyWindow, FitFlag, PeakFit, PeakGuess, PeakModel};
pub use lineshape::{LineShape, FWHM_PER_SIGMA};
pub use spectrum::{Spectrum, SpectrumMeta};
