//! Analysis toolkit for strain-tuned quantum-dot emission in monolayer
//! semiconductors.
//!
//! The crate is organised around the measurement chain:
//!
//! - [`spectral`]: spectra, peak detection and line-shape fitting on top of
//!   the damped least-squares solver in [`nlls`].
//! - [`strain`]: energy-shift to strain conversion with error propagation,
//!   Varshni baselines and thermoelastic relaxation.
//! - [`phonon`]: the O'Donnell-Chen exciton-phonon model and its fits.
//! - [`ensemble`]: histograms, errors-in-variables gauge regression and
//!   ensemble broadening.
//! - [`synth`]: seeded forward models producing ground-truth datasets for
//!   every inverse procedure above.
//!
//! All energies are in meV, temperatures in K and strains in percent.

pub mod ensemble;
pub mod error;
pub mod nlls;
pub mod phonon;
pub mod spectral;
pub mod strain;
pub mod synth;

pub use error::{Error, Result};

/// Conversion constant between photon wavelength in nm and energy in meV.
pub const HC_MEV_NM: f64 = 1_239_841.98;

/// Converts a vacuum wavelength (nm) to photon energy (meV).
pub fn wavelength_to_energy(wavelength_nm: f64) -> f64 {
    HC_MEV_NM / wavelength_nm
}
