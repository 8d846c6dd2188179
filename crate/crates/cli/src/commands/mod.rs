//! One module per CLI verb.

pub mod ensemble;
pub mod fit_peaks;
pub mod odonnell;
pub mod plots;
pub mod strain_map;
pub mod synth;
