use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavelength_to_energy;

/// Acquisition metadata attached to a spectrum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumMeta {
    /// Sample temperature in K.
    pub temperature: Option<f64>,
    pub location_id: Option<String>,
    pub sample: Option<String>,
    /// Electric field on the piezo substrate, kV/cm.
    pub piezo_field: Option<f64>,
    pub material: Option<String>,
    /// Instrument resolution in meV.
    pub resolution: Option<f64>,
}

/// Energy-resolved intensity trace on a strictly increasing grid (meV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    energy: Vec<f64>,
    intensity: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(energy: Vec<f64>, intensity: Vec<f64>, meta: SpectrumMeta) -> Result<Self> {
        if energy.len() != intensity.len() {
            return Err(Error::LengthMismatch {
                energies: energy.len(),
                intensities: intensity.len(),
            });
        }
        for (row, (e, i)) in energy.iter().zip(&intensity).enumerate() {
            if !e.is_finite() || !i.is_finite() {
                return Err(Error::NonFiniteSample { row });
            }
            if *i < 0.0 {
                return Err(Error::NegativeIntensity { row, value: *i });
            }
        }
        for (k, w) in energy.windows(2).enumerate() {
            let spacing = w[1] - w[0];
            if spacing <= 0.0 {
                return Err(Error::NonMonotoneGrid { row: k + 1 });
            }
            if let Some(res) = meta.resolution {
                // Relative slack for grids produced by repeated addition.
                if spacing < res * (1.0 - 1e-9) {
                    return Err(Error::SpacingBelowResolution {
                        row: k + 1,
                        spacing,
                        resolution: res,
                    });
                }
            }
        }
        Ok(Spectrum {
            energy,
            intensity,
            meta,
        })
    }

    /// Builds a spectrum from a wavelength-ordered trace. The grid is
    /// converted to meV and reversed so energies increase.
    pub fn from_wavelengths(
        wavelength_nm: &[f64],
        intensity: &[f64],
        meta: SpectrumMeta,
    ) -> Result<Self> {
        if wavelength_nm.len() != intensity.len() {
            return Err(Error::LengthMismatch {
                energies: wavelength_nm.len(),
                intensities: intensity.len(),
            });
        }
        // Wavelength must strictly increase so that energy strictly decreases.
        for (k, w) in wavelength_nm.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NonMonotoneGrid { row: k + 1 });
            }
        }
        if let Some(row) = wavelength_nm.iter().position(|w| !(*w > 0.0)) {
            return Err(Error::NonFiniteSample { row });
        }
        let energy: Vec<f64> = wavelength_nm.iter().rev().map(|w| wavelength_to_energy(*w)).collect();
        let intensity: Vec<f64> = intensity.iter().rev().copied().collect();
        Spectrum::new(energy, intensity, meta)
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    /// Smallest spacing between adjacent grid points.
    pub fn min_spacing(&self) -> Option<f64> {
        self.energy
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Indices of the grid points inside `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.energy.partition_point(|e| *e < lo);
        let end = self.energy.partition_point(|e| *e <= hi);
        start..end.max(start)
    }

    /// Copy with every intensity scaled by `factor` (must be non-negative).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Spectrum::new(
            self.energy.clone(),
            self.intensity.iter().map(|v| v * factor).collect(),
            self.meta.clone(),
        )
    }

    /// Copy with the grid shifted by `delta` meV.
    pub fn shifted(&self, delta: f64) -> Result<Self> {
        Spectrum::new(
            self.energy.iter().map(|e| e + delta).collect(),
            self.intensity.clone(),
            self.meta.clone(),
        )
    }

    /// Median despike: points exceeding the running median of
    /// `2 * half_window + 1` neighbours by more than `threshold` counts are
    /// replaced by that median.
    pub fn despiked(&self, half_window: usize, threshold: f64) -> Self {
        let n = self.intensity.len();
        let mut out = self.intensity.clone();
        let mut buf = Vec::with_capacity(2 * half_window + 1);
        for i in 0..n {
            let lo = i.saturating_sub(half_window);
            let hi = (i + half_window + 1).min(n);
            buf.clear();
            buf.extend_from_slice(&self.intensity[lo..hi]);
            buf.sort_by(|a, b| a.total_cmp(b));
            let median = buf[buf.len() / 2];
            if self.intensity[i] - median > threshold {
                out[i] = median;
            }
        }
        Spectrum {
            energy: self.energy.clone(),
            intensity: out,
            meta: self.meta.clone(),
        }
    }
}
