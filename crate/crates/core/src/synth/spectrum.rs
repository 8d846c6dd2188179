use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::population::QdRecord;
use super::{substream, Domain};
use crate::error::{invalid, Result};
use crate::spectral::{LineShape, Spectrum, SpectrumMeta};

/// A Gaussian emission line with a given integrated area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionLine {
    pub energy: f64,
    pub area: f64,
}

impl From<&QdRecord> for EmissionLine {
    fn from(r: &QdRecord) -> Self {
        EmissionLine {
            energy: r.energy,
            area: r.intensity,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// 1σ of additive Gaussian noise, counts.
    pub additive_sigma: f64,
    /// Replace each clean value by a Poisson draw with that mean.
    pub shot: bool,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        additive_sigma: 0.0,
        shot: false,
    };

    pub fn is_noiseless(&self) -> bool {
        self.additive_sigma == 0.0 && !self.shot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// Line FWHM, meV.
    pub linewidth: f64,
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    pub seed: u64,
    /// Sub-stream index, typically the location id.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub meta: SpectrumMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpectrum {
    pub spectrum: Spectrum,
    /// Indices of lines centred outside the grid and therefore omitted.
    pub dropped: Vec<usize>,
}

/// `lo, lo+step, …` up to and including `hi` (within rounding).
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("grid needs lo < hi and a positive step"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

/// Sum of Gaussian lines on a constant background, with optional shot and
/// additive noise. Noisy intensities are clipped at zero.
pub fn generate_spectrum(lines: &[EmissionLine], grid: &[f64], config: &SpectrumConfig) -> Result<SyntheticSpectrum> {
    if grid.len() < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    if grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("grid must be finite and strictly increasing"));
    }
    if !(config.linewidth > 0.0) || !config.linewidth.is_finite() {
        return Err(invalid("linewidth must be positive"));
    }
    if !(config.background >= 0.0) || !(config.noise.additive_sigma >= 0.0) {
        return Err(invalid("background and noise sigma must be non-negative"));
    }
    if lines.iter().any(|l| !l.energy.is_finite() || !(l.area >= 0.0)) {
        return Err(invalid("line energies must be finite and areas non-negative"));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let mut dropped = Vec::new();
    let kept: Vec<&EmissionLine> = lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| {
            if l.energy < lo || l.energy > hi {
                dropped.push(i);
                None
            } else {
                Some(l)
            }
        })
        .collect();

    let sigma = LineShape::Gaussian.width_from_fwhm(config.linewidth);
    let unit_area = LineShape::Gaussian.area(1.0, sigma);
    let mut intensity: Vec<f64> = grid
        .iter()
        .map(|&x| {
            config.background
                + kept
                    .iter()
                    .map(|l| l.area / unit_area * LineShape::Gaussian.value(x, l.energy, sigma))
                    .sum::<f64>()
        })
        .collect();

    if !config.noise.is_noiseless() {
        let mut rng = substream(config.seed, Domain::SpectrumNoise, config.stream);
        let additive = Normal::new(0.0, config.noise.additive_sigma).map_err(|e| invalid(e.to_string()))?;
        for v in intensity.iter_mut() {
            if config.noise.shot && *v > 0.0 {
                *v = Poisson::new(*v).map_err(|e| invalid(e.to_string()))?.sample(&mut rng);
            }
            *v = (*v + additive.sample(&mut rng)).max(0.0);
        }
    }

    let spectrum = Spectrum::new(grid.to_vec(), intensity, config.meta.clone())?;
    Ok(SyntheticSpectrum { spectrum, dropped })
}
