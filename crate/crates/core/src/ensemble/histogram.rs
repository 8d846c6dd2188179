use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nlls::{nlls_solve, ParamBound, Residuals, SolverConfig};
use crate::spectral::{LineShape, FWHM_PER_SIGMA};

/// Per-bin uncertainty model for histogram Gaussian fits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramWeighting {
    /// Bin uncertainty `sqrt(max(count, 1))`.
    #[default]
    Poisson,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub peak_energy: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    /// Covariance of (center, sigma, amplitude).
    pub covariance: [[f64; 3]; 3],
    pub converged: bool,
}

impl GaussianSummary {
    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }

    pub fn peak_energy_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn fwhm_err(&self) -> f64 {
        FWHM_PER_SIGMA * self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * LineShape::Gaussian.value(x, self.peak_energy, self.sigma())
    }
}

/// Histogram of a population of emission energies, with an optional
/// Gaussian summary. Bins are half-open `[edge_k, edge_k+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub bin_size: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Inputs below the origin, not counted in any bin.
    pub out_of_range: usize,
    pub gaussian: Option<GaussianSummary>,
}

impl EnsembleStats {
    pub fn bin_centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Largest multiple of `bin_size` not above the smallest energy.
pub fn default_origin(energies: &[f64], bin_size: f64) -> f64 {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    (min / bin_size).floor() * bin_size
}

pub fn build_histogram(energies: &[f64], bin_size: f64, origin: Option<f64>) -> Result<EnsembleStats> {
    if energies.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(bin_size > 0.0) || !bin_size.is_finite() {
        return Err(invalid("bin size must be positive"));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(invalid("non-finite energy in histogram input"));
    }
    let origin = origin.unwrap_or_else(|| default_origin(energies, bin_size));
    let index = |e: f64| ((e - origin) / bin_size).floor();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = if max < origin { 0 } else { index(max) as usize + 1 };
    let mut counts = vec![0u64; n_bins];
    let mut out_of_range = 0;
    for &e in energies {
        let k = index(e);
        if k < 0.0 {
            out_of_range += 1;
        } else {
            counts[k as usize] += 1;
        }
    }
    let bin_edges = (0..=n_bins).map(|k| origin + k as f64 * bin_size).collect();
    Ok(EnsembleStats {
        bin_size,
        bin_edges,
        counts,
        out_of_range,
        gaussian: None,
    })
}

/// Weighted residuals of a Gaussian evaluated at bin centers. Parameters are
/// `[center, sigma, amplitude]`.
#[derive(Debug, Clone)]
pub struct BinnedGaussian {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub inv_sigma: Vec<f64>,
}

impl Residuals for BinnedGaussian {
    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(&self.y)
                .zip(&self.inv_sigma)
                .map(|((&x, &y), &w)| (p[2] * LineShape::Gaussian.value(x, p[0], p[1]) - y) * w),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.x.len(), 3);
        for (i, (&x, &w)) in self.x.iter().zip(&self.inv_sigma).enumerate() {
            let (f, dc, ds) = LineShape::Gaussian.value_and_grad(x, p[0], p[1]);
            jac[(i, 0)] = p[2] * dc * w;
            jac[(i, 1)] = p[2] * ds * w;
            jac[(i, 2)] = f * w;
        }
        jac
    }
}

/// Fits a Gaussian to the bin counts evaluated at bin centers.
///
/// The fit starts from the count-weighted mean and standard deviation of the
/// bin centers. Needs at least four nonzero bins.
pub fn fit_gaussian_histogram(
    stats: &EnsembleStats,
    weighting: HistogramWeighting,
    config: &SolverConfig,
) -> Result<EnsembleStats> {
    let nonzero = stats.counts.iter().filter(|c| **c > 0).count();
    if nonzero < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: nonzero,
        });
    }
    let x: Vec<f64> = stats.bin_centers().collect();
    let y: Vec<f64> = stats.counts.iter().map(|&c| c as f64).collect();
    let inv_sigma = y
        .iter()
        .map(|&c| match weighting {
            HistogramWeighting::Poisson => 1.0 / c.max(1.0).sqrt(),
            HistogramWeighting::Uniform => 1.0,
        })
        .collect();
    let total: f64 = y.iter().sum();
    let mean = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = x.iter().zip(&y).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / total;
    let sigma0 = var.sqrt().max(0.5 * stats.bin_size);
    let amp0 = y.iter().copied().fold(0.0, f64::max);

    let bounds = vec![
        ParamBound::FREE,
        ParamBound::at_least(1e-6 * stats.bin_size),
        ParamBound::at_least(0.0),
    ];
    let problem = BinnedGaussian { x, y, inv_sigma };
    let sol = nlls_solve(
        &problem,
        &DVector::from_vec(vec![mean, sigma0, amp0]),
        &config.with_bounds(bounds),
    )?;
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sol.covariance[(i, j)];
        }
    }
    let mut out = stats.clone();
    out.gaussian = Some(GaussianSummary {
        peak_energy: sol.params[0],
        fwhm: FWHM_PER_SIGMA * sol.params[1],
        amplitude: sol.params[2],
        covariance,
        converged: sol.converged,
    });
    Ok(out)
}
