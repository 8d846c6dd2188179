use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{LineShape, Spectrum};
use crate::error::{invalid, Error, Result};
use crate::nlls::{nlls_solve, ParamBound, Residuals, SolverConfig};

const MIN_WINDOW_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(invalid(format!("empty energy window [{lo}, {hi}]")));
        }
        Ok(EnergyWindow { lo, hi })
    }

    pub fn around(center: f64, half_width: f64) -> Result<Self> {
        EnergyWindow::new(center - half_width, center + half_width)
    }

    pub fn contains(&self, e: f64) -> bool {
        e >= self.lo && e <= self.hi
    }
}

/// Starting point for a line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakGuess {
    pub center: f64,
    pub sigma: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub shape: LineShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Iteration cap reached; parameters are the best found.
    NonConvergence,
    /// Width pinned at the grid spacing.
    SigmaAtGridLimit,
    AmplitudeAtZero,
    CenterAtWindowEdge,
}

/// Fitted line parameters. `covariance` is ordered (center, sigma,
/// amplitude); `sigma` is the Gaussian standard deviation or the Lorentzian
/// half width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center: f64,
    pub sigma: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub shape: LineShape,
    pub covariance: [[f64; 3]; 3],
    pub baseline_err: f64,
    /// Sum of squared residuals over the window.
    pub residual_norm: f64,
    pub flags: Vec<FitFlag>,
}

impl PeakFit {
    pub fn fwhm(&self) -> f64 {
        self.shape.fwhm(self.sigma)
    }

    pub fn center_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn sigma_err(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn amplitude_err(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }

    pub fn fwhm_err(&self) -> f64 {
        self.shape.fwhm(self.sigma_err())
    }

    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.baseline + self.amplitude * self.shape.value(x, self.center, self.sigma)
    }
}

/// Sum of line profiles on a constant baseline, as a residual problem over
/// sampled data. Parameters are `[baseline, (center, width, amplitude)...]`.
#[derive(Debug, Clone)]
pub struct PeakModel {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub shapes: Vec<LineShape>,
}

impl PeakModel {
    pub fn eval(&self, params: &[f64], x: f64) -> f64 {
        let mut v = params[0];
        for (k, shape) in self.shapes.iter().enumerate() {
            let p = &params[1 + 3 * k..4 + 3 * k];
            v += p[2] * shape.value(x, p[0], p[1]);
        }
        v
    }
}

impl Residuals for PeakModel {
    fn num_params(&self) -> usize {
        1 + 3 * self.shapes.len()
    }

    fn num_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let params = p.as_slice();
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(&self.y).map(|(&x, &y)| self.eval(params, x) - y),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.x.len(), self.num_params());
        for (i, &x) in self.x.iter().enumerate() {
            jac[(i, 0)] = 1.0;
            for (k, shape) in self.shapes.iter().enumerate() {
                let (c, w, a) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                let (f, dc, dw) = shape.value_and_grad(x, c, w);
                jac[(i, 1 + 3 * k)] = a * dc;
                jac[(i, 2 + 3 * k)] = a * dw;
                jac[(i, 3 + 3 * k)] = f;
            }
        }
        jac
    }
}

/// Fits one line plus a constant baseline inside `window`.
pub fn fit_peak(
    spectrum: &Spectrum,
    window: EnergyWindow,
    initial: &PeakGuess,
    config: &SolverConfig,
) -> Result<PeakFit> {
    let mut fits = fit_peaks(spectrum, window, std::slice::from_ref(initial), config)?;
    Ok(fits.remove(0))
}

/// Fits a sum of lines sharing one constant baseline inside `window`.
///
/// Widths are bounded below by the grid spacing, centers by the window and
/// amplitudes by zero; a parameter ending on one of these bounds is
/// reported through [`FitFlag`]. `config.parameter_bounds`, when given, is
/// intersected with these and must use the `[baseline, (center, width,
/// amplitude)...]` layout.
pub fn fit_peaks(
    spectrum: &Spectrum,
    window: EnergyWindow,
    guesses: &[PeakGuess],
    config: &SolverConfig,
) -> Result<Vec<PeakFit>> {
    if guesses.is_empty() {
        return Err(invalid("at least one peak guess is required"));
    }
    let range = spectrum.index_range(window.lo, window.hi);
    let points = range.len();
    let n_params = 1 + 3 * guesses.len();
    if points < MIN_WINDOW_POINTS || points <= n_params {
        return Err(Error::DegenerateWindow { points });
    }
    let x = spectrum.energy()[range.clone()].to_vec();
    let y = spectrum.intensity()[range].to_vec();
    let spacing = x
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);

    let mut initial = vec![y.iter().copied().fold(f64::INFINITY, f64::min)];
    let mut bounds = vec![ParamBound::FREE];
    for g in guesses {
        if !window.contains(g.center) {
            return Err(invalid(format!(
                "initial center {} outside window [{}, {}]",
                g.center, window.lo, window.hi
            )));
        }
        if !(g.sigma > 0.0) {
            return Err(invalid("initial width must be positive"));
        }
        initial.extend_from_slice(&[g.center, g.sigma.max(spacing), g.amplitude.max(0.0)]);
        bounds.extend_from_slice(&[
            ParamBound::new(window.lo, window.hi),
            ParamBound::at_least(spacing),
            ParamBound::at_least(0.0),
        ]);
    }
    if let Some(user) = &config.parameter_bounds {
        if user.len() != n_params {
            return Err(invalid(format!(
                "{} parameter bounds given, peak model has {n_params}",
                user.len()
            )));
        }
        bounds = bounds.iter().zip(user).map(|(a, b)| a.intersect(b)).collect();
    }

    let model = PeakModel {
        x,
        y,
        shapes: guesses.iter().map(|g| g.shape).collect(),
    };
    let sol = nlls_solve(&model, &DVector::from_vec(initial), &config.with_bounds(bounds))?;
    let p = &sol.params;
    let cov = &sol.covariance;

    let fits = guesses
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let o = 1 + 3 * k;
            let mut covariance = [[0.0; 3]; 3];
            for (i, row) in covariance.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = cov[(o + i, o + j)];
                }
            }
            let mut flags = Vec::new();
            if !sol.converged {
                flags.push(FitFlag::NonConvergence);
            }
            if p[o + 1] <= spacing * (1.0 + 1e-9) {
                flags.push(FitFlag::SigmaAtGridLimit);
            }
            if p[o + 2] <= 0.0 {
                flags.push(FitFlag::AmplitudeAtZero);
            }
            if p[o] <= window.lo || p[o] >= window.hi {
                flags.push(FitFlag::CenterAtWindowEdge);
            }
            PeakFit {
                center: p[o],
                sigma: p[o + 1],
                amplitude: p[o + 2],
                baseline: p[0],
                shape: g.shape,
                covariance,
                baseline_err: cov[(0, 0)].max(0.0).sqrt(),
                residual_norm: sol.cost,
                flags,
            }
        })
        .collect();
    Ok(fits)
}
