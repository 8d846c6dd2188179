use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::strain::{GaugeFactor, Species, StrainEstimate};

/// A point with 1σ uncertainties on both coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionPoint {
    pub x: f64,
    pub x_err: f64,
    pub y: f64,
    pub y_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    /// Reduced chi-square of the weighted residuals.
    pub goodness: f64,
    pub iterations: usize,
}

impl RegressionResult {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct YorkConfig {
    pub max_iterations: usize,
    /// Absolute slope change that ends the iteration.
    pub tolerance: f64,
    /// Zero uncertainties are replaced by this fraction of the data range of
    /// the same coordinate.
    pub error_floor_fraction: f64,
}

impl Default for YorkConfig {
    fn default() -> Self {
        YorkConfig {
            max_iterations: 100,
            tolerance: 1e-10,
            error_floor_fraction: 1e-6,
        }
    }
}

fn range(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = v.fold(f64::INFINITY, f64::min);
    max - min
}

fn check_points(points: &[RegressionPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    for p in points {
        if ![p.x, p.y, p.x_err, p.y_err].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite regression input"));
        }
        if p.x_err < 0.0 || p.y_err < 0.0 {
            return Err(invalid("negative uncertainty in regression input"));
        }
    }
    Ok(())
}

/// Straight-line fit with uncertainties in both coordinates (York's
/// iteratively reweighted solution for uncorrelated errors).
///
/// Starts from the unweighted least-squares slope and iterates until the
/// slope moves by less than `config.tolerance`. Slope and intercept errors
/// are the standard York estimates from the stated uncertainties, without
/// rescaling by the reduced chi-square.
pub fn york_fit(points: &[RegressionPoint], config: &YorkConfig) -> Result<RegressionResult> {
    check_points(points)?;
    let x_range = range(points.iter().map(|p| p.x));
    let y_range = range(points.iter().map(|p| p.y));
    let spread_floor = 1e-12 * points.iter().map(|p| p.x.abs()).fold(1.0, f64::max);
    if !(x_range > spread_floor) {
        return Err(Error::Degenerate("x values carry no spread".into()));
    }
    let x_floor = config.error_floor_fraction * x_range;
    let y_floor = config.error_floor_fraction * if y_range > 0.0 { y_range } else { 1.0 };
    let wx: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / if p.x_err > 0.0 { p.x_err } else { x_floor }.powi(2))
        .collect();
    let wy: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / if p.y_err > 0.0 { p.y_err } else { y_floor }.powi(2))
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();

    let mut b = ols_slope(&xs, &ys);
    let n = points.len();
    let mut w = vec![0.0; n];
    let mut beta = vec![0.0; n];
    // Root of h(b) = g(b) - b, where g is the York slope update, by secant
    // steps kept inside the tightest known sign bracket.
    let mut prev: Option<(f64, f64)> = None;
    let mut above: Option<f64> = None;
    let mut below: Option<f64> = None;
    let mut iterations = 0;
    loop {
        iterations += 1;
        for i in 0..n {
            w[i] = wx[i] * wy[i] / (wx[i] + b * b * wy[i]);
        }
        let sw: f64 = w.iter().sum();
        let x_bar = (0..n).map(|i| w[i] * xs[i]).sum::<f64>() / sw;
        let y_bar = (0..n).map(|i| w[i] * ys[i]).sum::<f64>() / sw;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let u = xs[i] - x_bar;
            let v = ys[i] - y_bar;
            beta[i] = w[i] * (u / wy[i] + b * v / wx[i]);
            num += w[i] * beta[i] * v;
            den += w[i] * beta[i] * u;
        }
        if den == 0.0 {
            return Err(Error::Degenerate("vanishing York denominator".into()));
        }
        let h = num / den - b;
        if h.abs() < config.tolerance {
            b += h;
            break;
        }
        if iterations >= config.max_iterations {
            return Err(Error::NonConvergence(iterations));
        }
        if h > 0.0 {
            above = Some(b);
        } else {
            below = Some(b);
        }
        let mut next = match prev {
            Some((bp, hp)) if bp != b && hp != h => b - h * (b - bp) / (h - hp),
            _ => b + h,
        };
        if let (Some(lo), Some(hi)) = (above, below) {
            let (a, c) = if lo < hi { (lo, hi) } else { (hi, lo) };
            if !(next > a && next < c) {
                next = 0.5 * (a + c);
            }
        }
        prev = Some((b, h));
        b = next;
    }
    // Weights and centroid consistent with the final slope.
    for i in 0..n {
        w[i] = wx[i] * wy[i] / (wx[i] + b * b * wy[i]);
    }
    let sw: f64 = w.iter().sum();
    let x_bar = (0..n).map(|i| w[i] * xs[i]).sum::<f64>() / sw;
    let y_bar = (0..n).map(|i| w[i] * ys[i]).sum::<f64>() / sw;
    for i in 0..n {
        let u = xs[i] - x_bar;
        let v = ys[i] - y_bar;
        beta[i] = w[i] * (u / wy[i] + b * v / wx[i]);
    }
    let a = y_bar - b * x_bar;
    let adjusted: Vec<f64> = (0..n).map(|i| x_bar + beta[i]).collect();
    let adj_bar = (0..n).map(|i| w[i] * adjusted[i]).sum::<f64>() / sw;
    let suu: f64 = (0..n).map(|i| w[i] * (adjusted[i] - adj_bar).powi(2)).sum();
    let slope_var = 1.0 / suu;
    let intercept_var = 1.0 / sw + adj_bar * adj_bar * slope_var;
    let chi2: f64 = (0..n).map(|i| w[i] * (ys[i] - b * xs[i] - a).powi(2)).sum();
    Ok(RegressionResult {
        slope: b,
        intercept: a,
        slope_err: slope_var.sqrt(),
        intercept_err: intercept_var.sqrt(),
        goodness: chi2 / (n - 2) as f64,
        iterations,
    })
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Closed-form weighted least squares with weights `1/y_err²`, ignoring
/// `x_err`.
pub fn weighted_ols(points: &[RegressionPoint]) -> Result<RegressionResult> {
    check_points(points)?;
    if points.iter().any(|p| !(p.y_err > 0.0)) {
        return Err(invalid("weighted least squares needs positive y errors"));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let w = 1.0 / (p.y_err * p.y_err);
        s += w;
        sx += w * p.x;
        sy += w * p.y;
        sxx += w * p.x * p.x;
        sxy += w * p.x * p.y;
    }
    let delta = s * sxx - sx * sx;
    if !(delta > 0.0) {
        return Err(Error::Degenerate("x values carry no spread".into()));
    }
    let slope = (s * sxy - sx * sy) / delta;
    let intercept = (sxx * sy - sx * sxy) / delta;
    let chi2: f64 = points
        .iter()
        .map(|p| ((p.y - intercept - slope * p.x) / p.y_err).powi(2))
        .sum();
    Ok(RegressionResult {
        slope,
        intercept,
        slope_err: (s / delta).sqrt(),
        intercept_err: (sxx / delta).sqrt(),
        goodness: chi2 / (points.len() - 2) as f64,
        iterations: 0,
    })
}

/// One sample of an ensemble-energy versus strain dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSample {
    pub strain: StrainEstimate,
    /// Ensemble peak energy, meV.
    pub energy: f64,
    pub energy_err: f64,
}

/// Gauge factor as the York slope of ensemble energy against strain.
pub fn gauge_factor_fit(
    samples: &[GaugeSample],
    species: Species,
    material: &str,
    config: &YorkConfig,
) -> Result<(GaugeFactor, RegressionResult)> {
    let points: Vec<RegressionPoint> = samples
        .iter()
        .map(|s| RegressionPoint {
            x: s.strain.epsilon,
            x_err: s.strain.epsilon_err,
            y: s.energy,
            y_err: s.energy_err,
        })
        .collect();
    let fit = york_fit(&points, config)?;
    let gauge = GaugeFactor::new(fit.slope, fit.slope_err, species, material)?;
    Ok((gauge, fit))
}
