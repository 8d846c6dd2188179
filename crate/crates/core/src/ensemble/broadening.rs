use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::strain::ShiftMeasurement;

/// Linear growth of ensemble FWHM with strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningModel {
    /// meV per % strain.
    pub rate: f64,
    pub rate_err: f64,
    /// Zero-strain intercept, meV.
    pub omega0: f64,
    pub omega0_err: f64,
}

/// `Σ ΔE_i w_i / Σ w_i`, with unweighted shifts counting as weight 1.
pub fn weighted_mean_shift(shifts: &[ShiftMeasurement]) -> Result<f64> {
    if shifts.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut sw = 0.0;
    let mut swe = 0.0;
    for s in shifts {
        let w = s.effective_weight();
        if !(w > 0.0) {
            return Err(invalid("shift weights must be positive"));
        }
        sw += w;
        swe += w * s.delta_e;
    }
    if sw == 0.0 {
        return Err(invalid("zero total weight"));
    }
    Ok(swe / sw)
}

/// Ensemble broadening per % strain from the extremes of a shift
/// distribution: the largest blueshift plus the magnitude of the largest
/// redshift, divided by the strain that produced them.
pub fn broadening_rate(shifts: &[ShiftMeasurement], reference_strain: f64) -> Result<f64> {
    if shifts.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(reference_strain > 0.0) {
        return Err(invalid("reference strain must be positive"));
    }
    let max_blue = shifts.iter().map(|s| s.delta_e).fold(0.0, f64::max);
    let max_red = shifts.iter().map(|s| s.delta_e).fold(0.0, f64::min).abs();
    Ok((max_blue + max_red) / reference_strain)
}

/// Total ensemble broadening per meV of X0 shift.
pub fn broadening_per_x0_shift(total_broadening: f64, x0_shift: f64) -> Result<f64> {
    if x0_shift == 0.0 {
        return Err(invalid("X0 shift must be nonzero"));
    }
    Ok(total_broadening / x0_shift.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossMaterialBroadening {
    /// meV of ensemble broadening per meV of X0 shift in the target.
    pub per_x0_shift: f64,
    /// meV per % strain in the target.
    pub per_percent: f64,
}

/// Transfers a broadening rate to another material by the ratio of the QD
/// to X0 gauge-factor ratios, then converts to a per-% rate through the
/// target X0 gauge factor.
pub fn cross_material_broadening(
    rate_known: f64,
    ratio_known: f64,
    ratio_target: f64,
    x0_gauge_target: f64,
) -> Result<CrossMaterialBroadening> {
    if !(ratio_known > 0.0) || !(ratio_target > 0.0) {
        return Err(invalid("gauge ratios must be positive"));
    }
    if x0_gauge_target == 0.0 {
        return Err(invalid("target X0 gauge factor must be nonzero"));
    }
    let per_x0_shift = rate_known * ratio_target / ratio_known;
    Ok(CrossMaterialBroadening {
        per_x0_shift,
        per_percent: per_x0_shift * x0_gauge_target.abs(),
    })
}

pub fn predict_ensemble_fwhm(model: &BroadeningModel, strain: f64) -> Result<f64> {
    if !(strain >= 0.0) {
        return Err(invalid("strain must be non-negative"));
    }
    Ok(model.omega0 + model.rate * strain)
}

/// An ensemble linewidth observation at a given strain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BroadeningPoint {
    pub strain: f64,
    pub strain_err: f64,
    pub fwhm: f64,
    pub fwhm_err: f64,
}

/// Fits the intercept of `fwhm = ω0 + rate·ε` with the rate held fixed.
///
/// Each point is weighted by its effective variance
/// `fwhm_err² + rate²·strain_err²`; with no positive variances the fit is
/// unweighted and the error comes from the scatter.
pub fn fit_fixed_rate_intercept(points: &[BroadeningPoint], rate: f64, rate_err: f64) -> Result<BroadeningModel> {
    if points.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(rate >= 0.0) {
        return Err(invalid("broadening rate must be non-negative"));
    }
    let vars: Vec<f64> = points
        .iter()
        .map(|p| p.fwhm_err.powi(2) + (rate * p.strain_err).powi(2))
        .collect();
    let weighted = vars.iter().all(|v| *v > 0.0);
    let weights: Vec<f64> = vars.iter().map(|v| if weighted { 1.0 / v } else { 1.0 }).collect();
    let sw: f64 = weights.iter().sum();
    let omega0 = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * (p.fwhm - rate * p.strain))
        .sum::<f64>()
        / sw;
    let omega0_err = if weighted {
        (1.0 / sw).sqrt()
    } else if points.len() > 1 {
        let n = points.len() as f64;
        let ss: f64 = points.iter().map(|p| (p.fwhm - rate * p.strain - omega0).powi(2)).sum();
        (ss / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    if !(omega0 > 0.0) {
        return Err(Error::Degenerate(format!("non-positive intercept {omega0}")));
    }
    Ok(BroadeningModel {
        rate,
        rate_err,
        omega0,
        omega0_err,
    })
}

/// Fraction of strictly positive shifts. Zero shifts stay in the
/// denominator.
pub fn blueshift_fraction(shifts: &[ShiftMeasurement]) -> Result<f64> {
    if shifts.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let blue = shifts.iter().filter(|s| s.delta_e > 0.0).count();
    Ok(blue as f64 / shifts.len() as f64)
}
