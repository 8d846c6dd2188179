//! Energy-shift to strain conversion and uncertainty propagation.
//!
//! Sign conventions are fixed across the crate: tensile strain is positive,
//! a redshift is a negative energy shift, and gauge factors carry their sign
//! (negative when tensile strain redshifts the emission).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Average thermoelastic strain relaxation on cooling from 296 K to 4 K used
/// when no dataset-specific value is configured (%).
pub const DEFAULT_RELAXATION_PERCENT: f64 = -0.28;

/// Temperature assigned to strain estimates moved to cryogenic conditions.
pub const CRYO_TEMPERATURE_K: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    #[serde(rename = "QD")]
    Qd,
    X0,
}

/// Emission-energy shift per % biaxial strain (meV/%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeFactor {
    pub value: f64,
    /// 1σ uncertainty, meV/%.
    pub error: f64,
    pub species: Species,
    pub material: String,
}

impl GaugeFactor {
    pub fn new(value: f64, error: f64, species: Species, material: impl Into<String>) -> Result<Self> {
        if value == 0.0 || !value.is_finite() {
            return Err(invalid("gauge factor must be finite and nonzero"));
        }
        if !(error >= 0.0) {
            return Err(invalid("gauge factor error must be non-negative"));
        }
        Ok(GaugeFactor {
            value,
            error,
            species,
            material: material.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftContext {
    #[default]
    None,
    TemperaturePair { from_k: f64, to_k: f64 },
    PiezoField { kv_per_cm: f64 },
    Location { id: String },
}

/// Emission-energy shift against a reference (meV, redshift negative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftMeasurement {
    pub delta_e: f64,
    pub delta_e_err: f64,
    pub weight: Option<f64>,
    #[serde(default)]
    pub context: ShiftContext,
}

impl ShiftMeasurement {
    pub fn new(delta_e: f64, delta_e_err: f64) -> Result<Self> {
        if !delta_e.is_finite() {
            return Err(invalid("energy shift must be finite"));
        }
        if !(delta_e_err >= 0.0) {
            return Err(invalid("shift uncertainty must be non-negative"));
        }
        Ok(ShiftMeasurement {
            delta_e,
            delta_e_err,
            weight: None,
            context: ShiftContext::None,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(invalid("shift weight must be positive"));
        }
        self.weight = Some(weight);
        Ok(self)
    }

    pub fn with_context(mut self, context: ShiftContext) -> Self {
        self.context = context;
        self
    }

    /// Weight used in averages; unweighted measurements count as 1.
    pub fn effective_weight(&self) -> f64 {
        self.weight.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrainMethod {
    Pl,
    RamanLinear,
}

/// Biaxial strain in % (tensile positive) with its 1σ uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainEstimate {
    pub epsilon: f64,
    pub epsilon_err: f64,
    pub method: StrainMethod,
    pub temperature: Option<f64>,
    /// Shift-per-strain coefficient used for the conversion.
    pub coefficient: Option<f64>,
}

/// Relative uncertainty of `epsilon` from shift and gauge errors, combined
/// in quadrature. The result is non-negative regardless of sign conventions.
///
/// A zero shift with nonzero uncertainty has no defined relative error and
/// is rejected. A zero shift with zero uncertainty contributes nothing.
pub fn strain_error(epsilon: f64, delta_e: f64, delta_e_err: f64, gauge: f64, gauge_err: f64) -> Result<f64> {
    if gauge == 0.0 {
        return Err(invalid("gauge factor must be nonzero"));
    }
    if delta_e_err < 0.0 || gauge_err < 0.0 {
        return Err(invalid("uncertainties must be non-negative"));
    }
    let shift_term = if delta_e == 0.0 {
        if delta_e_err > 0.0 {
            return Err(Error::UndefinedRelativeError(delta_e_err));
        }
        0.0
    } else {
        delta_e_err / delta_e
    };
    let gauge_term = gauge_err / gauge;
    Ok(epsilon.abs() * shift_term.hypot(gauge_term))
}

/// Uncertainty of a difference of two independent energies.
pub fn shift_error_subtraction(err_a: f64, err_b: f64) -> Result<f64> {
    if err_a < 0.0 || err_b < 0.0 {
        return Err(invalid("uncertainties must be non-negative"));
    }
    Ok(err_a.hypot(err_b))
}

/// Converts an emission-energy shift to biaxial strain.
pub fn strain_from_shift(shift: &ShiftMeasurement, gauge: &GaugeFactor) -> Result<StrainEstimate> {
    if gauge.value == 0.0 {
        return Err(invalid("gauge factor must be nonzero"));
    }
    let epsilon = shift.delta_e / gauge.value;
    let epsilon_err = strain_error(epsilon, shift.delta_e, shift.delta_e_err, gauge.value, gauge.error)?;
    Ok(StrainEstimate {
        epsilon,
        epsilon_err,
        method: StrainMethod::Pl,
        temperature: None,
        coefficient: Some(gauge.value),
    })
}

/// Linear Raman-shift to strain conversion with a user-supplied coefficient
/// (cm⁻¹ per %). Errors propagate exactly as for PL shifts.
pub fn strain_from_raman_shift(
    raman_shift: f64,
    raman_shift_err: f64,
    coefficient: f64,
    coefficient_err: f64,
) -> Result<StrainEstimate> {
    if coefficient == 0.0 {
        return Err(invalid("Raman coefficient must be nonzero"));
    }
    let epsilon = raman_shift / coefficient;
    let epsilon_err = strain_error(epsilon, raman_shift, raman_shift_err, coefficient, coefficient_err)?;
    Ok(StrainEstimate {
        epsilon,
        epsilon_err,
        method: StrainMethod::RamanLinear,
        temperature: None,
        coefficient: Some(coefficient),
    })
}

/// Varshni band-gap temperature dependence `E(T) = E0 - αT²/(T + β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarshniParams {
    pub e0: f64,
    /// meV/K
    pub alpha: f64,
    /// K
    pub beta: f64,
}

impl VarshniParams {
    pub fn new(e0: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(invalid("Varshni beta must be positive"));
        }
        Ok(VarshniParams { e0, alpha, beta })
    }
}

pub fn varshni_energy(params: &VarshniParams, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(invalid("temperature must be non-negative"));
    }
    let t = temperature;
    Ok(params.e0 - params.alpha * t * t / (t + params.beta))
}

/// Expected shift `E(to) - E(from)` from the Varshni relation alone.
pub fn varshni_shift(params: &VarshniParams, from_k: f64, to_k: f64) -> Result<f64> {
    Ok(varshni_energy(params, to_k)? - varshni_energy(params, from_k)?)
}

/// Thermoelastic strain relaxation from the part of a measured cooling
/// shift that exceeds the Varshni expectation.
///
/// Returns `Δε = (ΔE_measured - ΔE_varshni) / G`; negative values mean the
/// tensile strain relaxed on cooling. The error follows [`strain_error`] on
/// the excess shift, so a zero excess with nonzero uncertainty is rejected.
pub fn decompose_temperature_shift(
    measured: &ShiftMeasurement,
    varshni_expected: f64,
    gauge_x0: &GaugeFactor,
) -> Result<StrainEstimate> {
    if gauge_x0.value == 0.0 {
        return Err(invalid("gauge factor must be nonzero"));
    }
    let excess = measured.delta_e - varshni_expected;
    let epsilon = excess / gauge_x0.value;
    let epsilon_err = strain_error(epsilon, excess, measured.delta_e_err, gauge_x0.value, gauge_x0.error)?;
    let temperature = match measured.context {
        ShiftContext::TemperaturePair { to_k, .. } => Some(to_k),
        _ => Some(CRYO_TEMPERATURE_K),
    };
    Ok(StrainEstimate {
        epsilon,
        epsilon_err,
        method: StrainMethod::Pl,
        temperature,
        coefficient: Some(gauge_x0.value),
    })
}

/// Shifts a room-temperature strain by a fixed relaxation offset. The
/// uncertainty is carried over unchanged.
pub fn apply_relaxation(epsilon_rt: &StrainEstimate, relaxation: f64) -> StrainEstimate {
    StrainEstimate {
        epsilon: epsilon_rt.epsilon + relaxation,
        temperature: Some(CRYO_TEMPERATURE_K),
        ..epsilon_rt.clone()
    }
}
