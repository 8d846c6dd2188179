//! Analysis configuration: material tables, stage switches and solver
//! settings, loaded from one JSON document.

use std::collections::BTreeMap;
use std::path::Path;

use qdstrain_core::ensemble::{HistogramWeighting, YorkConfig};
use qdstrain_core::nlls::SolverConfig;
use qdstrain_core::spectral::LineShape;
use qdstrain_core::strain::{GaugeFactor, Species, VarshniParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Configuration shipped with the tool.
pub const DEFAULT_CONFIG: &str = include_str!("../config/analysis.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seed: u64,
    pub gauges: Vec<GaugeEntry>,
    #[serde(default)]
    pub varshni: Vec<VarshniEntry>,
    /// Unstrained X0 energies used when no per-location reference is given.
    #[serde(default)]
    pub references: Vec<ReferenceEntry>,
    pub relaxation: RelaxationConfig,
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub broadening: Vec<BroadeningEntry>,
    #[serde(default)]
    pub raman: RamanConfig,
    #[serde(default)]
    pub peaks: PeakSearchConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub temperature: TemperatureClasses,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub york: YorkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeEntry {
    pub material: String,
    pub species: Species,
    /// meV/%.
    pub value: f64,
    pub error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarshniEntry {
    pub material: String,
    pub e0: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub material: String,
    pub temperature_k: f64,
    /// meV.
    pub energy: f64,
    pub error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    /// Strain change on cooling, %. Negative is tensile relaxation.
    pub value_percent: f64,
    /// Move room-temperature strains to cryogenic conditions with
    /// `value_percent` when no direct cryogenic estimate exists.
    pub apply: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub default_bin_size: f64,
    #[serde(default)]
    pub bin_sizes: BTreeMap<String, f64>,
    #[serde(default)]
    pub weighting: HistogramWeighting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningEntry {
    pub material: String,
    /// meV/%.
    pub rate: f64,
    pub rate_err: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanEntry {
    pub material: String,
    /// Mode shift per % strain, cm⁻¹/%.
    pub coefficient: f64,
    pub coefficient_err: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanConfig {
    #[serde(default)]
    pub coefficients: Vec<RamanEntry>,
    /// Largest accepted standard deviation of PL minus Raman strain, %.
    pub tolerance_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Default for RamanConfig {
    fn default() -> Self {
        RamanConfig {
            coefficients: Vec::new(),
            tolerance_pct: 0.18,
            source: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Selection {
    /// Most intense line.
    Strongest,
    /// Highest-energy line among those reaching
    /// `x0_min_relative_amplitude` of the strongest.
    HighestEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakSearchConfig {
    pub shape: LineShape,
    /// Minimum prominence as a fraction of the spectrum's intensity range.
    pub min_prominence_fraction: f64,
    /// meV.
    pub min_separation: f64,
    /// Fit half-window in units of the estimated FWHM.
    pub window_fwhm: f64,
    /// meV.
    pub min_half_width: f64,
    /// Only the most intense candidates are fitted.
    pub max_peaks: usize,
    pub x0_selection: X0Selection,
    pub x0_min_relative_amplitude: f64,
}

impl Default for PeakSearchConfig {
    fn default() -> Self {
        PeakSearchConfig {
            shape: LineShape::Gaussian,
            min_prominence_fraction: 0.1,
            min_separation: 1.0,
            window_fwhm: 1.5,
            min_half_width: 1.0,
            max_peaks: 64,
            x0_selection: X0Selection::HighestEnergy,
            x0_min_relative_amplitude: 0.2,
        }
    }
}

/// Uncertainty attached to an ensemble peak energy in the gauge regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyError {
    /// Standard error of the fitted Gaussian center.
    Fit,
    /// Half the fitted Gaussian standard deviation.
    HalfSigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub energy_error: EnergyError,
    /// Samples per material needed for the regression stages.
    pub min_samples: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            energy_error: EnergyError::Fit,
            min_samples: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemperatureClasses {
    /// Spectra at or below this temperature count as cryogenic.
    pub cryo_max_k: f64,
    /// Spectra at or above this temperature count as room temperature.
    pub room_min_k: f64,
    /// Nominal temperatures of the two classes.
    pub room_k: f64,
    pub cryo_k: f64,
}

impl Default for TemperatureClasses {
    fn default() -> Self {
        TemperatureClasses {
            cryo_max_k: 20.0,
            room_min_k: 250.0,
            room_k: 296.0,
            cryo_k: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureClass {
    Room,
    Cryo,
}

impl TemperatureClasses {
    /// Missing temperatures are taken as room temperature.
    pub fn classify(&self, temperature: Option<f64>) -> Option<TemperatureClass> {
        match temperature {
            None => Some(TemperatureClass::Room),
            Some(t) if t >= self.room_min_k => Some(TemperatureClass::Room),
            Some(t) if t <= self.cryo_max_k => Some(TemperatureClass::Cryo),
            Some(_) => None,
        }
    }

    pub fn nominal(&self, class: TemperatureClass) -> f64 {
        match class {
            TemperatureClass::Room => self.room_k,
            TemperatureClass::Cryo => self.cryo_k,
        }
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("shipped configuration parses")
    }
}

impl AnalysisConfig {
    /// Reads `path`, or the shipped default when `None`, and validates it.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config: AnalysisConfig = match path {
            None => AnalysisConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                serde_json::from_str(&text).map_err(|e| CliError::schema(p, e.line() as u64, e.to_string()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for g in &self.gauges {
            if !g.value.is_finite() || g.value == 0.0 || !(g.error >= 0.0) {
                return bad(format!("gauge for {} {:?} must be finite, nonzero, with error >= 0", g.material, g.species));
            }
        }
        for v in &self.varshni {
            VarshniParams::new(v.e0, v.alpha, v.beta).map_err(|e| CliError::Config(format!("Varshni {}: {e}", v.material)))?;
        }
        for r in &self.references {
            if !r.energy.is_finite() || !(r.energy > 0.0) || !(r.error >= 0.0) || !(r.temperature_k >= 0.0) {
                return bad(format!("reference for {} is out of range", r.material));
            }
        }
        if !(self.relaxation.value_percent.abs() <= 5.0) {
            return bad("relaxation must lie within ±5 %".into());
        }
        let sizes = std::iter::once(&self.histogram.default_bin_size).chain(self.histogram.bin_sizes.values());
        for b in sizes {
            if !(*b > 0.0) || !b.is_finite() {
                return bad("histogram bin sizes must be positive".into());
            }
        }
        for b in &self.broadening {
            if !(b.rate >= 0.0) || !(b.rate_err >= 0.0) {
                return bad(format!("broadening rate for {} must be non-negative", b.material));
            }
        }
        for r in &self.raman.coefficients {
            if !r.coefficient.is_finite() || r.coefficient == 0.0 || !(r.coefficient_err >= 0.0) {
                return bad(format!("Raman coefficient for {} must be finite and nonzero", r.material));
            }
        }
        if !(self.raman.tolerance_pct > 0.0) {
            return bad("Raman tolerance must be positive".into());
        }
        let p = &self.peaks;
        if !(p.min_prominence_fraction > 0.0 && p.min_prominence_fraction < 1.0) {
            return bad("min_prominence_fraction must lie in (0, 1)".into());
        }
        if !(p.min_separation > 0.0) || !(p.window_fwhm > 0.0) || !(p.min_half_width > 0.0) || p.max_peaks == 0 {
            return bad("peak search widths and counts must be positive".into());
        }
        if !(p.x0_min_relative_amplitude >= 0.0 && p.x0_min_relative_amplitude <= 1.0) {
            return bad("x0_min_relative_amplitude must lie in [0, 1]".into());
        }
        if self.ensemble.min_samples < 3 {
            return bad("ensemble.min_samples must be at least 3".into());
        }
        let t = &self.temperature;
        if !(t.cryo_max_k >= 0.0 && t.cryo_max_k < t.room_min_k) {
            return bad("temperature classes must satisfy 0 <= cryo_max_k < room_min_k".into());
        }
        self.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.york.max_iterations == 0 || !(self.york.tolerance > 0.0) {
            return bad("york settings must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        digest_json(self)
    }

    pub fn gauge(&self, material: &str, species: Species) -> Result<GaugeFactor> {
        let entry = self
            .gauges
            .iter()
            .find(|g| g.material == material && g.species == species)
            .ok_or_else(|| CliError::Config(format!("no {species:?} gauge factor for material '{material}'")))?;
        Ok(GaugeFactor::new(entry.value, entry.error, species, material)?)
    }

    pub fn varshni(&self, material: &str) -> Option<VarshniParams> {
        self.varshni
            .iter()
            .find(|v| v.material == material)
            .and_then(|v| VarshniParams::new(v.e0, v.alpha, v.beta).ok())
    }

    /// Closest configured reference for `material` in the same temperature
    /// class.
    pub fn reference(&self, material: &str, class: TemperatureClass) -> Option<&ReferenceEntry> {
        let nominal = self.temperature.nominal(class);
        self.references
            .iter()
            .filter(|r| r.material == material && self.temperature.classify(Some(r.temperature_k)) == Some(class))
            .min_by(|a, b| (a.temperature_k - nominal).abs().total_cmp(&(b.temperature_k - nominal).abs()))
    }

    pub fn bin_size(&self, material: &str) -> f64 {
        self.histogram
            .bin_sizes
            .get(material)
            .copied()
            .unwrap_or(self.histogram.default_bin_size)
    }

    pub fn broadening_rate(&self, material: &str) -> Option<&BroadeningEntry> {
        self.broadening.iter().find(|b| b.material == material)
    }

    pub fn raman_coefficient(&self, material: &str) -> Option<&RamanEntry> {
        self.raman.coefficients.iter().find(|r| r.material == material)
    }
}

/// SHA-256 hex digest of a value's compact JSON form.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_is_valid() {
        let c = AnalysisConfig::default();
        c.validate().unwrap();
        assert_eq!(c.relaxation.value_percent, -0.28);
        assert_eq!(c.gauge("WS2", Species::Qd).unwrap().value, -149.0);
        assert_eq!(c.bin_size("WS2"), 20.0);
        assert!(c.varshni.is_empty());
    }

    #[test]
    fn hash_ignores_formatting() {
        let a: AnalysisConfig = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        let compact = serde_json::to_string(&a).unwrap();
        let b: AnalysisConfig = serde_json::from_str(&compact).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 9;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn missing_gauge_is_a_config_error() {
        let c = AnalysisConfig::default();
        assert!(matches!(c.gauge("MoS2", Species::X0), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<AnalysisConfig>(v).is_err());
    }

    #[test]
    fn temperature_classes() {
        let t = TemperatureClasses::default();
        assert_eq!(t.classify(Some(4.0)), Some(TemperatureClass::Cryo));
        assert_eq!(t.classify(Some(296.0)), Some(TemperatureClass::Room));
        assert_eq!(t.classify(None), Some(TemperatureClass::Room));
        assert_eq!(t.classify(Some(90.0)), None);
    }
}
