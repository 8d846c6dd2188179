//! O'Donnell-Chen exciton-phonon model
//! `E(T) = E0 - S <ħω> [coth(<ħω> / 2 k_B T) - 1]`.
//!
//! The bracket is evaluated as `2 / expm1(<ħω> / k_B T)`, which stays finite
//! for any temperature; below [`ZERO_TEMPERATURE_LIMIT`] the T → 0 limit is
//! used directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nlls::{nlls_solve, ParamBound, Residuals, SolverConfig};

/// Boltzmann constant, meV/K.
pub const BOLTZMANN_MEV_PER_K: f64 = 0.086_173_3;

/// Temperatures below this (K) evaluate as T = 0.
pub const ZERO_TEMPERATURE_LIMIT: f64 = 1e-3;

/// Condition number of the scaled normal matrix above which a fit is
/// reported as degenerate.
pub const DEGENERACY_CONDITION: f64 = 1e8;

const MIN_TEMPERATURES: usize = 4;
const MIN_SPAN_K: f64 = 20.0;
const INITIAL_PHONON_ENERGY: f64 = 13.0;

/// Physical constants entering the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub k_b: f64,
}

impl PhysicalConstants {
    pub const STANDARD: PhysicalConstants = PhysicalConstants {
        k_b: BOLTZMANN_MEV_PER_K,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Emitter {
    Qd(String),
    X0,
}

impl Emitter {
    /// Parses an emitter tag: `X0` (any case) is the delocalised exciton,
    /// anything else is a quantum dot id.
    pub fn from_tag(tag: &str) -> Self {
        if tag.eq_ignore_ascii_case("x0") {
            Emitter::X0
        } else {
            Emitter::Qd(tag.to_string())
        }
    }

    pub fn tag(&self) -> &str {
        match self {
            Emitter::Qd(id) => id,
            Emitter::X0 => "X0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhononFlag {
    NonConvergence,
    /// Scaled normal matrix condition number above [`DEGENERACY_CONDITION`].
    Degenerate,
}

/// Parameters of the O'Donnell-Chen model with their covariance, ordered
/// (E0, S, <ħω>).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhononFit {
    pub e0: f64,
    pub huang_rhys: f64,
    pub phonon_energy: f64,
    pub covariance: [[f64; 3]; 3],
    pub emitter: Emitter,
    #[serde(default)]
    pub flags: Vec<PhononFlag>,
    #[serde(default)]
    pub condition_number: Option<f64>,
}

impl PhononFit {
    /// Exact parameters without uncertainty, e.g. ground truth.
    pub fn exact(e0: f64, huang_rhys: f64, phonon_energy: f64, emitter: Emitter) -> Result<Self> {
        if !(huang_rhys >= 0.0) {
            return Err(invalid("Huang-Rhys factor must be non-negative"));
        }
        if !(phonon_energy > 0.0) {
            return Err(invalid("phonon energy must be positive"));
        }
        Ok(PhononFit {
            e0,
            huang_rhys,
            phonon_energy,
            covariance: [[0.0; 3]; 3],
            emitter,
            flags: Vec::new(),
            condition_number: None,
        })
    }

    pub fn e0_err(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn huang_rhys_err(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }

    pub fn phonon_energy_err(&self) -> f64 {
        self.covariance[2][2].max(0.0).sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.flags.contains(&PhononFlag::Degenerate)
    }
}

/// `coth(ħω/2kT) - 1` written as `2 / expm1(ħω/kT)`.
fn occupation_term(phonon_energy: f64, temperature: f64, k_b: f64) -> f64 {
    if temperature < ZERO_TEMPERATURE_LIMIT {
        return 0.0;
    }
    2.0 / (phonon_energy / (k_b * temperature)).exp_m1()
}

/// Model value and gradient with respect to (E0, S, <ħω>).
pub fn odonnell_value_and_grad(e0: f64, s: f64, hw: f64, temperature: f64) -> (f64, [f64; 3]) {
    let k_b = BOLTZMANN_MEV_PER_K;
    if temperature < ZERO_TEMPERATURE_LIMIT {
        return (e0, [1.0, 0.0, 0.0]);
    }
    let u = hw / (k_b * temperature);
    // g = 1 / (e^u - 1); vanishes smoothly when e^u overflows.
    let g = 1.0 / u.exp_m1();
    let value = e0 - 2.0 * s * hw * g;
    let d_s = -2.0 * hw * g;
    let d_hw = if g == 0.0 {
        0.0
    } else {
        -2.0 * s * (g - u * (g + g * g))
    };
    (value, [1.0, d_s, d_hw])
}

/// Emission energy at `temperature`.
pub fn odonnell_energy(fit: &PhononFit, temperature: f64) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(invalid("temperature must be non-negative"));
    }
    Ok(fit.e0 - fit.huang_rhys * fit.phonon_energy * occupation_term(fit.phonon_energy, temperature, BOLTZMANN_MEV_PER_K))
}

/// `dE/dT`; tends to `-2 S k_B` at high temperature.
pub fn odonnell_slope(fit: &PhononFit, temperature: f64) -> f64 {
    if temperature < ZERO_TEMPERATURE_LIMIT {
        return 0.0;
    }
    let u = fit.phonon_energy / (BOLTZMANN_MEV_PER_K * temperature);
    let g = 1.0 / u.exp_m1();
    -2.0 * fit.huang_rhys * fit.phonon_energy * (g + g * g) * u / temperature
}

/// Temperature-induced shift `E(T) - E0` (≤ 0 for S > 0).
pub fn delta_e_at(fit: &PhononFit, temperature: f64) -> Result<f64> {
    Ok(odonnell_energy(fit, temperature)? - fit.e0)
}

/// One point of a temperature series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePoint {
    pub temperature: f64,
    pub energy: f64,
    pub energy_err: Option<f64>,
}

/// Weighted residuals of the model against a series.
#[derive(Debug, Clone)]
pub struct OdonnellProblem {
    temperatures: Vec<f64>,
    energies: Vec<f64>,
    inv_sigma: Vec<f64>,
}

impl OdonnellProblem {
    /// Weights are `1/E_err` per point when every point carries a positive
    /// error, otherwise the fit is unweighted.
    pub fn new(series: &[TemperaturePoint]) -> Self {
        let weighted = series.iter().all(|p| p.energy_err.is_some_and(|e| e > 0.0));
        OdonnellProblem {
            temperatures: series.iter().map(|p| p.temperature).collect(),
            energies: series.iter().map(|p| p.energy).collect(),
            inv_sigma: series
                .iter()
                .map(|p| if weighted { 1.0 / p.energy_err.unwrap() } else { 1.0 })
                .collect(),
        }
    }
}

impl Residuals for OdonnellProblem {
    fn num_params(&self) -> usize {
        3
    }

    fn num_residuals(&self) -> usize {
        self.temperatures.len()
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.temperatures.len(),
            self.temperatures
                .iter()
                .zip(&self.energies)
                .zip(&self.inv_sigma)
                .map(|((&t, &e), &w)| (odonnell_value_and_grad(p[0], p[1], p[2], t).0 - e) * w),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.temperatures.len(), 3);
        for (i, (&t, &w)) in self.temperatures.iter().zip(&self.inv_sigma).enumerate() {
            let (_, g) = odonnell_value_and_grad(p[0], p[1], p[2], t);
            for k in 0..3 {
                jac[(i, k)] = g[k] * w;
            }
        }
        jac
    }
}

/// Fits (E0, S, <ħω>) to a temperature series.
///
/// Starts from E0 = highest energy, <ħω> = 13 meV and S inverted from the
/// shift of the hottest point at that <ħω>. Requires at least four distinct
/// temperatures spanning 20 K.
pub fn fit_odonnell(series: &[TemperaturePoint], emitter: Emitter, config: &SolverConfig) -> Result<PhononFit> {
    let mut temps: Vec<f64> = series.iter().map(|p| p.temperature).collect();
    if temps.iter().chain(series.iter().map(|p| &p.energy)).any(|v| !v.is_finite()) {
        return Err(invalid("temperature series contains non-finite values"));
    }
    if temps.iter().any(|t| *t < 0.0) {
        return Err(invalid("negative temperature in series"));
    }
    temps.sort_by(|a, b| a.total_cmp(b));
    temps.dedup();
    if temps.len() < MIN_TEMPERATURES {
        return Err(Error::InsufficientData {
            needed: MIN_TEMPERATURES,
            got: temps.len(),
        });
    }
    let span = temps[temps.len() - 1] - temps[0];
    if span < MIN_SPAN_K {
        return Err(Error::Degenerate(format!(
            "temperature span {span} K is below {MIN_SPAN_K} K"
        )));
    }

    let e0 = series.iter().map(|p| p.energy).fold(f64::NEG_INFINITY, f64::max);
    let hottest = series
        .iter()
        .max_by(|a, b| a.temperature.total_cmp(&b.temperature))
        .expect("non-empty series");
    let per_s = INITIAL_PHONON_ENERGY * occupation_term(INITIAL_PHONON_ENERGY, hottest.temperature, BOLTZMANN_MEV_PER_K);
    let s0 = if per_s > 0.0 {
        ((e0 - hottest.energy) / per_s).max(0.0)
    } else {
        0.0
    };
    let initial = DVector::from_vec(vec![e0, s0, INITIAL_PHONON_ENERGY]);

    let mut bounds = vec![
        ParamBound::FREE,
        ParamBound::at_least(0.0),
        ParamBound::at_least(1e-3),
    ];
    if let Some(user) = &config.parameter_bounds {
        if user.len() != 3 {
            return Err(invalid("O'Donnell-Chen fit takes 3 parameter bounds"));
        }
        bounds = bounds.iter().zip(user).map(|(a, b)| a.intersect(b)).collect();
    }

    let problem = OdonnellProblem::new(series);
    let sol = nlls_solve(&problem, &initial, &config.with_bounds(bounds))?;
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sol.covariance[(i, j)];
        }
    }
    let mut flags = Vec::new();
    if !sol.converged {
        flags.push(PhononFlag::NonConvergence);
    }
    if !(sol.condition_number <= DEGENERACY_CONDITION) {
        flags.push(PhononFlag::Degenerate);
    }
    Ok(PhononFit {
        e0: sol.params[0],
        huang_rhys: sol.params[1],
        phonon_energy: sol.params[2],
        covariance,
        emitter,
        flags,
        condition_number: Some(sol.condition_number),
    })
}

/// Trend of coupling strength with zero-temperature emission energy across
/// a QD population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementTrend {
    /// Least-squares slope of S against E0 (1/meV).
    pub s_slope: f64,
    /// Spearman rank correlation of S with E0; `None` when undefined.
    pub rank_correlation: Option<f64>,
    /// Least-squares slope of ΔE(40 K) against E0 (dimensionless).
    pub delta_e40_slope: f64,
    /// Set when the E0 values carry no spread or the correlation is undefined.
    pub degenerate: bool,
}

/// Temperature at which shifts are compared across emitters.
pub const TREND_TEMPERATURE_K: f64 = 40.0;

pub fn confinement_trend(fits: &[PhononFit]) -> Result<ConfinementTrend> {
    if fits.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: fits.len(),
        });
    }
    let e0: Vec<f64> = fits.iter().map(|f| f.e0).collect();
    let s: Vec<f64> = fits.iter().map(|f| f.huang_rhys).collect();
    let de: Vec<f64> = fits
        .iter()
        .map(|f| delta_e_at(f, TREND_TEMPERATURE_K))
        .collect::<Result<_>>()?;
    let s_slope = ls_slope(&e0, &s);
    let delta_e40_slope = ls_slope(&e0, &de);
    let rank_correlation = spearman(&e0, &s);
    Ok(ConfinementTrend {
        degenerate: s_slope.is_none() || rank_correlation.is_none(),
        s_slope: s_slope.unwrap_or(0.0),
        delta_e40_slope: delta_e40_slope.unwrap_or(0.0),
        rank_correlation,
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Average ranks (1-based), ties share their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x0() -> PhononFit {
        PhononFit::exact(1750.0, 2.29, 13.35, Emitter::X0).unwrap()
    }

    #[test]
    fn zero_temperature_is_e0() {
        assert_eq!(odonnell_energy(&x0(), 0.0).unwrap(), 1750.0);
        assert_eq!(odonnell_energy(&x0(), 5e-4).unwrap(), 1750.0);
        assert_eq!(delta_e_at(&x0(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn shift_at_40_kelvin() {
        let de = delta_e_at(&x0(), 40.0).unwrap();
        assert!((de + 1.30).abs() <= 0.01, "{de}");
    }

    #[test]
    fn decoupled_limit() {
        let f = PhononFit::exact(1700.0, 0.0, 13.35, Emitter::X0).unwrap();
        for t in [1.0, 50.0, 300.0] {
            assert_eq!(odonnell_energy(&f, t).unwrap(), 1700.0);
        }
    }

    #[test]
    fn tiny_temperature_does_not_overflow() {
        let f = PhononFit::exact(1700.0, 2.0, 30.0, Emitter::X0).unwrap();
        for t in [2e-3, 0.01, 0.1] {
            let (v, g) = odonnell_value_and_grad(f.e0, f.huang_rhys, f.phonon_energy, t);
            assert!(v.is_finite() && g.iter().all(|x| x.is_finite()));
            assert_eq!(v, 1700.0);
        }
    }

    #[test]
    fn high_temperature_slope() {
        let slope = odonnell_slope(&x0(), 500.0);
        let asymptote = -2.0 * 2.29 * BOLTZMANN_MEV_PER_K;
        assert!((asymptote + 0.3947).abs() < 1e-4);
        assert!(((slope - asymptote) / asymptote).abs() < 0.01, "{slope}");
    }

    #[test]
    fn slope_matches_finite_difference() {
        let f = x0();
        for t in [3.0, 20.0, 90.0, 300.0] {
            let h = 1e-4;
            let fd = (odonnell_energy(&f, t + h).unwrap() - odonnell_energy(&f, t - h).unwrap()) / (2.0 * h);
            assert!((odonnell_slope(&f, t) - fd).abs() < 1e-7 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn rejects_short_or_narrow_series() {
        let pts: Vec<TemperaturePoint> = [5.0, 10.0, 15.0]
            .iter()
            .map(|&t| TemperaturePoint {
                temperature: t,
                energy: 1750.0,
                energy_err: None,
            })
            .collect();
        assert!(matches!(
            fit_odonnell(&pts, Emitter::X0, &SolverConfig::default()),
            Err(Error::InsufficientData { .. })
        ));
        let pts: Vec<TemperaturePoint> = [5.0, 10.0, 15.0, 20.0]
            .iter()
            .map(|&t| TemperaturePoint {
                temperature: t,
                energy: 1750.0,
                energy_err: None,
            })
            .collect();
        assert!(matches!(
            fit_odonnell(&pts, Emitter::X0, &SolverConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn spearman_ties_and_degenerate() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn emitter_tags() {
        assert_eq!(Emitter::from_tag("x0"), Emitter::X0);
        assert_eq!(Emitter::from_tag("QD3"), Emitter::Qd("QD3".into()));
        assert_eq!(Emitter::from_tag("QD3").tag(), "QD3");
    }
}
