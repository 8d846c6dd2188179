use std::collections::BTreeMap;
use std::path::Path;

use qdstrain_core::ensemble::{
    blueshift_fraction, broadening_per_x0_shift, broadening_rate, build_histogram, cross_material_broadening,
    fit_fixed_rate_intercept, fit_gaussian_histogram, gauge_factor_fit, weighted_mean_shift, BroadeningModel,
    BroadeningPoint, CrossMaterialBroadening, EnsembleStats, GaugeSample, RegressionPoint, RegressionResult,
};
use qdstrain_core::strain::{GaugeFactor, ShiftMeasurement, Species, StrainEstimate, StrainMethod};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, EnergyError};
use crate::error::{CliError, Result};
use crate::io::{self, round_energy, single_input};
use crate::report::Report;
use crate::{Context, Outcome};

pub const COMMAND: &str = "ensemble";
pub const PIEZO_STAGE: &str = "piezo";
pub const GAUGE_FILE: &str = "gauge_fits.csv";
pub const BROADENING_FILE: &str = "broadening_fits.csv";

/// One QD emission energy. `center_meV` is accepted for tables written by
/// `fit-peaks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub sample: String,
    #[serde(default)]
    pub material: String,
    #[serde(rename = "energy_meV", alias = "center_meV")]
    pub energy: f64,
}

/// The columns of a per-sample strain table that `ensemble` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainInputRow {
    pub sample: String,
    #[serde(rename = "strain_pct")]
    pub strain: f64,
    #[serde(rename = "strain_err_pct")]
    pub strain_err: f64,
}

/// One emitter's shift at one piezo field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiezoRow {
    #[serde(rename = "field_kV_cm")]
    pub field: f64,
    pub emitter: String,
    pub species: Species,
    pub material: String,
    pub location_id: String,
    #[serde(rename = "delta_e_meV")]
    pub delta_e: f64,
    #[serde(rename = "delta_e_err_meV")]
    pub delta_e_err: f64,
    #[serde(default)]
    pub weight: Option<f64>,
}

pub const PIEZO_HEADER: [&str; 8] = [
    "field_kV_cm",
    "emitter",
    "species",
    "material",
    "location_id",
    "delta_e_meV",
    "delta_e_err_meV",
    "weight",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub sample: String,
    pub material: String,
    #[serde(rename = "bin_lo_meV")]
    pub bin_lo: f64,
    #[serde(rename = "bin_center_meV")]
    pub bin_center: f64,
    pub count: u64,
    /// Fitted Gaussian evaluated at the bin center.
    pub gaussian: Option<f64>,
}

pub const HISTOGRAM_HEADER: [&str; 6] = ["sample", "material", "bin_lo_meV", "bin_center_meV", "count", "gaussian"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEnsemble {
    pub sample: String,
    pub material: String,
    pub n_qds: usize,
    pub histogram: EnsembleStats,
    pub strain: Option<StrainInputRow>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeRegression {
    pub material: String,
    pub samples: Vec<String>,
    pub points: Vec<RegressionPoint>,
    pub gauge: GaugeFactor,
    pub fit: RegressionResult,
    /// Configured X0 gauge factor and the QD-to-X0 ratio, when available.
    pub x0_gauge: Option<GaugeFactor>,
    pub ratio_to_x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningFit {
    pub material: String,
    pub samples: Vec<String>,
    pub points: Vec<BroadeningPoint>,
    pub model: BroadeningModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStage {
    pub samples: Vec<SampleEnsemble>,
    pub gauges: Vec<GaugeRegression>,
    pub broadening: Vec<BroadeningFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResponse {
    pub field: f64,
    pub qd_weighted_mean: f64,
    pub x0_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMaterialEntry {
    pub target: String,
    pub estimate: CrossMaterialBroadening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiezoSummary {
    pub material: String,
    pub field_max: f64,
    pub n_qd: usize,
    pub n_x0: usize,
    pub blueshift_fraction: f64,
    pub qd_weighted_mean: f64,
    pub x0_weighted_mean: f64,
    /// Largest X0 shift magnitude at `field_max`, meV.
    pub x0_max_shift: f64,
    /// Strain implied by `x0_max_shift`, %.
    pub reference_strain: f64,
    pub max_blueshift: f64,
    pub max_redshift: f64,
    /// meV per %.
    pub broadening_rate: f64,
    /// meV of broadening per meV of X0 shift.
    pub broadening_per_x0_shift: f64,
    pub field_response: Vec<FieldResponse>,
    pub qd_shifts: Vec<ShiftMeasurement>,
    pub x0_shifts: Vec<ShiftMeasurement>,
    pub cross_material: Vec<CrossMaterialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeRow {
    pub material: String,
    pub n_samples: usize,
    #[serde(rename = "gauge_meV_per_pct")]
    pub gauge: f64,
    #[serde(rename = "gauge_err_meV_per_pct")]
    pub gauge_err: f64,
    #[serde(rename = "intercept_meV")]
    pub intercept: f64,
    #[serde(rename = "intercept_err_meV")]
    pub intercept_err: f64,
    pub reduced_chi2: f64,
    pub ratio_to_x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningRow {
    pub material: String,
    pub n_samples: usize,
    #[serde(rename = "rate_meV_per_pct")]
    pub rate: f64,
    #[serde(rename = "omega0_meV")]
    pub omega0: f64,
    #[serde(rename = "omega0_err_meV")]
    pub omega0_err: f64,
}

/// File-name-safe form of a sample tag.
pub fn histogram_file_name(sample: &str) -> String {
    let safe: String = sample
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("hist_{safe}.csv")
}

pub fn histogram_rows(sample: &str, material: &str, stats: &EnsembleStats) -> Vec<HistogramRow> {
    stats
        .bin_centers()
        .zip(&stats.counts)
        .zip(&stats.bin_edges)
        .map(|((center, &count), &lo)| HistogramRow {
            sample: sample.to_string(),
            material: material.to_string(),
            bin_lo: round_energy(lo),
            bin_center: round_energy(center),
            count,
            gaussian: stats.gaussian.as_ref().map(|g| g.eval(center)),
        })
        .collect()
}

/// Histogram of one sample with its Gaussian fit; a failed fit leaves the
/// histogram in place and is reported as a flag.
pub fn sample_histogram(cfg: &AnalysisConfig, material: &str, energies: &[f64]) -> Result<(EnsembleStats, Vec<String>)> {
    let stats = build_histogram(energies, cfg.bin_size(material), None)?;
    match fit_gaussian_histogram(&stats, cfg.histogram.weighting, &cfg.solver) {
        Ok(fitted) => {
            let flags = match &fitted.gaussian {
                Some(g) if !g.converged => vec!["gaussian fit did not converge".to_string()],
                _ => Vec::new(),
            };
            Ok((fitted, flags))
        }
        Err(e) => Ok((stats, vec![format!("gaussian fit skipped: {e}")])),
    }
}

pub fn run(ctx: &Context, energies_path: &Path, strain: Option<&Path>, piezo: Option<&Path>) -> Result<Outcome> {
    let cfg = &ctx.config;
    let rows: Vec<EnergyRow> = io::read_table(energies_path)?;
    if rows.is_empty() {
        return Err(CliError::input(energies_path, "no QD energies"));
    }
    let mut inputs = vec![io::digest_file(&single_input(energies_path))?];
    for p in [strain, piezo].into_iter().flatten() {
        inputs.push(io::digest_file(&single_input(p))?);
    }
    let strains: BTreeMap<String, StrainInputRow> = match strain {
        Some(p) => io::read_table::<StrainInputRow>(p)?
            .into_iter()
            .map(|r| (r.sample.clone(), r))
            .collect(),
        None => BTreeMap::new(),
    };

    let mut by_sample: BTreeMap<String, (String, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        let entry = by_sample.entry(r.sample.clone()).or_insert_with(|| (r.material.clone(), Vec::new()));
        if entry.0 != r.material {
            return Err(CliError::input(
                energies_path,
                format!("sample '{}' mixes materials '{}' and '{}'", r.sample, entry.0, r.material),
            ));
        }
        entry.1.push(r.energy);
    }

    let pool = ctx.pool()?;
    let histograms: Vec<Result<SampleEnsemble>> = pool.install(|| {
        by_sample
            .par_iter()
            .map(|(sample, (material, energies))| {
                let (histogram, flags) = sample_histogram(cfg, material, energies)?;
                Ok(SampleEnsemble {
                    sample: sample.clone(),
                    material: material.clone(),
                    n_qds: energies.len(),
                    histogram,
                    strain: strains.get(sample).cloned(),
                    flags,
                })
            })
            .collect()
    });
    let samples: Vec<SampleEnsemble> = histograms.into_iter().collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let mut written = Vec::new();
    for s in &samples {
        let path = ctx.output_dir.join(histogram_file_name(&s.sample));
        io::write_table(&path, &HISTOGRAM_HEADER, &histogram_rows(&s.sample, &s.material, &s.histogram))?;
        written.push(path);
        for f in &s.flags {
            warnings.push(format!("sample {}: {f}", s.sample));
        }
    }

    let mut gauges = Vec::new();
    let mut broadening = Vec::new();
    if strain.is_none() {
        warnings.push("no strain table given; regression stages skipped".into());
    } else {
        let mut by_material: BTreeMap<&str, Vec<&SampleEnsemble>> = BTreeMap::new();
        for s in &samples {
            by_material.entry(&s.material).or_default().push(s);
        }
        for (material, members) in by_material {
            let usable: Vec<&SampleEnsemble> = members
                .into_iter()
                .filter(|s| s.strain.is_some() && s.histogram.gaussian.is_some())
                .collect();
            if usable.len() < cfg.ensemble.min_samples {
                warnings.push(format!(
                    "{material}: {} sample(s) with strain and a Gaussian fit, {} needed; regression stages skipped",
                    usable.len(),
                    cfg.ensemble.min_samples
                ));
                continue;
            }
            match regress_gauge(cfg, material, &usable) {
                Ok(g) => gauges.push(g),
                Err(e) => warnings.push(format!("{material}: gauge regression failed: {e}")),
            }
            match cfg.broadening_rate(material) {
                Some(rate) => match fit_broadening(material, &usable, rate.rate, rate.rate_err) {
                    Ok(b) => broadening.push(b),
                    Err(e) => warnings.push(format!("{material}: broadening fit failed: {e}")),
                },
                None => warnings.push(format!("{material}: no broadening rate configured; intercept fit skipped")),
            }
        }
        let unmatched: Vec<&str> = samples.iter().filter(|s| s.strain.is_none()).map(|s| s.sample.as_str()).collect();
        if !unmatched.is_empty() {
            warnings.push(format!("no strain for sample(s) {}", unmatched.join(", ")));
        }
    }

    let gauge_rows: Vec<GaugeRow> = gauges
        .iter()
        .map(|g| GaugeRow {
            material: g.material.clone(),
            n_samples: g.samples.len(),
            gauge: g.fit.slope,
            gauge_err: g.fit.slope_err,
            intercept: round_energy(g.fit.intercept),
            intercept_err: round_energy(g.fit.intercept_err),
            reduced_chi2: g.fit.goodness,
            ratio_to_x0: g.ratio_to_x0,
        })
        .collect();
    let path = ctx.output_dir.join(GAUGE_FILE);
    io::write_table(
        &path,
        &["material", "n_samples", "gauge_meV_per_pct", "gauge_err_meV_per_pct", "intercept_meV", "intercept_err_meV", "reduced_chi2", "ratio_to_x0"],
        &gauge_rows,
    )?;
    written.push(path);
    let broadening_rows: Vec<BroadeningRow> = broadening
        .iter()
        .map(|b| BroadeningRow {
            material: b.material.clone(),
            n_samples: b.samples.len(),
            rate: b.model.rate,
            omega0: round_energy(b.model.omega0),
            omega0_err: round_energy(b.model.omega0_err),
        })
        .collect();
    let path = ctx.output_dir.join(BROADENING_FILE);
    io::write_table(&path, &["material", "n_samples", "rate_meV_per_pct", "omega0_meV", "omega0_err_meV"], &broadening_rows)?;
    written.push(path);

    let mut report = Report::new(cfg.hash(), inputs);
    report.insert_stage(
        COMMAND,
        &EnsembleStage {
            samples,
            gauges,
            broadening,
        },
    );
    if let Some(p) = piezo {
        let rows: Vec<PiezoRow> = io::read_table(p)?;
        let summary = summarize_piezo(cfg, p, &rows, &mut warnings)?;
        report.insert_stage(PIEZO_STAGE, &summary);
    }
    report.warnings = warnings.clone();
    written.push(report.write(&ctx.output_dir, COMMAND)?);
    Ok(Outcome::new(warnings, false, written))
}

fn regress_gauge(cfg: &AnalysisConfig, material: &str, samples: &[&SampleEnsemble]) -> Result<GaugeRegression> {
    let data: Vec<GaugeSample> = samples
        .iter()
        .map(|s| {
            let st = s.strain.as_ref().expect("filtered on strain");
            let g = s.histogram.gaussian.as_ref().expect("filtered on fit");
            let energy_err = match cfg.ensemble.energy_error {
                EnergyError::Fit => g.peak_energy_err(),
                EnergyError::HalfSigma => 0.5 * g.sigma(),
            };
            GaugeSample {
                strain: StrainEstimate {
                    epsilon: st.strain,
                    epsilon_err: st.strain_err,
                    method: StrainMethod::Pl,
                    temperature: None,
                    coefficient: None,
                },
                energy: g.peak_energy,
                energy_err,
            }
        })
        .collect();
    let (gauge, fit) = gauge_factor_fit(&data, Species::Qd, material, &cfg.york)?;
    let x0_gauge = cfg.gauge(material, Species::X0).ok();
    Ok(GaugeRegression {
        material: material.to_string(),
        samples: samples.iter().map(|s| s.sample.clone()).collect(),
        points: data
            .iter()
            .map(|d| RegressionPoint {
                x: d.strain.epsilon,
                x_err: d.strain.epsilon_err,
                y: d.energy,
                y_err: d.energy_err,
            })
            .collect(),
        ratio_to_x0: x0_gauge.as_ref().map(|x| gauge.value / x.value),
        gauge,
        fit,
        x0_gauge,
    })
}

fn fit_broadening(material: &str, samples: &[&SampleEnsemble], rate: f64, rate_err: f64) -> Result<BroadeningFit> {
    let points: Vec<BroadeningPoint> = samples
        .iter()
        .map(|s| {
            let st = s.strain.as_ref().expect("filtered on strain");
            let g = s.histogram.gaussian.as_ref().expect("filtered on fit");
            BroadeningPoint {
                strain: st.strain,
                strain_err: st.strain_err,
                fwhm: g.fwhm,
                fwhm_err: g.fwhm_err(),
            }
        })
        .collect();
    let model = fit_fixed_rate_intercept(&points, rate, rate_err)?;
    Ok(BroadeningFit {
        material: material.to_string(),
        samples: samples.iter().map(|s| s.sample.clone()).collect(),
        points,
        model,
    })
}

fn to_shift(r: &PiezoRow) -> qdstrain_core::Result<ShiftMeasurement> {
    let s = ShiftMeasurement::new(r.delta_e, r.delta_e_err)?;
    match r.weight {
        Some(w) => s.with_weight(w),
        None => Ok(s),
    }
}

fn summarize_piezo(cfg: &AnalysisConfig, path: &Path, rows: &[PiezoRow], warnings: &mut Vec<String>) -> Result<PiezoSummary> {
    let material = rows
        .first()
        .map(|r| r.material.clone())
        .ok_or_else(|| CliError::input(path, "piezo sweep is empty"))?;
    if rows.iter().any(|r| r.material != material) {
        return Err(CliError::input(path, "piezo sweep mixes materials"));
    }
    let field_max = rows.iter().map(|r| r.field.abs()).fold(0.0, f64::max);
    let mut fields: Vec<f64> = rows.iter().map(|r| r.field).collect();
    fields.sort_by(f64::total_cmp);
    fields.dedup();

    let shifts_at = |field: f64, species: Species| -> Result<Vec<ShiftMeasurement>> {
        rows.iter()
            .filter(|r| r.field == field && r.species == species)
            .map(|r| to_shift(r).map_err(|e| CliError::input(path, format!("emitter {}: {e}", r.emitter))))
            .collect()
    };
    let top = *fields
        .iter()
        .rfind(|f| f.abs() == field_max)
        .expect("at least one field");
    let qd = shifts_at(top, Species::Qd)?;
    let x0 = shifts_at(top, Species::X0)?;
    if qd.is_empty() || x0.is_empty() {
        return Err(CliError::input(path, "the largest field needs both QD and X0 shifts"));
    }

    let mut field_response = Vec::new();
    for &f in &fields {
        let (q, x) = (shifts_at(f, Species::Qd)?, shifts_at(f, Species::X0)?);
        if q.is_empty() || x.is_empty() {
            continue;
        }
        field_response.push(FieldResponse {
            field: f,
            qd_weighted_mean: weighted_mean_shift(&q)?,
            x0_mean: weighted_mean_shift(&x)?,
        });
    }

    let gauge_x0 = cfg.gauge(&material, Species::X0)?;
    let x0_max_shift = x0.iter().map(|s| s.delta_e.abs()).fold(0.0, f64::max);
    let reference_strain = x0_max_shift / gauge_x0.value.abs();
    let max_blueshift = qd.iter().map(|s| s.delta_e).fold(0.0, f64::max);
    let max_redshift = qd.iter().map(|s| s.delta_e).fold(0.0, f64::min);
    let rate = broadening_rate(&qd, reference_strain)?;
    let per_x0 = broadening_per_x0_shift(max_blueshift - max_redshift, x0_max_shift)?;

    let mut cross_material = Vec::new();
    match cfg.gauge(&material, Species::Qd) {
        Ok(gauge_qd) => {
            let ratio_known = gauge_qd.value / gauge_x0.value;
            let mut targets: Vec<&str> = cfg.gauges.iter().map(|g| g.material.as_str()).collect();
            targets.sort();
            targets.dedup();
            for target in targets.into_iter().filter(|t| *t != material) {
                let (Ok(tq), Ok(tx)) = (cfg.gauge(target, Species::Qd), cfg.gauge(target, Species::X0)) else {
                    continue;
                };
                let estimate = cross_material_broadening(per_x0, ratio_known, tq.value / tx.value, tx.value)?;
                cross_material.push(CrossMaterialEntry {
                    target: target.to_string(),
                    estimate,
                });
            }
        }
        Err(_) => warnings.push(format!("{material}: no QD gauge factor; cross-material broadening skipped")),
    }

    Ok(PiezoSummary {
        field_max: top,
        n_qd: qd.len(),
        n_x0: x0.len(),
        blueshift_fraction: blueshift_fraction(&qd)?,
        qd_weighted_mean: weighted_mean_shift(&qd)?,
        x0_weighted_mean: weighted_mean_shift(&x0)?,
        x0_max_shift,
        reference_strain,
        max_blueshift,
        max_redshift,
        broadening_rate: rate,
        broadening_per_x0_shift: per_x0,
        field_response,
        qd_shifts: qd,
        x0_shifts: x0,
        cross_material,
        material,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_names_are_sanitized() {
        assert_eq!(histogram_file_name("S1"), "hist_S1.csv");
        assert_eq!(histogram_file_name("a/b c"), "hist_a_b_c.csv");
    }

    fn piezo_rows() -> Vec<PiezoRow> {
        let mk = |field: f64, emitter: &str, species: Species, de: f64, w: Option<f64>| PiezoRow {
            field,
            emitter: emitter.into(),
            species,
            material: "WS2".into(),
            location_id: "0".into(),
            delta_e: de,
            delta_e_err: 0.1,
            weight: w,
        };
        vec![
            mk(0.0, "q0", Species::Qd, 0.0, Some(1.0)),
            mk(0.0, "q1", Species::Qd, 0.0, Some(1.0)),
            mk(0.0, "x", Species::X0, 0.0, None),
            mk(15.0, "q0", Species::Qd, 3.8, Some(1.0)),
            mk(15.0, "q1", Species::Qd, -1.6, Some(1.0)),
            mk(15.0, "x", Species::X0, 2.0, None),
        ]
    }

    #[test]
    fn piezo_arithmetic_chain() {
        let mut cfg = AnalysisConfig::default();
        for g in cfg.gauges.iter_mut().filter(|g| g.material == "WS2" && g.species == Species::X0) {
            g.value = -40.0;
        }
        let mut w = Vec::new();
        let s = summarize_piezo(&cfg, Path::new("p.csv"), &piezo_rows(), &mut w).unwrap();
        assert!((s.reference_strain - 0.05).abs() < 1e-12);
        assert!((s.broadening_rate - 108.0).abs() < 1e-9);
        assert!((s.broadening_per_x0_shift - 2.7).abs() < 1e-12);
        assert_eq!(s.field_response.len(), 2);
        assert_eq!(s.blueshift_fraction, 0.5);
        let wse2 = &s.cross_material[0];
        assert_eq!(wse2.target, "WSe2");
        // Ratios from the configured gauges: 149/40 and 275/152.8.
        let expect = 2.7 * (275.0 / 152.8) / (149.0 / 40.0);
        assert!((wse2.estimate.per_x0_shift - expect).abs() < 1e-9);
    }
}
