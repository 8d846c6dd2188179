use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use qdstrain_core::strain::{
    apply_relaxation, decompose_temperature_shift, shift_error_subtraction, strain_from_raman_shift,
    strain_from_shift, varshni_shift, GaugeFactor, ShiftContext, ShiftMeasurement, Species, StrainEstimate,
};
use qdstrain_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use super::fit_peaks::PeakRow;
use crate::config::{AnalysisConfig, TemperatureClass, X0Selection};
use crate::error::{CliError, Result};
use crate::io::{self, round_energy_opt, single_input};
use crate::report::Report;
use crate::{Context, Outcome};

pub const COMMAND: &str = "strain_map";
pub const LOCATIONS_FILE: &str = "strain_map.csv";
pub const SUMMARY_FILE: &str = "strain_summary.csv";

/// Reference X0 energy for one location, or for a whole sample when
/// `location_id` is `*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub sample: String,
    pub location_id: String,
    #[serde(rename = "temperature_K", default)]
    pub temperature_k: Option<f64>,
    #[serde(rename = "reference_meV")]
    pub reference: f64,
    #[serde(rename = "reference_err_meV")]
    pub reference_err: f64,
}

/// Room-temperature Raman mode shift relative to the unstrained mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanRow {
    pub sample: String,
    pub location_id: String,
    pub raman_shift_cm1: f64,
    pub raman_shift_err_cm1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub error: f64,
}

/// X0 shift against its reference and the resulting strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStrain {
    pub reference: Measured,
    pub delta_e: Measured,
    pub strain: f64,
    /// `None` when the relative error is undefined (zero shift, nonzero
    /// uncertainty).
    pub strain_err: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryoBasis {
    /// Measured against a cryogenic reference.
    Direct,
    /// Room-temperature strain plus the configured relaxation.
    Relaxed,
}

/// Measured X0 shift on cooling, its Varshni expectation and the implied
/// strain relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingShift {
    pub measured: Measured,
    pub varshni: f64,
    pub relaxation: f64,
    pub relaxation_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanComparison {
    pub strain: f64,
    pub strain_err: Option<f64>,
    /// PL minus Raman strain, %.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationStrain {
    pub sample: String,
    pub location_id: String,
    pub material: String,
    pub x0_room: Option<Measured>,
    pub x0_cryo: Option<Measured>,
    pub room: Option<ClassStrain>,
    pub cryo_direct: Option<ClassStrain>,
    pub cryo_strain: Option<f64>,
    pub cryo_strain_err: Option<f64>,
    pub cryo_basis: Option<CryoBasis>,
    pub cooling: Option<CoolingShift>,
    pub raman: Option<RamanComparison>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation across locations.
    pub spread: f64,
    /// Uncertainty of the mean: location scatter over sqrt(n) combined with
    /// the gauge-factor error, which does not average out.
    pub mean_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingSummary {
    pub n: usize,
    pub mean_shift: Measured,
    pub varshni: f64,
    pub relaxation: f64,
    pub relaxation_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStrain {
    pub sample: String,
    pub material: String,
    pub n_locations: usize,
    pub room: Option<StrainStats>,
    pub cryo: Option<StrainStats>,
    pub cooling: Option<CoolingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanCheck {
    pub n: usize,
    pub mean_difference: f64,
    pub std_difference: Option<f64>,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainMapStage {
    pub locations: Vec<LocationStrain>,
    pub samples: Vec<SampleStrain>,
    pub raman: Option<RamanCheck>,
    pub relaxation_percent: f64,
    pub relaxation_applied: bool,
}

/// Per-location output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainRow {
    pub sample: String,
    pub location_id: String,
    pub material: String,
    #[serde(rename = "x0_rt_meV")]
    pub x0_rt: Option<f64>,
    #[serde(rename = "x0_rt_err_meV")]
    pub x0_rt_err: Option<f64>,
    #[serde(rename = "delta_e_rt_meV")]
    pub delta_e_rt: Option<f64>,
    #[serde(rename = "delta_e_rt_err_meV")]
    pub delta_e_rt_err: Option<f64>,
    #[serde(rename = "strain_rt_pct")]
    pub strain_rt: Option<f64>,
    #[serde(rename = "strain_rt_err_pct")]
    pub strain_rt_err: Option<f64>,
    #[serde(rename = "x0_cryo_meV")]
    pub x0_cryo: Option<f64>,
    #[serde(rename = "x0_cryo_err_meV")]
    pub x0_cryo_err: Option<f64>,
    #[serde(rename = "strain_cryo_pct")]
    pub strain_cryo: Option<f64>,
    #[serde(rename = "strain_cryo_err_pct")]
    pub strain_cryo_err: Option<f64>,
    pub cryo_basis: Option<CryoBasis>,
    #[serde(rename = "cooling_shift_meV")]
    pub cooling_shift: Option<f64>,
    #[serde(rename = "varshni_shift_meV")]
    pub varshni_shift: Option<f64>,
    #[serde(rename = "relaxation_pct")]
    pub relaxation: Option<f64>,
    #[serde(rename = "relaxation_err_pct")]
    pub relaxation_err: Option<f64>,
    #[serde(rename = "raman_strain_pct")]
    pub raman_strain: Option<f64>,
    pub flags: String,
}

const STRAIN_HEADER: [&str; 20] = [
    "sample",
    "location_id",
    "material",
    "x0_rt_meV",
    "x0_rt_err_meV",
    "delta_e_rt_meV",
    "delta_e_rt_err_meV",
    "strain_rt_pct",
    "strain_rt_err_pct",
    "x0_cryo_meV",
    "x0_cryo_err_meV",
    "strain_cryo_pct",
    "strain_cryo_err_pct",
    "cryo_basis",
    "cooling_shift_meV",
    "varshni_shift_meV",
    "relaxation_pct",
    "relaxation_err_pct",
    "raman_strain_pct",
    "flags",
];

/// Per-sample strain table consumed by `ensemble`. `strain_pct` is the
/// cryogenic value when one exists, else the room-temperature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainSummaryRow {
    pub sample: String,
    pub material: String,
    pub n: usize,
    #[serde(rename = "strain_rt_pct")]
    pub strain_rt: Option<f64>,
    #[serde(rename = "strain_rt_err_pct")]
    pub strain_rt_err: Option<f64>,
    #[serde(rename = "spread_rt_pct")]
    pub spread_rt: Option<f64>,
    #[serde(rename = "strain_pct")]
    pub strain: f64,
    #[serde(rename = "strain_err_pct")]
    pub strain_err: f64,
    #[serde(rename = "spread_pct")]
    pub spread: Option<f64>,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    #[serde(rename = "cooling_shift_meV")]
    pub cooling_shift: Option<f64>,
    #[serde(rename = "cooling_shift_err_meV")]
    pub cooling_shift_err: Option<f64>,
    #[serde(rename = "varshni_shift_meV")]
    pub varshni_shift: Option<f64>,
    #[serde(rename = "relaxation_pct")]
    pub relaxation: Option<f64>,
    #[serde(rename = "relaxation_err_pct")]
    pub relaxation_err: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "sample",
    "material",
    "n",
    "strain_rt_pct",
    "strain_rt_err_pct",
    "spread_rt_pct",
    "strain_pct",
    "strain_err_pct",
    "spread_pct",
    "temperature_K",
    "cooling_shift_meV",
    "cooling_shift_err_meV",
    "varshni_shift_meV",
    "relaxation_pct",
    "relaxation_err_pct",
];

/// Picks the X0 line among the peaks of one location and temperature class.
fn select_x0<'a>(rows: &[&'a PeakRow], selection: X0Selection, min_relative: f64) -> Option<&'a PeakRow> {
    let by_amplitude = |a: &&&PeakRow, b: &&&PeakRow| a.amplitude.total_cmp(&b.amplitude).then(b.center.total_cmp(&a.center));
    let strongest = *rows.iter().max_by(by_amplitude)?;
    match selection {
        X0Selection::Strongest => Some(strongest),
        X0Selection::HighestEnergy => rows
            .iter()
            .filter(|r| r.amplitude >= min_relative * strongest.amplitude)
            .max_by(|a, b| a.center.total_cmp(&b.center))
            .copied(),
    }
}

/// Strain for an X0 energy against a reference. An undefined relative error
/// keeps the strain value and reports the error as missing.
fn class_strain(
    x0: Measured,
    reference: Measured,
    gauge: &GaugeFactor,
    temperature: f64,
    location: &str,
) -> Result<(ClassStrain, Option<String>)> {
    let delta = x0.value - reference.value;
    let err = shift_error_subtraction(x0.error, reference.error)?;
    let shift = ShiftMeasurement::new(delta, err)?.with_context(ShiftContext::Location { id: location.into() });
    let (strain, strain_err, flag) = match strain_from_shift(&shift, gauge) {
        Ok(est) => (est.epsilon, Some(est.epsilon_err), None),
        Err(e @ CoreError::UndefinedRelativeError(_)) => {
            (delta / gauge.value, None, Some(format!("at {temperature} K: {e}")))
        }
        Err(e) => return Err(e.into()),
    };
    Ok((
        ClassStrain {
            reference,
            delta_e: Measured { value: delta, error: err },
            strain,
            strain_err,
        },
        flag,
    ))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn strain_stats(values: &[(f64, Option<f64>)], gauge: &GaugeFactor) -> Option<StrainStats> {
    if values.is_empty() {
        return None;
    }
    let v: Vec<f64> = values.iter().map(|p| p.0).collect();
    let (m, spread) = (mean(&v), sample_std(&v));
    let mean_err = if v.len() >= 2 {
        let systematic = m.abs() * gauge.error / gauge.value.abs();
        (spread / (v.len() as f64).sqrt()).hypot(systematic)
    } else {
        values[0].1.unwrap_or(f64::NAN)
    };
    Some(StrainStats {
        n: v.len(),
        mean: m,
        spread,
        mean_err,
    })
}

struct LocationInput<'a> {
    material: String,
    peaks: BTreeMap<TemperatureClass, Vec<&'a PeakRow>>,
}

fn lookup_reference(
    refs: &[ReferenceRow],
    cfg: &AnalysisConfig,
    sample: &str,
    location: &str,
    material: &str,
    class: TemperatureClass,
) -> Option<Measured> {
    let in_class = |r: &&ReferenceRow| cfg.temperature.classify(r.temperature_k) == Some(class) && r.sample == sample;
    refs.iter()
        .filter(in_class)
        .find(|r| r.location_id == location)
        .or_else(|| refs.iter().filter(in_class).find(|r| r.location_id == "*"))
        .map(|r| Measured {
            value: r.reference,
            error: r.reference_err,
        })
        .or_else(|| {
            cfg.reference(material, class).map(|r| Measured {
                value: r.energy,
                error: r.error,
            })
        })
}

pub fn run(ctx: &Context, peaks_path: &Path, references: Option<&Path>, raman: Option<&Path>) -> Result<Outcome> {
    let cfg = &ctx.config;
    let rows: Vec<PeakRow> = io::read_table(peaks_path)?;
    let refs: Vec<ReferenceRow> = match references {
        Some(p) => io::read_table(p)?,
        None => Vec::new(),
    };
    let raman_rows: Vec<RamanRow> = match raman {
        Some(p) => io::read_table(p)?,
        None => Vec::new(),
    };
    let mut inputs = vec![io::digest_file(&single_input(peaks_path))?];
    for p in [references, raman].into_iter().flatten() {
        inputs.push(io::digest_file(&single_input(p))?);
    }

    let mut warnings = Vec::new();
    let mut skipped_temperatures = 0usize;
    let mut groups: BTreeMap<(String, String), LocationInput> = BTreeMap::new();
    for row in &rows {
        let Some(class) = cfg.temperature.classify(row.temperature_k) else {
            skipped_temperatures += 1;
            continue;
        };
        let entry = groups
            .entry((row.sample.clone(), row.location_id.clone()))
            .or_insert_with(|| LocationInput {
                material: row.material.clone(),
                peaks: BTreeMap::new(),
            });
        if entry.material != row.material {
            return Err(CliError::input(
                peaks_path,
                format!(
                    "location {}/{} mixes materials '{}' and '{}'",
                    row.sample, row.location_id, entry.material, row.material
                ),
            ));
        }
        entry.peaks.entry(class).or_default().push(row);
    }
    if skipped_temperatures > 0 {
        warnings.push(format!(
            "{skipped_temperatures} peak(s) at temperatures outside the room and cryogenic classes were ignored"
        ));
    }
    if groups.is_empty() {
        return Err(CliError::input(peaks_path, "no peaks at room or cryogenic temperature"));
    }

    let t = &cfg.temperature;
    let mut missing_varshni = BTreeSet::new();
    let mut locations = Vec::new();
    for ((sample, location_id), input) in &groups {
        let material = &input.material;
        let gauge = cfg.gauge(material, Species::X0)?;
        let mut loc = LocationStrain {
            sample: sample.clone(),
            location_id: location_id.clone(),
            material: material.clone(),
            x0_room: None,
            x0_cryo: None,
            room: None,
            cryo_direct: None,
            cryo_strain: None,
            cryo_strain_err: None,
            cryo_basis: None,
            cooling: None,
            raman: None,
            flags: Vec::new(),
        };
        for (&class, peaks) in &input.peaks {
            let Some(x0) = select_x0(peaks, cfg.peaks.x0_selection, cfg.peaks.x0_min_relative_amplitude) else {
                continue;
            };
            if !x0.flags.is_empty() {
                loc.flags.push(format!("X0 fit at {} meV flagged: {}", x0.center, x0.flags));
            }
            let measured = Measured {
                value: x0.center,
                error: x0.center_err,
            };
            let strain = match lookup_reference(&refs, cfg, sample, location_id, material, class) {
                Some(reference) => {
                    let (s, flag) = class_strain(measured, reference, &gauge, t.nominal(class), location_id)?;
                    loc.flags.extend(flag);
                    Some(s)
                }
                None => None,
            };
            match class {
                TemperatureClass::Room => {
                    loc.x0_room = Some(measured);
                    loc.room = strain;
                }
                TemperatureClass::Cryo => {
                    loc.x0_cryo = Some(measured);
                    loc.cryo_direct = strain;
                }
            }
        }
        if loc.room.is_none() && loc.cryo_direct.is_none() {
            return Err(CliError::input(
                peaks_path,
                format!("location {sample}/{location_id} ({material}) has no reference energy"),
            ));
        }
        if let Some(direct) = &loc.cryo_direct {
            loc.cryo_strain = Some(direct.strain);
            loc.cryo_strain_err = direct.strain_err;
            loc.cryo_basis = Some(CryoBasis::Direct);
        } else if let (true, Some(room)) = (cfg.relaxation.apply, &loc.room) {
            let est = StrainEstimate {
                epsilon: room.strain,
                epsilon_err: room.strain_err.unwrap_or(f64::NAN),
                method: qdstrain_core::strain::StrainMethod::Pl,
                temperature: Some(t.room_k),
                coefficient: Some(gauge.value),
            };
            let relaxed = apply_relaxation(&est, cfg.relaxation.value_percent);
            loc.cryo_strain = Some(relaxed.epsilon);
            loc.cryo_strain_err = room.strain_err.map(|_| relaxed.epsilon_err);
            loc.cryo_basis = Some(CryoBasis::Relaxed);
        }
        if let (Some(rt), Some(cold)) = (loc.x0_room, loc.x0_cryo) {
            match cfg.varshni(material) {
                Some(v) => {
                    let measured = Measured {
                        value: cold.value - rt.value,
                        error: shift_error_subtraction(cold.error, rt.error)?,
                    };
                    let expected = varshni_shift(&v, t.room_k, t.cryo_k)?;
                    let shift = ShiftMeasurement::new(measured.value, measured.error)?
                        .with_context(ShiftContext::TemperaturePair { from_k: t.room_k, to_k: t.cryo_k });
                    let (relaxation, relaxation_err) = match decompose_temperature_shift(&shift, expected, &gauge) {
                        Ok(est) => (est.epsilon, Some(est.epsilon_err)),
                        Err(e @ CoreError::UndefinedRelativeError(_)) => {
                            loc.flags.push(format!("cooling decomposition: {e}"));
                            ((measured.value - expected) / gauge.value, None)
                        }
                        Err(e) => return Err(e.into()),
                    };
                    loc.cooling = Some(CoolingShift {
                        measured,
                        varshni: expected,
                        relaxation,
                        relaxation_err,
                    });
                }
                None => {
                    missing_varshni.insert(material.clone());
                }
            }
        }
        locations.push(loc);
    }
    for m in &missing_varshni {
        warnings.push(format!("no Varshni parameters for {m}; cooling decomposition skipped"));
    }

    let raman_check = match raman {
        Some(p) => cross_check_raman(cfg, p, &raman_rows, &mut locations, &mut warnings)?,
        None => None,
    };
    let samples = summarize(cfg, &locations)?;

    let stage = StrainMapStage {
        locations,
        samples,
        raman: raman_check,
        relaxation_percent: cfg.relaxation.value_percent,
        relaxation_applied: cfg.relaxation.apply,
    };
    let flagged = stage.locations.iter().any(|l| !l.flags.is_empty());
    if flagged {
        let n = stage.locations.iter().filter(|l| !l.flags.is_empty()).count();
        warnings.push(format!("{n} location(s) carry flags"));
    }

    let loc_path = ctx.output_dir.join(LOCATIONS_FILE);
    io::write_table(&loc_path, &STRAIN_HEADER, &location_rows(&stage.locations))?;
    let sum_path = ctx.output_dir.join(SUMMARY_FILE);
    io::write_table(&sum_path, &SUMMARY_HEADER, &summary_rows(cfg, &stage.samples))?;
    let mut report = Report::new(cfg.hash(), inputs);
    report.insert_stage(COMMAND, &stage);
    report.warnings = warnings.clone();
    let report_path = report.write(&ctx.output_dir, COMMAND)?;
    Ok(Outcome::new(warnings, flagged, vec![loc_path, sum_path, report_path]))
}

fn cross_check_raman(
    cfg: &AnalysisConfig,
    path: &Path,
    rows: &[RamanRow],
    locations: &mut [LocationStrain],
    warnings: &mut Vec<String>,
) -> Result<Option<RamanCheck>> {
    let mut diffs = Vec::new();
    let mut unmatched = 0usize;
    for row in rows {
        let Some(loc) = locations
            .iter_mut()
            .find(|l| l.sample == row.sample && l.location_id == row.location_id)
        else {
            unmatched += 1;
            continue;
        };
        let Some(room) = &loc.room else {
            unmatched += 1;
            continue;
        };
        let coef = cfg
            .raman_coefficient(&loc.material)
            .ok_or_else(|| CliError::Config(format!("no Raman coefficient for material '{}'", loc.material)))?;
        let (strain, strain_err) =
            match strain_from_raman_shift(row.raman_shift_cm1, row.raman_shift_err_cm1, coef.coefficient, coef.coefficient_err) {
                Ok(est) => (est.epsilon, Some(est.epsilon_err)),
                Err(CoreError::UndefinedRelativeError(_)) => (row.raman_shift_cm1 / coef.coefficient, None),
                Err(e) => return Err(CliError::input(path, e.to_string())),
            };
        let difference = room.strain - strain;
        diffs.push(difference);
        loc.raman = Some(RamanComparison {
            strain,
            strain_err,
            difference,
        });
    }
    if unmatched > 0 {
        warnings.push(format!("{unmatched} Raman row(s) matched no location with a room-temperature strain"));
    }
    if diffs.is_empty() {
        warnings.push("Raman cross-check has no matched locations".into());
        return Ok(None);
    }
    let std = (diffs.len() >= 2).then(|| sample_std(&diffs));
    let tolerance = cfg.raman.tolerance_pct;
    let within = std.is_some_and(|s| s <= tolerance);
    match std {
        None => warnings.push("Raman cross-check needs at least two locations for a spread".into()),
        Some(s) if s > tolerance => warnings.push(format!(
            "PL and Raman strains differ by {s:.4} % (std), above the {tolerance} % tolerance"
        )),
        Some(_) => {}
    }
    Ok(Some(RamanCheck {
        n: diffs.len(),
        mean_difference: mean(&diffs),
        std_difference: std,
        tolerance,
        within_tolerance: within,
    }))
}

fn summarize(cfg: &AnalysisConfig, locations: &[LocationStrain]) -> Result<Vec<SampleStrain>> {
    let mut by_sample: BTreeMap<&str, Vec<&LocationStrain>> = BTreeMap::new();
    for l in locations {
        by_sample.entry(&l.sample).or_default().push(l);
    }
    let mut out = Vec::new();
    for (sample, locs) in by_sample {
        let material = &locs[0].material;
        if locs.iter().any(|l| &l.material != material) {
            return Err(CliError::Config(format!("sample '{sample}' mixes materials")));
        }
        let gauge = cfg.gauge(material, Species::X0)?;
        let room: Vec<(f64, Option<f64>)> = locs.iter().filter_map(|l| l.room.as_ref().map(|r| (r.strain, r.strain_err))).collect();
        let cryo: Vec<(f64, Option<f64>)> = locs.iter().filter_map(|l| l.cryo_strain.map(|s| (s, l.cryo_strain_err))).collect();
        let cooling: Vec<&CoolingShift> = locs.iter().filter_map(|l| l.cooling.as_ref()).collect();
        let cooling = if cooling.is_empty() {
            None
        } else {
            let shifts: Vec<f64> = cooling.iter().map(|c| c.measured.value).collect();
            let mean_shift = Measured {
                value: mean(&shifts),
                error: if shifts.len() >= 2 {
                    sample_std(&shifts) / (shifts.len() as f64).sqrt()
                } else {
                    cooling[0].measured.error
                },
            };
            let varshni = cooling[0].varshni;
            let shift = ShiftMeasurement::new(mean_shift.value, mean_shift.error)?;
            let (relaxation, relaxation_err) = match decompose_temperature_shift(&shift, varshni, &gauge) {
                Ok(est) => (est.epsilon, Some(est.epsilon_err)),
                Err(CoreError::UndefinedRelativeError(_)) => ((mean_shift.value - varshni) / gauge.value, None),
                Err(e) => return Err(e.into()),
            };
            Some(CoolingSummary {
                n: shifts.len(),
                mean_shift,
                varshni,
                relaxation,
                relaxation_err,
            })
        };
        out.push(SampleStrain {
            sample: sample.to_string(),
            material: material.clone(),
            n_locations: locs.len(),
            room: strain_stats(&room, &gauge),
            cryo: strain_stats(&cryo, &gauge),
            cooling,
        });
    }
    Ok(out)
}

fn location_rows(locations: &[LocationStrain]) -> Vec<StrainRow> {
    locations
        .iter()
        .map(|l| StrainRow {
            sample: l.sample.clone(),
            location_id: l.location_id.clone(),
            material: l.material.clone(),
            x0_rt: round_energy_opt(l.x0_room.map(|m| m.value)),
            x0_rt_err: round_energy_opt(l.x0_room.map(|m| m.error)),
            delta_e_rt: round_energy_opt(l.room.as_ref().map(|r| r.delta_e.value)),
            delta_e_rt_err: round_energy_opt(l.room.as_ref().map(|r| r.delta_e.error)),
            strain_rt: l.room.as_ref().map(|r| r.strain),
            strain_rt_err: l.room.as_ref().and_then(|r| r.strain_err),
            x0_cryo: round_energy_opt(l.x0_cryo.map(|m| m.value)),
            x0_cryo_err: round_energy_opt(l.x0_cryo.map(|m| m.error)),
            strain_cryo: l.cryo_strain,
            strain_cryo_err: l.cryo_strain_err,
            cryo_basis: l.cryo_basis,
            cooling_shift: round_energy_opt(l.cooling.as_ref().map(|c| c.measured.value)),
            varshni_shift: round_energy_opt(l.cooling.as_ref().map(|c| c.varshni)),
            relaxation: l.cooling.as_ref().map(|c| c.relaxation),
            relaxation_err: l.cooling.as_ref().and_then(|c| c.relaxation_err),
            raman_strain: l.raman.as_ref().map(|r| r.strain),
            flags: l.flags.join(";"),
        })
        .collect()
}

/// Summary rows; samples with no usable strain are left out.
pub fn summary_rows(cfg: &AnalysisConfig, samples: &[SampleStrain]) -> Vec<StrainSummaryRow> {
    samples
        .iter()
        .filter_map(|s| {
            let (chosen, temperature) = match (&s.cryo, &s.room) {
                (Some(c), _) => (c, cfg.temperature.cryo_k),
                (None, Some(r)) => (r, cfg.temperature.room_k),
                (None, None) => return None,
            };
            Some(StrainSummaryRow {
                sample: s.sample.clone(),
                material: s.material.clone(),
                n: chosen.n,
                strain_rt: s.room.as_ref().map(|r| r.mean),
                strain_rt_err: s.room.as_ref().map(|r| r.mean_err),
                spread_rt: s.room.as_ref().map(|r| r.spread),
                strain: chosen.mean,
                strain_err: chosen.mean_err,
                spread: Some(chosen.spread),
                temperature_k: temperature,
                cooling_shift: round_energy_opt(s.cooling.as_ref().map(|c| c.mean_shift.value)),
                cooling_shift_err: round_energy_opt(s.cooling.as_ref().map(|c| c.mean_shift.error)),
                varshni_shift: round_energy_opt(s.cooling.as_ref().map(|c| c.varshni)),
                relaxation: s.cooling.as_ref().map(|c| c.relaxation),
                relaxation_err: s.cooling.as_ref().and_then(|c| c.relaxation_err),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use qdstrain_core::spectral::LineShape;

    fn peak(center: f64, amplitude: f64) -> PeakRow {
        PeakRow {
            spectrum: "s".into(),
            sample: "S".into(),
            location_id: "L".into(),
            material: "WS2".into(),
            temperature_k: Some(4.0),
            piezo_field: None,
            peak: 0,
            center,
            center_err: 0.01,
            fwhm: 1.0,
            fwhm_err: 0.01,
            amplitude,
            amplitude_err: 1.0,
            area: 1.0,
            baseline: 0.0,
            shape: LineShape::Gaussian,
            flags: String::new(),
        }
    }

    #[test]
    fn x0_selection_rules() {
        let rows = [peak(1950.0, 900.0), peak(2070.0, 300.0), peak(2080.0, 50.0)];
        let refs: Vec<&PeakRow> = rows.iter().collect();
        assert_eq!(select_x0(&refs, X0Selection::Strongest, 0.2).unwrap().center, 1950.0);
        assert_eq!(select_x0(&refs, X0Selection::HighestEnergy, 0.2).unwrap().center, 2070.0);
        assert_eq!(select_x0(&refs, X0Selection::HighestEnergy, 0.0).unwrap().center, 2080.0);
    }

    #[test]
    fn zero_shift_with_error_keeps_zero_strain_and_flags() {
        let g = GaugeFactor::new(-38.2, 3.82, Species::X0, "WS2").unwrap();
        let m = Measured { value: 2000.0, error: 0.1 };
        let (s, flag) = class_strain(m, Measured { value: 2000.0, error: 0.0 }, &g, 296.0, "L").unwrap();
        assert_eq!(s.strain, 0.0);
        assert!(s.strain_err.is_none());
        assert!(flag.is_some());
        let (s, flag) = class_strain(Measured { value: 2000.0, error: 0.0 }, Measured { value: 2000.0, error: 0.0 }, &g, 296.0, "L").unwrap();
        assert_eq!((s.strain, s.strain_err, flag), (0.0, Some(0.0), None));
    }

    #[test]
    fn stats_combine_scatter_and_gauge_error() {
        let g = GaugeFactor::new(-40.0, 4.0, Species::X0, "WS2").unwrap();
        let s = strain_stats(&[(0.4, Some(0.05)), (0.6, Some(0.05))], &g).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-12);
        let spread = 0.2f64 / 2f64.sqrt();
        assert!((s.spread - spread).abs() < 1e-12);
        let expect = (spread / 2f64.sqrt()).hypot(0.05);
        assert!((s.mean_err - expect).abs() < 1e-12);
    }
}
