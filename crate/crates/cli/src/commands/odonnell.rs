use std::collections::BTreeMap;
use std::path::Path;

use qdstrain_core::phonon::{
    confinement_trend, delta_e_at, fit_odonnell, odonnell_energy, ConfinementTrend, Emitter, PhononFit,
    TemperaturePoint, TREND_TEMPERATURE_K,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{self, round_energy, single_input};
use crate::report::Report;
use crate::{Context, Outcome};

pub const COMMAND: &str = "odonnell";
pub const FITS_FILE: &str = "odonnell_fits.csv";
pub const DELTA_FILE: &str = "delta_e.csv";

/// One point of an emitter's temperature series. The emitter tag `X0` marks
/// the delocalised exciton; any other tag is a QD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub emitter: String,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    #[serde(rename = "energy_err_meV", default)]
    pub energy_err: Option<f64>,
}

pub const TEMPERATURE_HEADER: [&str; 4] = ["emitter", "temperature_K", "energy_meV", "energy_err_meV"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterResult {
    pub emitter: Emitter,
    pub points: Vec<TemperaturePoint>,
    pub fit: Option<PhononFit>,
    /// ΔE at the comparison temperature from the fitted model, meV.
    pub delta_e40: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdonnellStage {
    pub emitters: Vec<EmitterResult>,
    pub trend: Option<ConfinementTrend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub emitter: String,
    #[serde(rename = "e0_meV")]
    pub e0: Option<f64>,
    #[serde(rename = "e0_err_meV")]
    pub e0_err: Option<f64>,
    pub huang_rhys: Option<f64>,
    pub huang_rhys_err: Option<f64>,
    #[serde(rename = "phonon_energy_meV")]
    pub phonon_energy: Option<f64>,
    #[serde(rename = "phonon_energy_err_meV")]
    pub phonon_energy_err: Option<f64>,
    #[serde(rename = "delta_e40_meV")]
    pub delta_e40: Option<f64>,
    pub condition_number: Option<f64>,
    pub flags: String,
}

pub const FIT_HEADER: [&str; 10] = [
    "emitter",
    "e0_meV",
    "e0_err_meV",
    "huang_rhys",
    "huang_rhys_err",
    "phonon_energy_meV",
    "phonon_energy_err_meV",
    "delta_e40_meV",
    "condition_number",
    "flags",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub emitter: String,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    /// Measured energy minus fitted E0.
    #[serde(rename = "delta_e_meV")]
    pub delta_e: f64,
    #[serde(rename = "model_delta_e_meV")]
    pub model_delta_e: f64,
}

pub const DELTA_HEADER: [&str; 5] = ["emitter", "temperature_K", "energy_meV", "delta_e_meV", "model_delta_e_meV"];

fn flag_names(fit: &PhononFit) -> Vec<String> {
    fit.flags
        .iter()
        .map(|f| match serde_json::to_value(f) {
            Ok(serde_json::Value::String(s)) => s,
            _ => "unknown".into(),
        })
        .collect()
}

fn fit_emitter(emitter: Emitter, points: Vec<TemperaturePoint>, ctx: &Context) -> EmitterResult {
    match fit_odonnell(&points, emitter.clone(), &ctx.config.solver) {
        Ok(fit) => {
            let flags = flag_names(&fit);
            let delta_e40 = delta_e_at(&fit, TREND_TEMPERATURE_K).ok();
            EmitterResult {
                emitter,
                points,
                fit: Some(fit),
                delta_e40,
                flags,
            }
        }
        Err(e) => EmitterResult {
            emitter,
            points,
            fit: None,
            delta_e40: None,
            flags: vec![format!("fit failed: {e}")],
        },
    }
}

pub fn fit_rows(emitters: &[EmitterResult]) -> Vec<FitRow> {
    emitters
        .iter()
        .map(|e| FitRow {
            emitter: e.emitter.tag().to_string(),
            e0: e.fit.as_ref().map(|f| round_energy(f.e0)),
            e0_err: e.fit.as_ref().map(|f| round_energy(f.e0_err())),
            huang_rhys: e.fit.as_ref().map(|f| f.huang_rhys),
            huang_rhys_err: e.fit.as_ref().map(|f| f.huang_rhys_err()),
            phonon_energy: e.fit.as_ref().map(|f| round_energy(f.phonon_energy)),
            phonon_energy_err: e.fit.as_ref().map(|f| round_energy(f.phonon_energy_err())),
            delta_e40: e.delta_e40.map(round_energy),
            condition_number: e.fit.as_ref().and_then(|f| f.condition_number),
            flags: e.flags.join(";"),
        })
        .collect()
}

/// Measured and modelled shifts from E0 for every fitted emitter, sorted by
/// temperature within each emitter.
pub fn delta_rows(emitters: &[EmitterResult]) -> Result<Vec<DeltaRow>> {
    let mut rows = Vec::new();
    for e in emitters {
        let Some(fit) = &e.fit else { continue };
        let mut points = e.points.clone();
        points.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        for p in points {
            let model = odonnell_energy(fit, p.temperature)? - fit.e0;
            rows.push(DeltaRow {
                emitter: e.emitter.tag().to_string(),
                temperature_k: p.temperature,
                energy: round_energy(p.energy),
                delta_e: round_energy(p.energy - fit.e0),
                model_delta_e: round_energy(model),
            });
        }
    }
    Ok(rows)
}

pub fn run(ctx: &Context, series_path: &Path) -> Result<Outcome> {
    let rows: Vec<TemperatureRow> = io::read_table(series_path)?;
    if rows.is_empty() {
        return Err(CliError::input(series_path, "temperature series is empty"));
    }
    let mut groups: BTreeMap<String, Vec<TemperaturePoint>> = BTreeMap::new();
    for r in &rows {
        groups.entry(r.emitter.clone()).or_default().push(TemperaturePoint {
            temperature: r.temperature_k,
            energy: r.energy,
            energy_err: r.energy_err,
        });
    }
    let pool = ctx.pool()?;
    let emitters: Vec<EmitterResult> = pool.install(|| {
        groups
            .into_par_iter()
            .map(|(tag, points)| fit_emitter(Emitter::from_tag(&tag), points, ctx))
            .collect()
    });

    let mut warnings = Vec::new();
    let qd_fits: Vec<PhononFit> = emitters
        .iter()
        .filter(|e| matches!(e.emitter, Emitter::Qd(_)))
        .filter_map(|e| e.fit.clone())
        .collect();
    let trend = if qd_fits.len() >= 3 {
        match confinement_trend(&qd_fits) {
            Ok(t) => {
                if t.degenerate {
                    warnings.push("confinement trend is degenerate".into());
                }
                Some(t)
            }
            Err(e) => {
                warnings.push(format!("confinement trend not computed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let flagged = emitters.iter().filter(|e| !e.flags.is_empty()).count();
    if flagged > 0 {
        warnings.push(format!("{flagged} of {} emitter fits carry flags", emitters.len()));
    }

    let fit_rows = fit_rows(&emitters);
    let delta_rows = delta_rows(&emitters)?;

    let fits_path = ctx.output_dir.join(FITS_FILE);
    io::write_table(&fits_path, &FIT_HEADER, &fit_rows)?;
    let delta_path = ctx.output_dir.join(DELTA_FILE);
    io::write_table(&delta_path, &DELTA_HEADER, &delta_rows)?;
    let stage = OdonnellStage { emitters, trend };
    let mut report = Report::new(ctx.config.hash(), vec![io::digest_file(&single_input(series_path))?]);
    report.insert_stage(COMMAND, &stage);
    report.warnings = warnings.clone();
    let report_path = report.write(&ctx.output_dir, COMMAND)?;
    Ok(Outcome::new(warnings, flagged > 0, vec![fits_path, delta_path, report_path]))
}
