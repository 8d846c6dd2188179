use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ensemble::{self as ens, histogram_rows, EnsembleStage, PiezoSummary, HISTOGRAM_HEADER};
use super::odonnell::{self as odo, OdonnellStage, DELTA_HEADER, FIT_HEADER};
use super::strain_map::{self as sm, StrainMapStage};
use crate::error::{CliError, Result};
use crate::io::{self, round_energy, round_energy_opt};
use crate::report::{stage_error, Report};
use crate::{Context, Outcome};

/// One file per reproduced figure panel group.
pub const PLOT_FILES: [&str; 10] = [
    "fig1g.csv",
    "fig2c.csv",
    "fig2d.csv",
    "fig3ab.csv",
    "fig3c.csv",
    "fig3de.csv",
    "fig4d.csv",
    "fig4e.csv",
    "fig5cd.csv",
    "fig5ef.csv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingRow {
    pub sample: String,
    pub location_id: String,
    #[serde(rename = "x0_rt_meV")]
    pub x0_rt: Option<f64>,
    #[serde(rename = "x0_cryo_meV")]
    pub x0_cryo: Option<f64>,
    #[serde(rename = "cooling_shift_meV")]
    pub cooling_shift: f64,
    #[serde(rename = "cooling_shift_err_meV")]
    pub cooling_shift_err: f64,
    #[serde(rename = "varshni_shift_meV")]
    pub varshni_shift: f64,
    #[serde(rename = "relaxation_pct")]
    pub relaxation: f64,
    #[serde(rename = "relaxation_err_pct")]
    pub relaxation_err: Option<f64>,
}

const COOLING_HEADER: [&str; 9] = [
    "sample",
    "location_id",
    "x0_rt_meV",
    "x0_cryo_meV",
    "cooling_shift_meV",
    "cooling_shift_err_meV",
    "varshni_shift_meV",
    "relaxation_pct",
    "relaxation_err_pct",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStrainRow {
    pub sample: String,
    pub material: String,
    pub n_locations: usize,
    #[serde(rename = "strain_rt_pct")]
    pub strain_rt: Option<f64>,
    #[serde(rename = "strain_rt_err_pct")]
    pub strain_rt_err: Option<f64>,
    #[serde(rename = "strain_cryo_pct")]
    pub strain_cryo: Option<f64>,
    #[serde(rename = "strain_cryo_err_pct")]
    pub strain_cryo_err: Option<f64>,
    #[serde(rename = "relaxation_pct")]
    pub relaxation: Option<f64>,
    #[serde(rename = "relaxation_err_pct")]
    pub relaxation_err: Option<f64>,
}

const SAMPLE_STRAIN_HEADER: [&str; 9] = [
    "sample",
    "material",
    "n_locations",
    "strain_rt_pct",
    "strain_rt_err_pct",
    "strain_cryo_pct",
    "strain_cryo_err_pct",
    "relaxation_pct",
    "relaxation_err_pct",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugePointRow {
    pub material: String,
    pub sample: String,
    #[serde(rename = "strain_pct")]
    pub strain: f64,
    #[serde(rename = "strain_err_pct")]
    pub strain_err: f64,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    #[serde(rename = "energy_err_meV")]
    pub energy_err: f64,
    #[serde(rename = "fit_energy_meV")]
    pub fit_energy: f64,
}

const GAUGE_POINT_HEADER: [&str; 7] = [
    "material",
    "sample",
    "strain_pct",
    "strain_err_pct",
    "energy_meV",
    "energy_err_meV",
    "fit_energy_meV",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeCompareRow {
    pub material: String,
    pub species: String,
    #[serde(rename = "gauge_meV_per_pct")]
    pub gauge: f64,
    #[serde(rename = "gauge_err_meV_per_pct")]
    pub gauge_err: f64,
}

const GAUGE_COMPARE_HEADER: [&str; 4] = ["material", "species", "gauge_meV_per_pct", "gauge_err_meV_per_pct"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningPlotRow {
    pub material: String,
    pub sample: String,
    #[serde(rename = "strain_pct")]
    pub strain: f64,
    #[serde(rename = "strain_err_pct")]
    pub strain_err: f64,
    #[serde(rename = "fwhm_meV")]
    pub fwhm: f64,
    #[serde(rename = "fwhm_err_meV")]
    pub fwhm_err: f64,
    #[serde(rename = "model_fwhm_meV")]
    pub model_fwhm: f64,
    #[serde(rename = "omega0_meV")]
    pub omega0: f64,
    #[serde(rename = "omega0_err_meV")]
    pub omega0_err: f64,
    #[serde(rename = "rate_meV_per_pct")]
    pub rate: f64,
}

const BROADENING_HEADER: [&str; 10] = [
    "material",
    "sample",
    "strain_pct",
    "strain_err_pct",
    "fwhm_meV",
    "fwhm_err_meV",
    "model_fwhm_meV",
    "omega0_meV",
    "omega0_err_meV",
    "rate_meV_per_pct",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    #[serde(rename = "field_kV_cm")]
    pub field: f64,
    #[serde(rename = "qd_weighted_mean_meV")]
    pub qd_weighted_mean: f64,
    #[serde(rename = "x0_mean_meV")]
    pub x0_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub species: String,
    pub index: usize,
    #[serde(rename = "delta_e_meV")]
    pub delta_e: f64,
    #[serde(rename = "delta_e_err_meV")]
    pub delta_e_err: f64,
    pub weight: Option<f64>,
}

/// Report files named on the command line; directories contribute their
/// `report_*.json` files in name order.
pub fn expand_reports(args: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for arg in args {
        if arg.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(arg)
                .map_err(CliError::io(arg))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
                })
                .collect();
            if found.is_empty() {
                return Err(CliError::input(arg, "directory holds no report_*.json files"));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(arg.clone());
        }
    }
    Ok(out)
}

fn stage<T: serde::de::DeserializeOwned>(report: &Report, origin: &Path, name: &str) -> Result<Option<T>> {
    report.stage(name).map_err(|e| stage_error(origin, name, e))
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl Writer<'_> {
    fn table<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<()> {
        if rows.is_empty() {
            self.warnings.push(format!("{name}: the report stage holds no rows"));
        }
        let path = self.dir.join(name);
        io::write_table(&path, header, rows)?;
        self.written.push(path);
        Ok(())
    }

    fn missing(&mut self, name: &str, stage: &str) {
        self.warnings.push(format!("{name} skipped: report has no '{stage}' stage"));
    }
}

pub fn run(ctx: &Context, reports: &[PathBuf]) -> Result<Outcome> {
    let paths = expand_reports(reports)?;
    let mut merged: Option<Report> = None;
    for p in &paths {
        let r = Report::read(p)?;
        match merged.as_mut() {
            Some(m) => m.merge(r),
            None => merged = Some(r),
        }
    }
    let report = merged.ok_or_else(|| CliError::Config("no report given".into()))?;
    let origin = paths.first().map(PathBuf::as_path).unwrap_or(Path::new("report"));
    let mut w = Writer {
        dir: &ctx.output_dir,
        written: Vec::new(),
        warnings: Vec::new(),
    };

    let ensemble: Option<EnsembleStage> = stage(&report, origin, ens::COMMAND)?;
    let strain: Option<StrainMapStage> = stage(&report, origin, sm::COMMAND)?;
    let piezo: Option<PiezoSummary> = stage(&report, origin, ens::PIEZO_STAGE)?;
    let phonon: Option<OdonnellStage> = stage(&report, origin, odo::COMMAND)?;

    match &ensemble {
        Some(e) => {
            let rows: Vec<_> = e
                .samples
                .iter()
                .flat_map(|s| histogram_rows(&s.sample, &s.material, &s.histogram))
                .collect();
            w.table(PLOT_FILES[0], &HISTOGRAM_HEADER, &rows)?;
        }
        None => w.missing(PLOT_FILES[0], ens::COMMAND),
    }

    match &strain {
        Some(s) => {
            let cooling: Vec<CoolingRow> = s
                .locations
                .iter()
                .filter_map(|l| {
                    let c = l.cooling.as_ref()?;
                    Some(CoolingRow {
                        sample: l.sample.clone(),
                        location_id: l.location_id.clone(),
                        x0_rt: round_energy_opt(l.x0_room.map(|m| m.value)),
                        x0_cryo: round_energy_opt(l.x0_cryo.map(|m| m.value)),
                        cooling_shift: round_energy(c.measured.value),
                        cooling_shift_err: round_energy(c.measured.error),
                        varshni_shift: round_energy(c.varshni),
                        relaxation: c.relaxation,
                        relaxation_err: c.relaxation_err,
                    })
                })
                .collect();
            w.table(PLOT_FILES[1], &COOLING_HEADER, &cooling)?;
            let samples: Vec<SampleStrainRow> = s
                .samples
                .iter()
                .map(|x| SampleStrainRow {
                    sample: x.sample.clone(),
                    material: x.material.clone(),
                    n_locations: x.n_locations,
                    strain_rt: x.room.as_ref().map(|r| r.mean),
                    strain_rt_err: x.room.as_ref().map(|r| r.mean_err),
                    strain_cryo: x.cryo.as_ref().map(|r| r.mean),
                    strain_cryo_err: x.cryo.as_ref().map(|r| r.mean_err),
                    relaxation: x.cooling.as_ref().map(|c| c.relaxation),
                    relaxation_err: x.cooling.as_ref().and_then(|c| c.relaxation_err),
                })
                .collect();
            w.table(PLOT_FILES[2], &SAMPLE_STRAIN_HEADER, &samples)?;
        }
        None => {
            w.missing(PLOT_FILES[1], sm::COMMAND);
            w.missing(PLOT_FILES[2], sm::COMMAND);
        }
    }

    match &ensemble {
        Some(e) => {
            let points: Vec<GaugePointRow> = e
                .gauges
                .iter()
                .flat_map(|g| {
                    g.points.iter().zip(&g.samples).map(|(p, sample)| GaugePointRow {
                        material: g.material.clone(),
                        sample: sample.clone(),
                        strain: p.x,
                        strain_err: p.x_err,
                        energy: round_energy(p.y),
                        energy_err: round_energy(p.y_err),
                        fit_energy: round_energy(g.fit.eval(p.x)),
                    })
                })
                .collect();
            w.table(PLOT_FILES[3], &GAUGE_POINT_HEADER, &points)?;
            let mut compare = Vec::new();
            for g in &e.gauges {
                compare.push(GaugeCompareRow {
                    material: g.material.clone(),
                    species: "QD".into(),
                    gauge: g.gauge.value,
                    gauge_err: g.gauge.error,
                });
                if let Some(x0) = &g.x0_gauge {
                    compare.push(GaugeCompareRow {
                        material: g.material.clone(),
                        species: "X0".into(),
                        gauge: x0.value,
                        gauge_err: x0.error,
                    });
                }
            }
            w.table(PLOT_FILES[4], &GAUGE_COMPARE_HEADER, &compare)?;
            let broadening: Vec<BroadeningPlotRow> = e
                .broadening
                .iter()
                .flat_map(|b| {
                    b.points.iter().zip(&b.samples).map(|(p, sample)| BroadeningPlotRow {
                        material: b.material.clone(),
                        sample: sample.clone(),
                        strain: p.strain,
                        strain_err: p.strain_err,
                        fwhm: round_energy(p.fwhm),
                        fwhm_err: round_energy(p.fwhm_err),
                        model_fwhm: round_energy(b.model.omega0 + b.model.rate * p.strain),
                        omega0: round_energy(b.model.omega0),
                        omega0_err: round_energy(b.model.omega0_err),
                        rate: b.model.rate,
                    })
                })
                .collect();
            w.table(PLOT_FILES[5], &BROADENING_HEADER, &broadening)?;
        }
        None => {
            for name in &PLOT_FILES[3..6] {
                w.missing(name, ens::COMMAND);
            }
        }
    }

    match &piezo {
        Some(p) => {
            let fields: Vec<FieldRow> = p
                .field_response
                .iter()
                .map(|f| FieldRow {
                    field: f.field,
                    qd_weighted_mean: round_energy(f.qd_weighted_mean),
                    x0_mean: round_energy(f.x0_mean),
                })
                .collect();
            w.table(PLOT_FILES[6], &["field_kV_cm", "qd_weighted_mean_meV", "x0_mean_meV"], &fields)?;
            let shifts: Vec<ShiftRow> = [("QD", &p.qd_shifts), ("X0", &p.x0_shifts)]
                .into_iter()
                .flat_map(|(species, list)| {
                    list.iter().enumerate().map(move |(i, s)| ShiftRow {
                        species: species.into(),
                        index: i,
                        delta_e: round_energy(s.delta_e),
                        delta_e_err: round_energy(s.delta_e_err),
                        weight: s.weight,
                    })
                })
                .collect();
            w.table(PLOT_FILES[7], &["species", "index", "delta_e_meV", "delta_e_err_meV", "weight"], &shifts)?;
        }
        None => {
            w.missing(PLOT_FILES[6], ens::PIEZO_STAGE);
            w.missing(PLOT_FILES[7], ens::PIEZO_STAGE);
        }
    }

    match &phonon {
        Some(o) => {
            w.table(PLOT_FILES[8], &DELTA_HEADER, &odo::delta_rows(&o.emitters)?)?;
            w.table(PLOT_FILES[9], &FIT_HEADER, &odo::fit_rows(&o.emitters))?;
        }
        None => {
            w.missing(PLOT_FILES[8], odo::COMMAND);
            w.missing(PLOT_FILES[9], odo::COMMAND);
        }
    }

    Ok(Outcome::new(w.warnings, false, w.written))
}
