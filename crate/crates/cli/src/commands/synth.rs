use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qdstrain_core::phonon::TemperaturePoint;
use qdstrain_core::spectral::{SpectrumMeta, FWHM_PER_SIGMA};
use qdstrain_core::strain::{varshni_energy, varshni_shift, Species, VarshniParams};
use qdstrain_core::synth::{
    generate_piezo_sweep, generate_population, generate_raman_shifts, generate_spectrum, generate_temperature_series,
    location_groups, uniform_grid, CouplingModel, EmissionLine, NoiseModel, PiezoSweepConfig, PopulationConfig,
    QdCount, QdRecord, SpectrumConfig, StrainDistribution,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{histogram_file_name, histogram_rows, sample_histogram, PiezoRow, HISTOGRAM_HEADER, PIEZO_HEADER};
use super::odonnell::{TemperatureRow, TEMPERATURE_HEADER};
use super::strain_map::{RamanRow, StrainSummaryRow, SUMMARY_HEADER};
use crate::config::{
    digest_json, AnalysisConfig, BroadeningEntry, GaugeEntry, RamanEntry, ReferenceEntry, VarshniEntry,
};
use crate::error::{CliError, Result};
use crate::io::{self, round_energy, InputDigest};
use crate::report::{Report, TOOL_VERSION};
use crate::{Context, Outcome};

pub const COMMAND: &str = "synth";
pub const DEFAULT_GENERATOR: &str = include_str!("../../config/synth.json");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANALYSIS_CONFIG_FILE: &str = "analysis_config.json";
pub const ENSEMBLE_FILE: &str = "ensemble.csv";
pub const STRAIN_TABLE_FILE: &str = "strain_table.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";
pub const SERIES_FILE: &str = "temperature_series.csv";
pub const PIEZO_FILE: &str = "piezo_sweep.csv";
pub const RAMAN_FILE: &str = "raman.csv";
pub const SPECTRA_DIR: &str = "spectra";

const SOURCE: &str = "synthetic ground truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seed: u64,
    pub materials: Vec<MaterialTruth>,
    pub samples: Vec<SampleSpec>,
    #[serde(default)]
    pub spectra: Option<SpectraSpec>,
    #[serde(default)]
    pub temperature_series: Option<SeriesSpec>,
    #[serde(default)]
    pub piezo: Option<PiezoSpec>,
    #[serde(default)]
    pub raman: Option<RamanSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarshniTruth {
    pub e0: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningTruth {
    /// Ensemble FWHM at zero strain, meV.
    pub omega0: f64,
    /// meV/%.
    pub rate: f64,
    #[serde(default)]
    pub rate_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialTruth {
    pub name: String,
    pub gauge_x0: f64,
    pub gauge_x0_err: f64,
    pub gauge_qd: f64,
    pub gauge_qd_err: f64,
    pub varshni: VarshniTruth,
    pub broadening: BroadeningTruth,
    /// cm⁻¹/%.
    pub raman_coefficient: f64,
    #[serde(default)]
    pub raman_coefficient_err: f64,
    pub grid: GridSpec,
}

fn default_intensity_range() -> (f64, f64) {
    (0.4, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub name: String,
    pub material: String,
    pub n_locations: usize,
    pub qds_per_location: QdCount,
    /// Room-temperature local strain, %.
    pub strain_rt: StrainDistribution,
    /// Strain change on cooling, %.
    pub relaxation: f64,
    /// Unstrained QD energy, meV.
    pub e_base: f64,
    /// QD energy jitter, meV. Derived from the material broadening model
    /// when omitted.
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default)]
    pub coupling: CouplingModel,
    #[serde(default = "default_intensity_range")]
    pub intensity_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSpec {
    pub room_temperature_k: f64,
    pub cryo_temperature_k: f64,
    /// Line FWHM, meV.
    pub room_linewidth: f64,
    pub cryo_linewidth: f64,
    pub x0_area_room: f64,
    pub x0_area_cryo: f64,
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub resolution: Option<f64>,
    /// Uncertainty attached to the emitted reference energies, meV.
    #[serde(default)]
    pub reference_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X0Coupling {
    pub huang_rhys: f64,
    /// meV.
    pub phonon_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    /// QDs are taken from this sample, spread evenly over its energy range.
    pub sample: String,
    pub n_qds: usize,
    pub temperatures: Vec<f64>,
    /// 1σ, meV.
    pub noise: f64,
    #[serde(default)]
    pub x0: Option<X0Coupling>,
    #[serde(default)]
    pub x0_temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiezoSpec {
    pub material: String,
    pub n_locations: usize,
    pub qds_per_location: QdCount,
    /// Keeps only the first `n_qds` QDs of the drawn population.
    #[serde(default)]
    pub n_qds: Option<usize>,
    pub strain: StrainDistribution,
    pub e_base: f64,
    pub jitter: f64,
    /// kV/cm.
    pub fields: Vec<f64>,
    pub blueshift_fraction: f64,
    /// Largest X0 shift at the largest field, meV.
    pub shift_scale: f64,
    #[serde(default)]
    pub blue_ratio: Option<f64>,
    #[serde(default)]
    pub red_ratio: Option<f64>,
    #[serde(default)]
    pub x0_min_fraction: Option<f64>,
    #[serde(default)]
    pub shift_err: Option<f64>,
    #[serde(default = "default_intensity_range")]
    pub intensity_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanSpec {
    /// 1σ on each Raman shift, cm⁻¹.
    pub noise: f64,
}

impl SynthConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: SynthConfig =
            serde_json::from_str(text).map_err(|e| CliError::schema(path, e.line() as u64, e.to_string()))?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = String::from_utf8(io::read_bytes(p)?)
                    .map_err(|_| CliError::input(p, "generator config is not UTF-8"))?;
                Self::parse(&text, p)
            }
            None => Self::parse(DEFAULT_GENERATOR, Path::new("synth.json")),
        }
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |m: String| Err(CliError::input(path, m));
        let mut names = std::collections::BTreeSet::new();
        for s in &self.samples {
            if !names.insert(s.name.as_str()) {
                return bad(format!("duplicate sample '{}'", s.name));
            }
            if self.material(&s.material).is_none() {
                return bad(format!("sample '{}' uses unknown material '{}'", s.name, s.material));
            }
            if s.name.is_empty() || s.name.contains(['/', '\\']) {
                return bad(format!("sample name '{}' is not a valid file-name component", s.name));
            }
        }
        for m in &self.materials {
            if !(m.grid.step > 0.0 && m.grid.hi > m.grid.lo) {
                return bad(format!("{}: grid needs lo < hi and a positive step", m.name));
            }
        }
        if let Some(t) = &self.temperature_series {
            if !names.contains(t.sample.as_str()) {
                return bad(format!("temperature series refers to unknown sample '{}'", t.sample));
            }
        }
        if let Some(p) = &self.piezo {
            if self.material(&p.material).is_none() {
                return bad(format!("piezo sweep uses unknown material '{}'", p.material));
            }
        }
        Ok(())
    }

    pub fn material(&self, name: &str) -> Option<&MaterialTruth> {
        self.materials.iter().find(|m| m.name == name)
    }
}

/// Seed of the `index`-th independent generator derived from `seed`.
fn child_seed(seed: u64, domain: u64, index: u64) -> u64 {
    seed ^ (domain << 48) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn location_tag(loc: usize) -> String {
    format!("L{loc:02}")
}

/// Population of one sample together with its location strains.
struct SampleTruth<'a> {
    spec: &'a SampleSpec,
    material: &'a MaterialTruth,
    records: Vec<QdRecord>,
}

impl SampleTruth<'_> {
    fn strain_rt(&self, record: &QdRecord) -> f64 {
        record.strain - self.spec.relaxation
    }
}

/// Jitter reproducing the material's ensemble FWHM at the sample's mean
/// cryogenic strain.
pub fn derived_jitter(material: &MaterialTruth, sample: &SampleSpec) -> Option<f64> {
    let strain = sample.strain_rt.mean + sample.relaxation;
    let sigma = (material.broadening.omega0 + material.broadening.rate * strain) / FWHM_PER_SIGMA;
    let strain_part = material.gauge_qd * sample.strain_rt.spread;
    let var = sigma * sigma - strain_part * strain_part;
    (var > 0.0).then(|| var.sqrt())
}

fn generate_sample<'a>(cfg: &'a SynthConfig, seed: u64, index: usize, spec: &'a SampleSpec) -> Result<SampleTruth<'a>> {
    let material = cfg.material(&spec.material).expect("validated material");
    let jitter = match spec.jitter {
        Some(j) => j,
        None => derived_jitter(material, spec).ok_or_else(|| {
            CliError::Config(format!(
                "sample '{}': strain spread alone exceeds the ensemble width; set jitter explicitly",
                spec.name
            ))
        })?,
    };
    let shift = spec.relaxation;
    let strain = StrainDistribution {
        mean: spec.strain_rt.mean + shift,
        spread: spec.strain_rt.spread,
        min: spec.strain_rt.min.map(|v| v + shift),
        max: spec.strain_rt.max.map(|v| v + shift),
    };
    let records = generate_population(&PopulationConfig {
        n_locations: spec.n_locations,
        qds_per_location: spec.qds_per_location,
        strain,
        e_base: spec.e_base,
        gauge_qd: material.gauge_qd,
        gauge_x0: material.gauge_x0,
        x0_energy: material.varshni.e0,
        jitter,
        coupling: spec.coupling,
        intensity_range: spec.intensity_range,
        seed: child_seed(seed, 1, index as u64),
    })?;
    Ok(SampleTruth { spec, material, records })
}

fn varshni_params(m: &MaterialTruth) -> Result<VarshniParams> {
    Ok(VarshniParams::new(m.varshni.e0, m.varshni.alpha, m.varshni.beta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdRow {
    pub sample: String,
    pub material: String,
    pub location_id: String,
    pub qd: usize,
    #[serde(rename = "energy_meV")]
    pub energy: f64,
    #[serde(rename = "strain_pct")]
    pub strain: f64,
    pub huang_rhys: f64,
    #[serde(rename = "phonon_energy_meV")]
    pub phonon_energy: f64,
    pub intensity: f64,
}

const QD_HEADER: [&str; 9] = [
    "sample",
    "material",
    "location_id",
    "qd",
    "energy_meV",
    "strain_pct",
    "huang_rhys",
    "phonon_energy_meV",
    "intensity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub sample: String,
    pub material: String,
    pub location_id: String,
    pub n_qds: usize,
    #[serde(rename = "strain_rt_pct")]
    pub strain_rt: f64,
    #[serde(rename = "strain_cryo_pct")]
    pub strain_cryo: f64,
    #[serde(rename = "x0_rt_meV")]
    pub x0_rt: f64,
    #[serde(rename = "x0_cryo_meV")]
    pub x0_cryo: f64,
}

const LOCATION_HEADER: [&str; 8] = [
    "sample",
    "material",
    "location_id",
    "n_qds",
    "strain_rt_pct",
    "strain_cryo_pct",
    "x0_rt_meV",
    "x0_cryo_meV",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub sample: String,
    pub material: String,
    pub n_locations: usize,
    pub n_qds: usize,
    pub strain_rt_mean: f64,
    pub strain_cryo_mean: f64,
    pub relaxation: f64,
    pub qd_energy_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStage {
    pub seed: u64,
    pub generator_hash: String,
    pub samples: Vec<SampleSummary>,
    pub piezo_qds: Option<usize>,
    pub series_emitters: usize,
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

/// Analysis configuration consistent with the generator truth.
pub fn analysis_config_for(cfg: &SynthConfig, seed: u64) -> Result<AnalysisConfig> {
    let mut out = AnalysisConfig {
        description: Some("Analysis configuration matching a synthetic dataset".into()),
        seed,
        ..AnalysisConfig::default()
    };
    let source = Some(SOURCE.to_string());
    out.gauges.retain(|g| cfg.material(&g.material).is_none());
    out.varshni.retain(|v| cfg.material(&v.material).is_none());
    out.references.retain(|r| cfg.material(&r.material).is_none());
    out.broadening.retain(|b| cfg.material(&b.material).is_none());
    out.raman.coefficients.retain(|r| cfg.material(&r.material).is_none());
    let (room_k, cryo_k, reference_err) = match &cfg.spectra {
        Some(s) => (s.room_temperature_k, s.cryo_temperature_k, s.reference_err),
        None => (out.temperature.room_k, out.temperature.cryo_k, 0.0),
    };
    out.temperature.room_k = room_k;
    out.temperature.cryo_k = cryo_k;
    for m in &cfg.materials {
        for (species, value, error) in [(Species::Qd, m.gauge_qd, m.gauge_qd_err), (Species::X0, m.gauge_x0, m.gauge_x0_err)] {
            out.gauges.push(GaugeEntry {
                material: m.name.clone(),
                species,
                value,
                error,
                source: source.clone(),
            });
        }
        out.varshni.push(VarshniEntry {
            material: m.name.clone(),
            e0: m.varshni.e0,
            alpha: m.varshni.alpha,
            beta: m.varshni.beta,
            source: source.clone(),
        });
        let params = varshni_params(m)?;
        for t in [room_k, cryo_k] {
            out.references.push(ReferenceEntry {
                material: m.name.clone(),
                temperature_k: t,
                energy: round_energy(varshni_energy(&params, t)?),
                error: reference_err,
                source: source.clone(),
            });
        }
        out.broadening.push(BroadeningEntry {
            material: m.name.clone(),
            rate: m.broadening.rate,
            rate_err: m.broadening.rate_err,
            source: source.clone(),
        });
        out.raman.coefficients.push(RamanEntry {
            material: m.name.clone(),
            coefficient: m.raman_coefficient,
            coefficient_err: m.raman_coefficient_err,
            source: source.clone(),
        });
    }
    if !cfg.samples.is_empty() {
        let relax: Vec<f64> = cfg.samples.iter().map(|s| s.relaxation).collect();
        out.relaxation.value_percent = mean(&relax);
        out.relaxation.source = source;
    }
    out.validate()?;
    Ok(out)
}

fn truth_summary(sample: &SampleTruth) -> (StrainSummaryRow, SampleSummary) {
    let groups = location_groups(&sample.records);
    let cryo: Vec<f64> = groups.values().map(|g| g[0].strain).collect();
    let rt: Vec<f64> = groups.values().map(|g| sample.strain_rt(g[0])).collect();
    let n = cryo.len();
    let err = |v: &[f64]| (sample_std(v) / (v.len() as f64).sqrt()).max(1e-4);
    let energies: Vec<f64> = sample.records.iter().map(|r| r.energy).collect();
    (
        StrainSummaryRow {
            sample: sample.spec.name.clone(),
            material: sample.material.name.clone(),
            n,
            strain_rt: Some(mean(&rt)),
            strain_rt_err: Some(err(&rt)),
            spread_rt: Some(sample_std(&rt)),
            strain: mean(&cryo),
            strain_err: err(&cryo),
            spread: Some(sample_std(&cryo)),
            temperature_k: 0.0,
            cooling_shift: None,
            cooling_shift_err: None,
            varshni_shift: None,
            relaxation: Some(sample.spec.relaxation),
            relaxation_err: None,
        },
        SampleSummary {
            sample: sample.spec.name.clone(),
            material: sample.material.name.clone(),
            n_locations: n,
            n_qds: sample.records.len(),
            strain_rt_mean: mean(&rt),
            strain_cryo_mean: mean(&cryo),
            relaxation: sample.spec.relaxation,
            qd_energy_mean: mean(&energies),
        },
    )
}

struct SpectrumJob {
    path: PathBuf,
    lines: Vec<EmissionLine>,
    grid: GridSpec,
    config: SpectrumConfig,
}

fn spectrum_jobs(samples: &[SampleTruth], spec: &SpectraSpec, seed: u64, dir: &Path) -> Result<Vec<SpectrumJob>> {
    let mut jobs = Vec::new();
    for (si, s) in samples.iter().enumerate() {
        let params = varshni_params(s.material)?;
        let x0_room0 = varshni_energy(&params, spec.room_temperature_k)?;
        let x0_cryo0 = varshni_energy(&params, spec.cryo_temperature_k)?;
        for (loc, qds) in location_groups(&s.records) {
            let strain_cryo = qds[0].strain;
            let strain_rt = s.strain_rt(qds[0]);
            let tag = location_tag(loc);
            let classes = [
                (spec.room_temperature_k, spec.room_linewidth, vec![EmissionLine {
                    energy: x0_room0 + s.material.gauge_x0 * strain_rt,
                    area: spec.x0_area_room,
                }]),
                (spec.cryo_temperature_k, spec.cryo_linewidth, {
                    let mut lines = vec![EmissionLine {
                        energy: x0_cryo0 + s.material.gauge_x0 * strain_cryo,
                        area: spec.x0_area_cryo,
                    }];
                    lines.extend(qds.iter().map(|q| EmissionLine {
                        energy: q.energy,
                        area: q.intensity,
                    }));
                    lines
                }),
            ];
            for (k, (temperature, linewidth, lines)) in classes.into_iter().enumerate() {
                let name = format!("{}_{tag}_{}K.csv", s.spec.name, temperature);
                jobs.push(SpectrumJob {
                    path: dir.join(name),
                    lines,
                    grid: s.material.grid,
                    config: SpectrumConfig {
                        linewidth,
                        background: spec.background,
                        noise: spec.noise,
                        seed,
                        stream: ((si as u64) << 32) | ((loc as u64) << 1) | k as u64,
                        meta: SpectrumMeta {
                            temperature: Some(temperature),
                            location_id: Some(tag.clone()),
                            sample: Some(s.spec.name.clone()),
                            piezo_field: None,
                            material: Some(s.material.name.clone()),
                            resolution: spec.resolution,
                        },
                    },
                });
            }
        }
    }
    Ok(jobs)
}

fn series_rows(samples: &[SampleTruth], spec: &SeriesSpec, cryo_k: f64, seed: u64) -> Result<Vec<TemperatureRow>> {
    let sample = samples
        .iter()
        .find(|s| s.spec.name == spec.sample)
        .expect("validated sample");
    let mut by_energy: Vec<&QdRecord> = sample.records.iter().collect();
    by_energy.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let n = spec.n_qds.min(by_energy.len());
    let picks: Vec<&QdRecord> = match n {
        0 => Vec::new(),
        1 => vec![by_energy[by_energy.len() / 2]],
        _ => (0..n)
            .map(|k| by_energy[k * (by_energy.len() - 1) / (n - 1)])
            .collect(),
    };
    let to_rows = |tag: String, points: Vec<TemperaturePoint>| {
        points
            .into_iter()
            .map(move |p| TemperatureRow {
                emitter: tag.clone(),
                temperature_k: p.temperature,
                energy: round_energy(p.energy),
                energy_err: p.energy_err,
            })
            .collect::<Vec<_>>()
    };
    let mut rows = Vec::new();
    for (k, q) in picks.into_iter().enumerate() {
        let points = generate_temperature_series(q, &spec.temperatures, spec.noise, child_seed(seed, 3, k as u64))?;
        rows.extend(to_rows(format!("QD{:02}", k + 1), points));
    }
    if let Some(x0) = spec.x0 {
        let params = varshni_params(sample.material)?;
        let first = sample.records.first().ok_or_else(|| CliError::Config("empty sample".into()))?;
        let energy = varshni_energy(&params, cryo_k)? + sample.material.gauge_x0 * first.strain;
        let record = QdRecord {
            location_id: first.location_id,
            strain: first.strain,
            energy,
            huang_rhys: x0.huang_rhys,
            phonon_energy: x0.phonon_energy,
            intensity: 1.0,
        };
        let temps = if spec.x0_temperatures.is_empty() {
            &spec.temperatures
        } else {
            &spec.x0_temperatures
        };
        let points = generate_temperature_series(&record, temps, spec.noise, child_seed(seed, 4, 0))?;
        rows.extend(to_rows("X0".into(), points));
    }
    Ok(rows)
}

fn piezo_rows(spec: &PiezoSpec, material: &MaterialTruth, seed: u64) -> Result<Vec<PiezoRow>> {
    let mut population = generate_population(&PopulationConfig {
        n_locations: spec.n_locations,
        qds_per_location: spec.qds_per_location,
        strain: spec.strain,
        e_base: spec.e_base,
        gauge_qd: material.gauge_qd,
        gauge_x0: material.gauge_x0,
        x0_energy: material.varshni.e0,
        jitter: spec.jitter,
        coupling: CouplingModel::default(),
        intensity_range: spec.intensity_range,
        seed: child_seed(seed, 5, 0),
    })?;
    if let Some(n) = spec.n_qds {
        if population.len() < n {
            return Err(CliError::Config(format!(
                "piezo population has {} QDs, fewer than the requested {n}",
                population.len()
            )));
        }
        population.truncate(n);
    }
    let mut sweep_cfg = PiezoSweepConfig::new(spec.fields.clone(), spec.blueshift_fraction, spec.shift_scale, child_seed(seed, 6, 0));
    if let Some(v) = spec.blue_ratio {
        sweep_cfg.blue_ratio = v;
    }
    if let Some(v) = spec.red_ratio {
        sweep_cfg.red_ratio = v;
    }
    if let Some(v) = spec.x0_min_fraction {
        sweep_cfg.x0_min_fraction = v;
    }
    if let Some(v) = spec.shift_err {
        sweep_cfg.shift_err = v;
    }
    let sweep = generate_piezo_sweep(&population, &sweep_cfg)?;
    let mut rows = Vec::new();
    for (f, &field) in sweep.fields.iter().enumerate() {
        for (i, (s, q)) in sweep.qd[f].iter().zip(&population).enumerate() {
            rows.push(PiezoRow {
                field,
                emitter: format!("QD{i:03}"),
                species: Species::Qd,
                material: material.name.clone(),
                location_id: location_tag(q.location_id),
                delta_e: round_energy(s.delta_e),
                delta_e_err: s.delta_e_err,
                weight: s.weight,
            });
        }
        for (s, &loc) in sweep.x0[f].iter().zip(&sweep.x0_locations) {
            rows.push(PiezoRow {
                field,
                emitter: format!("X0_{}", location_tag(loc)),
                species: Species::X0,
                material: material.name.clone(),
                location_id: location_tag(loc),
                delta_e: round_energy(s.delta_e),
                delta_e_err: s.delta_e_err,
                weight: s.weight,
            });
        }
    }
    Ok(rows)
}

fn raman_rows(samples: &[SampleTruth], spec: &RamanSpec, seed: u64) -> Result<Vec<RamanRow>> {
    let mut rows = Vec::new();
    for (si, s) in samples.iter().enumerate() {
        let groups = location_groups(&s.records);
        let strains: Vec<f64> = groups.values().map(|g| s.strain_rt(g[0])).collect();
        let shifts = generate_raman_shifts(&strains, s.material.raman_coefficient, spec.noise, child_seed(seed, 7, si as u64))?;
        for (&loc, shift) in groups.keys().zip(shifts) {
            rows.push(RamanRow {
                sample: s.spec.name.clone(),
                location_id: location_tag(loc),
                raman_shift_cm1: (shift * 1e4).round() / 1e4,
                raman_shift_err_cm1: spec.noise,
            });
        }
    }
    Ok(rows)
}

fn relative_name(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn run(ctx: &Context, generator: Option<&Path>) -> Result<Outcome> {
    let cfg = SynthConfig::load(generator)?;
    let seed = ctx.seed.unwrap_or(cfg.seed);
    let generator_hash = digest_json(&cfg);
    let out = &ctx.output_dir;
    let analysis = analysis_config_for(&cfg, seed)?;
    let mut warnings = Vec::new();
    let mut written: Vec<PathBuf> = Vec::new();

    let samples: Vec<SampleTruth> = cfg
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| generate_sample(&cfg, seed, i, s))
        .collect::<Result<_>>()?;

    let path = out.join(ANALYSIS_CONFIG_FILE);
    io::write_json(&path, &analysis)?;
    written.push(path);

    let mut qd_rows = Vec::new();
    let mut loc_rows = Vec::new();
    for s in &samples {
        let params = varshni_params(s.material)?;
        let (room_k, cryo_k) = (analysis.temperature.room_k, analysis.temperature.cryo_k);
        let cooling = varshni_shift(&params, room_k, cryo_k)?;
        let room0 = varshni_energy(&params, room_k)?;
        for (loc, qds) in location_groups(&s.records) {
            let strain_rt = s.strain_rt(qds[0]);
            let x0_rt = room0 + s.material.gauge_x0 * strain_rt;
            loc_rows.push(LocationRow {
                sample: s.spec.name.clone(),
                material: s.material.name.clone(),
                location_id: location_tag(loc),
                n_qds: qds.len(),
                strain_rt,
                strain_cryo: qds[0].strain,
                x0_rt: round_energy(x0_rt),
                x0_cryo: round_energy(x0_rt + cooling + s.material.gauge_x0 * s.spec.relaxation),
            });
        }
        for (k, q) in s.records.iter().enumerate() {
            qd_rows.push(QdRow {
                sample: s.spec.name.clone(),
                material: s.material.name.clone(),
                location_id: location_tag(q.location_id),
                qd: k,
                energy: round_energy(q.energy),
                strain: q.strain,
                huang_rhys: q.huang_rhys,
                phonon_energy: q.phonon_energy,
                intensity: q.intensity,
            });
        }
    }
    let path = out.join(ENSEMBLE_FILE);
    io::write_table(&path, &QD_HEADER, &qd_rows)?;
    written.push(path);
    let path = out.join(LOCATIONS_FILE);
    io::write_table(&path, &LOCATION_HEADER, &loc_rows)?;
    written.push(path);

    let (summary_rows, sample_summaries): (Vec<StrainSummaryRow>, Vec<SampleSummary>) = samples
        .iter()
        .map(|s| {
            let (mut row, summary) = truth_summary(s);
            row.temperature_k = analysis.temperature.cryo_k;
            (row, summary)
        })
        .unzip();
    let path = out.join(STRAIN_TABLE_FILE);
    io::write_table(&path, &SUMMARY_HEADER, &summary_rows)?;
    written.push(path);

    let mut by_sample: BTreeMap<&str, (&str, Vec<f64>)> = BTreeMap::new();
    for s in &samples {
        by_sample.insert(&s.spec.name, (&s.material.name, s.records.iter().map(|r| r.energy).collect()));
    }
    for (sample, (material, energies)) in &by_sample {
        let (stats, flags) = sample_histogram(&analysis, material, energies)?;
        warnings.extend(flags.into_iter().map(|f| format!("sample {sample}: {f}")));
        let path = out.join(histogram_file_name(sample));
        io::write_table(&path, &HISTOGRAM_HEADER, &histogram_rows(sample, material, &stats))?;
        written.push(path);
    }

    if let Some(spec) = &cfg.spectra {
        let dir = out.join(SPECTRA_DIR);
        std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        let jobs = spectrum_jobs(&samples, spec, seed, &dir)?;
        let pool = ctx.pool()?;
        let results: Vec<Result<(PathBuf, usize)>> = pool.install(|| {
            jobs.par_iter()
                .map(|job| {
                    let grid = uniform_grid(job.grid.lo, job.grid.hi, job.grid.step)?;
                    let synth = generate_spectrum(&job.lines, &grid, &job.config)?;
                    io::write_spectrum_csv(&job.path, &synth.spectrum)?;
                    Ok((job.path.clone(), synth.dropped.len()))
                })
                .collect()
        });
        for r in results {
            let (path, dropped) = r?;
            if dropped > 0 {
                warnings.push(format!("{}: {dropped} line(s) outside the grid were omitted", relative_name(out, &path)));
            }
            written.push(io::sidecar_path(&path));
            written.push(path);
        }
    }

    let mut series_emitters = 0;
    if let Some(spec) = &cfg.temperature_series {
        let rows = series_rows(&samples, spec, analysis.temperature.cryo_k, seed)?;
        series_emitters = rows.iter().map(|r| r.emitter.as_str()).collect::<std::collections::BTreeSet<_>>().len();
        let path = out.join(SERIES_FILE);
        io::write_table(&path, &TEMPERATURE_HEADER, &rows)?;
        written.push(path);
    }

    let mut piezo_qds = None;
    if let Some(spec) = &cfg.piezo {
        let material = cfg.material(&spec.material).expect("validated material");
        let rows = piezo_rows(spec, material, seed)?;
        piezo_qds = Some(rows.iter().filter(|r| r.species == Species::Qd && r.field == rows[0].field).count());
        let path = out.join(PIEZO_FILE);
        io::write_table(&path, &PIEZO_HEADER, &rows)?;
        written.push(path);
    }

    if let Some(spec) = &cfg.raman {
        let rows = raman_rows(&samples, spec, seed)?;
        let path = out.join(RAMAN_FILE);
        io::write_table(
            &path,
            &["sample", "location_id", "raman_shift_cm1", "raman_shift_err_cm1"],
            &rows,
        )?;
        written.push(path);
    }

    let mut report = Report::new(analysis.hash(), Vec::<InputDigest>::new());
    report.insert_stage(
        COMMAND,
        &SynthStage {
            seed,
            generator_hash: generator_hash.clone(),
            samples: sample_summaries,
            piezo_qds,
            series_emitters,
        },
    );
    report.warnings = warnings.clone();
    written.push(report.write(out, COMMAND)?);

    let mut files: Vec<ManifestEntry> = written
        .iter()
        .map(|p| {
            Ok(ManifestEntry {
                path: relative_name(out, p),
                sha256: io::sha256_hex(&io::read_bytes(p)?),
            })
        })
        .collect::<Result<_>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        version: TOOL_VERSION.to_string(),
        seed,
        config_hash: generator_hash,
        files,
    };
    let path = out.join(MANIFEST_FILE);
    io::write_json(&path, &manifest)?;
    written.push(path);
    Ok(Outcome::new(warnings, false, written))
}
