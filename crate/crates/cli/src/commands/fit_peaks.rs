use std::path::PathBuf;

use qdstrain_core::nlls::SolverConfig;
use qdstrain_core::spectral::{detect_peaks, fit_peaks, EnergyWindow, LineShape, PeakFit, PeakGuess, Spectrum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PeakSearchConfig;
use crate::error::Result;
use crate::io::{self, round_energy, InputDigest, LoadedSpectrum};
use crate::report::Report;
use crate::{Context, Outcome};

pub const COMMAND: &str = "fit_peaks";
pub const PEAKS_FILE: &str = "peaks.csv";

/// One fitted line; the interchange format between `fit-peaks` and
/// `strain-map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub spectrum: String,
    #[serde(default)]
    pub sample: String,
    #[serde(default)]
    pub location_id: String,
    #[serde(default)]
    pub material: String,
    #[serde(rename = "temperature_K", default)]
    pub temperature_k: Option<f64>,
    #[serde(rename = "piezo_field_kV_cm", default)]
    pub piezo_field: Option<f64>,
    pub peak: usize,
    #[serde(rename = "center_meV")]
    pub center: f64,
    #[serde(rename = "center_err_meV")]
    pub center_err: f64,
    #[serde(rename = "fwhm_meV")]
    pub fwhm: f64,
    #[serde(rename = "fwhm_err_meV")]
    pub fwhm_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub area: f64,
    pub baseline: f64,
    pub shape: LineShape,
    #[serde(default)]
    pub flags: String,
}

pub const PEAK_HEADER: [&str; 17] = [
    "spectrum",
    "sample",
    "location_id",
    "material",
    "temperature_K",
    "piezo_field_kV_cm",
    "peak",
    "center_meV",
    "center_err_meV",
    "fwhm_meV",
    "fwhm_err_meV",
    "amplitude",
    "amplitude_err",
    "area",
    "baseline",
    "shape",
    "flags",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub id: String,
    pub input: String,
    pub sample: Option<String>,
    pub location_id: Option<String>,
    pub temperature_k: Option<f64>,
    pub peaks: usize,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPeaksStage {
    pub spectra: Vec<SpectrumEntry>,
    pub total_peaks: usize,
    pub flagged_spectra: usize,
}

/// Fitted lines of one spectrum plus everything that went wrong on the way.
#[derive(Debug, Clone, Default)]
pub struct SpectrumAnalysis {
    pub fits: Vec<PeakFit>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    center: f64,
    height: f64,
    fwhm: f64,
}

/// Height above the spectrum minimum and a half-maximum width estimate at
/// the sample nearest `center`.
fn candidate(x: &[f64], y: &[f64], floor: f64, spacing: f64, center: f64) -> Candidate {
    let i = x.partition_point(|v| *v < center).min(x.len() - 1);
    let height = y[i] - floor;
    let half = floor + 0.5 * height;
    let crossing = |a: usize, b: usize| {
        let (ya, yb) = (y[a], y[b]);
        if ya == yb {
            x[a]
        } else {
            x[a] + (half - ya) / (yb - ya) * (x[b] - x[a])
        }
    };
    let mut l = i;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let left = if l < i && y[l] <= half { crossing(l, l + 1) } else { x[l] };
    let mut r = i;
    while r + 1 < x.len() && y[r] > half {
        r += 1;
    }
    let right = if r > i && y[r] <= half { crossing(r - 1, r) } else { x[r] };
    Candidate {
        center,
        height,
        fwhm: (right - left).max(2.0 * spacing),
    }
}

fn flag_name<T: Serialize>(flag: &T) -> String {
    match serde_json::to_value(flag) {
        Ok(serde_json::Value::String(s)) => s,
        _ => "unknown".into(),
    }
}

/// Detects lines, groups those whose fit windows overlap, and fits each
/// group jointly over the union of its windows.
pub fn analyse_spectrum(spectrum: &Spectrum, cfg: &PeakSearchConfig, solver: &SolverConfig) -> SpectrumAnalysis {
    let mut out = SpectrumAnalysis::default();
    let (x, y) = (spectrum.energy(), spectrum.intensity());
    let floor = y.iter().copied().fold(f64::INFINITY, f64::min);
    let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - floor;
    let Some(spacing) = spectrum.min_spacing() else {
        out.flags.push("too_few_samples".into());
        return out;
    };
    if !(range > 0.0) {
        out.flags.push("flat_spectrum".into());
        return out;
    }
    let centers = match detect_peaks(spectrum, cfg.min_prominence_fraction * range, cfg.min_separation) {
        Ok(c) => c,
        Err(e) => {
            out.flags.push(format!("detection failed: {e}"));
            return out;
        }
    };
    if centers.is_empty() {
        out.flags.push("no_peaks".into());
        return out;
    }
    let mut cands: Vec<Candidate> = centers.iter().map(|&c| candidate(x, y, floor, spacing, c)).collect();
    if cands.len() > cfg.max_peaks {
        out.flags.push(format!("kept {} of {} candidates", cfg.max_peaks, cands.len()));
        cands.sort_by(|a, b| b.height.total_cmp(&a.height));
        cands.truncate(cfg.max_peaks);
        cands.sort_by(|a, b| a.center.total_cmp(&b.center));
    }

    let (x_lo, x_hi) = (x[0], x[x.len() - 1]);
    let mut groups: Vec<(f64, f64, Vec<Candidate>)> = Vec::new();
    for c in cands {
        let half = (cfg.window_fwhm * c.fwhm).max(cfg.min_half_width).max(3.0 * spacing);
        let (lo, hi) = ((c.center - half).max(x_lo), (c.center + half).min(x_hi));
        match groups.last_mut() {
            Some(g) if lo <= g.1 => {
                g.1 = g.1.max(hi);
                g.2.push(c);
            }
            _ => groups.push((lo, hi, vec![c])),
        }
    }

    for (lo, hi, members) in groups {
        let guesses: Vec<PeakGuess> = members
            .iter()
            .map(|c| PeakGuess {
                center: c.center,
                sigma: cfg.shape.width_from_fwhm(c.fwhm),
                amplitude: c.height.max(f64::MIN_POSITIVE),
                shape: cfg.shape,
            })
            .collect();
        let fitted = EnergyWindow::new(lo, hi).and_then(|w| fit_peaks(spectrum, w, &guesses, solver));
        match fitted {
            Ok(fits) => {
                for f in fits {
                    for flag in &f.flags {
                        out.flags.push(format!("peak at {:.4} meV: {}", f.center, flag_name(flag)));
                    }
                    out.fits.push(f);
                }
            }
            Err(e) => out.flags.push(format!(
                "{} line(s) in [{:.4}, {:.4}] meV not fitted: {e}",
                members.len(),
                lo,
                hi
            )),
        }
    }
    out.fits.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

fn peak_rows(loaded: &LoadedSpectrum, analysis: &SpectrumAnalysis) -> Vec<PeakRow> {
    let meta = &loaded.spectrum.meta;
    analysis
        .fits
        .iter()
        .enumerate()
        .map(|(k, f)| PeakRow {
            spectrum: loaded.id.clone(),
            sample: meta.sample.clone().unwrap_or_default(),
            location_id: meta.location_id.clone().unwrap_or_else(|| loaded.id.clone()),
            material: meta.material.clone().unwrap_or_default(),
            temperature_k: meta.temperature,
            piezo_field: meta.piezo_field,
            peak: k,
            center: round_energy(f.center),
            center_err: round_energy(f.center_err()),
            fwhm: round_energy(f.fwhm()),
            fwhm_err: round_energy(f.fwhm_err()),
            amplitude: f.amplitude,
            amplitude_err: f.amplitude_err(),
            area: f.shape.area(f.amplitude, f.sigma),
            baseline: f.baseline,
            shape: f.shape,
            flags: f.flags.iter().map(flag_name).collect::<Vec<_>>().join(";"),
        })
        .collect()
}

pub fn run(ctx: &Context, inputs: &[PathBuf]) -> Result<Outcome> {
    let files = io::expand_spectrum_inputs(inputs)?;
    if files.is_empty() {
        return Err(crate::CliError::input(
            inputs.first().map(|p| p.as_path()).unwrap_or(std::path::Path::new(".")),
            "no spectrum files found",
        ));
    }
    let cfg = &ctx.config;
    let pool = ctx.pool()?;
    type FileResult = Result<(InputDigest, Vec<(LoadedSpectrum, SpectrumAnalysis)>)>;
    let results: Vec<FileResult> = pool.install(|| {
        files
            .par_iter()
            .map(|file| {
                let digest = io::digest_file(file)?;
                let spectra = io::read_spectra(file)?;
                let analysed = spectra
                    .into_iter()
                    .map(|s| {
                        let a = analyse_spectrum(&s.spectrum, &cfg.peaks, &cfg.solver);
                        (s, a)
                    })
                    .collect();
                Ok((digest, analysed))
            })
            .collect()
    });

    let mut digests = Vec::new();
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (file, result) in files.iter().zip(results) {
        let (digest, analysed) = result?;
        digests.push(digest);
        for (loaded, analysis) in analysed {
            rows.extend(peak_rows(&loaded, &analysis));
            let meta = &loaded.spectrum.meta;
            entries.push(SpectrumEntry {
                id: loaded.id.clone(),
                input: file.name.clone(),
                sample: meta.sample.clone(),
                location_id: meta.location_id.clone(),
                temperature_k: meta.temperature,
                peaks: analysis.fits.len(),
                flags: analysis.flags,
            });
        }
    }
    if entries.is_empty() {
        return Err(crate::CliError::input(&files[0].path, "inputs hold no spectra"));
    }

    let flagged = entries.iter().filter(|e| !e.flags.is_empty()).count();
    let stage = FitPeaksStage {
        total_peaks: rows.len(),
        flagged_spectra: flagged,
        spectra: entries,
    };
    let peaks_path = ctx.output_dir.join(PEAKS_FILE);
    io::write_table(&peaks_path, &PEAK_HEADER, &rows)?;
    let mut report = Report::new(cfg.hash(), digests);
    report.insert_stage(COMMAND, &stage);
    let mut warnings = Vec::new();
    if flagged > 0 {
        warnings.push(format!("{flagged} of {} spectra carry flags", stage.spectra.len()));
    }
    report.warnings = warnings.clone();
    let report_path = report.write(&ctx.output_dir, COMMAND)?;
    Ok(Outcome::new(warnings, flagged > 0, vec![peaks_path, report_path]))
}
