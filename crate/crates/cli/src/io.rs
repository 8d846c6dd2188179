//! File formats: spectrum CSV with a unit-declaring header and optional
//! `<name>.meta.json` sidecar, JSON spectrum arrays, and typed CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use qdstrain_core::spectral::{Spectrum, SpectrumMeta};
use qdstrain_core::{wavelength_to_energy, Error as CoreError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const ENERGY_HEADER: &str = "energy_meV";
pub const WAVELENGTH_HEADER: &str = "wavelength_nm";
pub const INTENSITY_HEADER: &str = "intensity";
pub const SIDECAR_SUFFIX: &str = ".meta.json";

/// Rounds an energy to the 1e-4 meV output precision.
pub fn round_energy(value: f64) -> f64 {
    // Adding 0.0 maps -0.0 to 0.0.
    (value * 1e4).round() / 1e4 + 0.0
}

pub fn round_energy_opt(value: Option<f64>) -> Option<f64> {
    value.map(round_energy)
}

/// An input file with the name under which it is reported.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct InputFile {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(CliError::io(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(file: &InputFile) -> Result<InputDigest> {
    Ok(InputDigest {
        path: file.name.clone(),
        sha256: sha256_hex(&read_bytes(&file.path)?),
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn single_input(path: &Path) -> InputFile {
    InputFile {
        name: file_name(path),
        path: path.to_path_buf(),
    }
}

fn is_spectrum_file(path: &Path) -> bool {
    let name = file_name(path);
    if name.ends_with(SIDECAR_SUFFIX) {
        return false;
    }
    matches!(path.extension().and_then(|e| e.to_str()), Some("csv") | Some("json"))
}

fn walk(dir: &Path, root: &Path, out: &mut Vec<InputFile>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_dir() {
            walk(&path, root, out)?;
        } else if is_spectrum_file(&path) {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let name = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            out.push(InputFile { name, path });
        }
    }
    Ok(())
}

/// Expands files and directories into spectrum files sorted by reported
/// name. Directory members are named relative to the directory.
pub fn expand_spectrum_inputs(args: &[PathBuf]) -> Result<Vec<InputFile>> {
    let mut out = Vec::new();
    for arg in args {
        if arg.is_dir() {
            walk(arg, arg, &mut out)?;
        } else if arg.exists() {
            out.push(single_input(arg));
        } else {
            return Err(CliError::Io {
                path: arg.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            });
        }
    }
    out.sort();
    out.dedup_by(|a, b| a.path == b.path);
    Ok(out)
}

/// A spectrum with the identifier used in reports.
#[derive(Debug, Clone)]
pub struct LoadedSpectrum {
    pub id: String,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GridUnit {
    Energy,
    Wavelength,
}

/// Builds a spectrum from a grid in either unit and either direction.
/// `lines[k]` is the source line of sample `k`, used in error messages.
fn build_spectrum(
    path: &Path,
    unit: GridUnit,
    grid: Vec<f64>,
    intensity: Vec<f64>,
    lines: &[u64],
    meta: SpectrumMeta,
) -> Result<Spectrum> {
    if grid.len() != intensity.len() {
        return Err(CliError::input(
            path,
            format!("{} grid values but {} intensities", grid.len(), intensity.len()),
        ));
    }
    if grid.len() < 2 {
        return Err(CliError::input(path, "a spectrum needs at least two samples"));
    }
    for (k, (&g, &i)) in grid.iter().zip(&intensity).enumerate() {
        if !g.is_finite() || !i.is_finite() {
            return Err(CliError::schema(path, lines[k], "non-finite value"));
        }
        if unit == GridUnit::Wavelength && !(g > 0.0) {
            return Err(CliError::schema(path, lines[k], "wavelength must be positive"));
        }
        if i < 0.0 {
            return Err(CliError::schema(path, lines[k], format!("negative intensity {i}")));
        }
    }
    let increasing = grid[1] > grid[0];
    for k in 1..grid.len() {
        let step = grid[k] - grid[k - 1];
        if step == 0.0 || (step > 0.0) != increasing {
            return Err(CliError::schema(
                path,
                lines[k],
                format!("grid is not strictly monotone at row {} (value {})", k + 1, grid[k]),
            ));
        }
    }
    let mut energy: Vec<f64> = match unit {
        GridUnit::Energy => grid,
        GridUnit::Wavelength => grid.into_iter().map(wavelength_to_energy).collect(),
    };
    let mut intensity = intensity;
    if energy[1] < energy[0] {
        energy.reverse();
        intensity.reverse();
    }
    Spectrum::new(energy, intensity, meta).map_err(|e| match e {
        CoreError::SpacingBelowResolution { .. } => CliError::input(path, e.to_string()),
        other => CliError::Core(other),
    })
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(path, e.line() as u64, e.to_string()))
}

/// Reads one CSV spectrum and its sidecar metadata, if present.
pub fn read_spectrum_csv(path: &Path) -> Result<Spectrum> {
    let meta = {
        let side = sidecar_path(path);
        if side.exists() {
            read_json(&side)?
        } else {
            SpectrumMeta::default()
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let unit = match (headers.get(0), headers.get(1), headers.len()) {
        (Some(ENERGY_HEADER), Some(INTENSITY_HEADER), 2) => GridUnit::Energy,
        (Some(WAVELENGTH_HEADER), Some(INTENSITY_HEADER), 2) => GridUnit::Wavelength,
        _ => {
            return Err(CliError::schema(
                path,
                1,
                format!("header must be '{ENERGY_HEADER},{INTENSITY_HEADER}' or '{WAVELENGTH_HEADER},{INTENSITY_HEADER}'"),
            ))
        }
    };
    let (mut grid, mut intensity, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = |k: usize| -> Result<f64> {
            let field = record.get(k).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|_| CliError::schema(path, line, format!("cannot parse '{field}' as a number")))
        };
        grid.push(parse(0)?);
        intensity.push(parse(1)?);
        lines.push(line);
    }
    build_spectrum(path, unit, grid, intensity, &lines, meta)
}

/// One element of a JSON spectrum array.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub meta: SpectrumMeta,
    #[serde(rename = "energy_meV", default, skip_serializing_if = "Option::is_none")]
    pub energy_mev: Option<Vec<f64>>,
    #[serde(rename = "wavelength_nm", default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<Vec<f64>>,
    pub intensity: Vec<f64>,
}

/// Reads a JSON array of spectra. Spectra without an `id` are named
/// `<name>#<index>`.
pub fn read_spectrum_array(file: &InputFile) -> Result<Vec<LoadedSpectrum>> {
    let docs: Vec<SpectrumDocument> = read_json(&file.path)?;
    docs.into_iter()
        .enumerate()
        .map(|(k, doc)| {
            let (unit, grid) = match (doc.energy_mev, doc.wavelength_nm) {
                (Some(e), None) => (GridUnit::Energy, e),
                (None, Some(w)) => (GridUnit::Wavelength, w),
                _ => {
                    return Err(CliError::input(
                        &file.path,
                        format!("spectrum {k} needs exactly one of '{ENERGY_HEADER}' and '{WAVELENGTH_HEADER}'"),
                    ))
                }
            };
            // Element index stands in for the line number.
            let lines: Vec<u64> = vec![k as u64; grid.len()];
            let spectrum = build_spectrum(&file.path, unit, grid, doc.intensity, &lines, doc.meta)?;
            Ok(LoadedSpectrum {
                id: doc.id.unwrap_or_else(|| format!("{}#{k}", file.name)),
                spectrum,
            })
        })
        .collect()
}

/// Reads every spectrum held by `file`.
pub fn read_spectra(file: &InputFile) -> Result<Vec<LoadedSpectrum>> {
    match file.path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_spectrum_array(file),
        _ => Ok(vec![LoadedSpectrum {
            id: file.name.clone(),
            spectrum: read_spectrum_csv(&file.path)?,
        }]),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, text).map_err(CliError::io(path))
}

/// Writes a spectrum as `energy_meV,intensity` and its metadata sidecar.
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut text = format!("{ENERGY_HEADER},{INTENSITY_HEADER}\n");
    for (e, i) in spectrum.energy().iter().zip(spectrum.intensity()) {
        text.push_str(&format!("{},{}\n", round_energy(*e), i));
    }
    write_text(path, &text)?;
    write_json(&sidecar_path(path), &spectrum.meta)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::input(path, e.to_string()),
        _ => CliError::schema(path, line, e.to_string()),
    }
}

/// Reads a headed CSV into typed rows; columns not named by `T` are
/// ignored.
pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => csv_error(path, e),
        })?;
    reader.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

/// Writes typed rows as a headed CSV. `header` is used when `rows` is
/// empty so the file still declares its columns.
pub fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if rows.is_empty() {
        writer.write_record(header).map_err(|e| csv_error(path, e))?;
    }
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(CliError::io(path))
}
