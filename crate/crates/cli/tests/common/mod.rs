#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qdstrain_cli::commands::synth::DEFAULT_GENERATOR;
use serde::de::DeserializeOwned;
use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the binary with `--output-dir out` prepended.
pub fn qdstrain(out: &Path, args: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_qdstrain"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("binary runs");
    Run {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn default_generator() -> Value {
    serde_json::from_str(DEFAULT_GENERATOR).unwrap()
}

pub fn write_json(path: &Path, value: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn table<T: DeserializeOwned>(path: &Path) -> Vec<T> {
    qdstrain_cli::io::read_table(path).unwrap()
}

/// Generator reduced to the named samples, without spectra, series, piezo
/// or Raman sections.
pub fn truth_only(mut g: Value, samples: Value) -> Value {
    g["samples"] = samples;
    let obj = g.as_object_mut().unwrap();
    for key in ["spectra", "temperature_series", "piezo", "raman"] {
        obj.remove(key);
    }
    g
}

pub fn sample(name: &str, material: &str, mean: f64, relaxation: f64, e_base: f64, n_locations: u64) -> Value {
    serde_json::json!({
        "name": name,
        "material": material,
        "n_locations": n_locations,
        "qds_per_location": { "kind": "uniform", "min": 3, "max": 6 },
        "strain_rt": { "mean": mean, "spread": 0.08 },
        "relaxation": relaxation,
        "e_base": e_base,
        "coupling": { "s_ref": 4.0, "e_ref": e_base, "exponent": 15.0, "phonon_energy": 13.35, "scatter": 0.05 }
    })
}

/// Every regular file below `dir`, relative paths sorted, with contents.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

/// Full pipeline on the shipped generator: synth, fit-peaks, strain-map,
/// ensemble, odonnell and report-plots.
pub fn run_pipeline(out: &Path) {
    let o = path_str(out);
    let r = qdstrain(out, &["synth"]);
    assert_eq!(r.code, 0, "synth: {}", r.stderr);
    let cfg = format!("{o}/analysis_config.json");
    let steps: Vec<Vec<String>> = vec![
        vec!["fit-peaks".into(), format!("{o}/spectra")],
        vec!["strain-map".into(), format!("{o}/peaks.csv"), "--raman".into(), format!("{o}/raman.csv")],
        vec![
            "ensemble".into(),
            format!("{o}/ensemble.csv"),
            "--strain".into(),
            format!("{o}/strain_summary.csv"),
            "--piezo".into(),
            format!("{o}/piezo_sweep.csv"),
        ],
        vec!["odonnell".into(), format!("{o}/temperature_series.csv")],
    ];
    for step in steps {
        let mut args: Vec<&str> = vec!["--config", &cfg];
        args.extend(step.iter().map(String::as_str));
        let r = qdstrain(out, &args);
        assert_eq!(r.code, 0, "{step:?}: {}", r.stderr);
    }
    let plots = out.join("plots");
    let r = qdstrain(&plots, &["report-plots", o]);
    assert_eq!(r.code, 0, "report-plots: {}", r.stderr);
}
