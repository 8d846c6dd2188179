mod common;

use std::fs;

use common::{default_generator, path_str, qdstrain, read_json, snapshot, table, write_json};
use qdstrain_cli::commands::ensemble::HistogramRow;
use sha2::{Digest, Sha256};

#[test]
fn default_generator_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(qdstrain(&a, &["synth"]).code, 0);
    assert_eq!(qdstrain(&b, &["--jobs", "2", "synth"]).code, 0);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), sb.len());
    for ((pa, ca), (pb, cb)) in sa.iter().zip(&sb) {
        assert_eq!(pa, pb);
        assert!(ca == cb, "{pa} differs");
    }
}

#[test]
fn manifest_lists_every_file_with_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(qdstrain(&out, &["synth"]).code, 0);
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 20240611u64);
    let files = manifest["files"].as_array().unwrap();
    let listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    let mut sorted = listed.clone();
    sorted.sort();
    assert_eq!(listed, sorted);
    let on_disk = snapshot(&out);
    assert_eq!(files.len() + 1, on_disk.len());
    for f in files {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn histograms_span_the_ensemble_energy_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(qdstrain(&out, &["synth"]).code, 0);
    let mut lows = Vec::new();
    for s in ["C1", "C2", "S1", "S2"] {
        let rows: Vec<HistogramRow> = table(&out.join(format!("hist_{s}.csv")));
        assert!(rows.len() >= 3, "{s}");
        let lo = rows.first().unwrap().bin_lo;
        let hi = rows.last().unwrap().bin_lo + 20.0;
        assert!(lo >= 1760.0 && hi <= 2120.0, "{s}: {lo}..{hi}");
        lows.push(lo);
    }
    // more strain, lower energies
    assert!(lows.windows(2).all(|w| w[1] <= w[0]), "{lows:?}");
    assert!(lows[0] - lows[3] >= 80.0);
}

#[test]
fn piezo_sweep_reproduces_field_response() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = default_generator();
    let obj = g.as_object_mut().unwrap();
    for key in ["spectra", "temperature_series", "raman"] {
        obj.remove(key);
    }
    let gen = write_json(&dir.path().join("gen.json"), &g);
    let out = dir.path().join("out");
    assert_eq!(qdstrain(&out, &["synth", path_str(&gen)]).code, 0);
    let r = qdstrain(
        &out,
        &[
            "--config",
            path_str(&out.join("analysis_config.json")),
            "ensemble",
            path_str(&out.join("ensemble.csv")),
            "--piezo",
            path_str(&out.join("piezo_sweep.csv")),
        ],
    );
    assert!(r.code == 0 || r.code == 2, "{}", r.stderr);
    let report = read_json(&out.join("report_ensemble.json"));
    let p = &report["stages"]["piezo"];
    assert_eq!(p["n_qd"], 93);
    assert_eq!(p["field_max"], 15.0);
    let fraction = p["blueshift_fraction"].as_f64().unwrap();
    assert!((fraction - 0.86).abs() <= 0.04, "{fraction}");
    assert!(p["qd_weighted_mean"].as_f64().unwrap() > p["x0_weighted_mean"].as_f64().unwrap());
    let response = p["field_response"].as_array().unwrap();
    assert_eq!(response.len(), 4);
    assert_eq!(response[0]["qd_weighted_mean"], 0.0);
}

#[test]
fn seed_flag_overrides_the_generator_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(qdstrain(&a, &["synth"]).code, 0);
    assert_eq!(qdstrain(&b, &["--seed", "7", "synth"]).code, 0);
    assert_eq!(read_json(&b.join("manifest.json"))["seed"], 7);
    assert_ne!(fs::read(a.join("ensemble.csv")).unwrap(), fs::read(b.join("ensemble.csv")).unwrap());
    let c = dir.path().join("c");
    assert_eq!(qdstrain(&c, &["--seed", "7", "synth"]).code, 0);
    assert_eq!(fs::read(b.join("ensemble.csv")).unwrap(), fs::read(c.join("ensemble.csv")).unwrap());
}

#[test]
fn invalid_generator_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = default_generator();
    g["samples"][0]["no_such_field"] = serde_json::json!(1);
    let gen = write_json(&dir.path().join("gen.json"), &g);
    let r = qdstrain(&dir.path().join("out"), &["synth", path_str(&gen)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("gen.json:"), "{}", r.stderr);

    let mut g = default_generator();
    g["samples"][0]["material"] = serde_json::json!("MoTe2");
    let gen = write_json(&dir.path().join("gen2.json"), &g);
    let r = qdstrain(&dir.path().join("out2"), &["synth", path_str(&gen)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("MoTe2"), "{}", r.stderr);
}
