mod common;

use std::fs;

use common::{default_generator, path_str, qdstrain, read_json, table, write_json};
use qdstrain_cli::commands::fit_peaks::{PeakRow, PEAK_HEADER};
use qdstrain_cli::commands::strain_map::{StrainRow, StrainSummaryRow};
use qdstrain_cli::io::write_table;
use qdstrain_core::spectral::LineShape;

fn peak(sample: &str, loc: &str, t: f64, center: f64) -> PeakRow {
    PeakRow {
        spectrum: format!("{sample}_{loc}_{t}K.csv"),
        sample: sample.into(),
        location_id: loc.into(),
        material: "WS2".into(),
        temperature_k: Some(t),
        piezo_field: None,
        peak: 0,
        center,
        center_err: 0.01,
        fwhm: 30.0,
        fwhm_err: 0.05,
        amplitude: 1.0,
        amplitude_err: 0.001,
        area: 30.0,
        baseline: 0.01,
        shape: LineShape::Gaussian,
        flags: String::new(),
    }
}

#[test]
fn single_sample_synth_recovers_room_temperature_strain() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = default_generator();
    let s1 = g["samples"].as_array().unwrap().iter().find(|s| s["name"] == "S1").cloned().unwrap();
    g["samples"] = serde_json::json!([s1]);
    for key in ["temperature_series", "piezo"] {
        g.as_object_mut().unwrap().remove(key);
    }
    let gen = write_json(&dir.path().join("gen.json"), &g);
    let out = dir.path().join("out");
    let o = path_str(&out);
    let r = qdstrain(&out, &["synth", path_str(&gen)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cfg = format!("{o}/analysis_config.json");
    let r = qdstrain(&out, &["--config", &cfg, "fit-peaks", &format!("{o}/spectra")]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = qdstrain(
        &out,
        &["--config", &cfg, "strain-map", &format!("{o}/peaks.csv"), "--raman", &format!("{o}/raman.csv")],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);

    let summary: Vec<StrainSummaryRow> = table(&out.join("strain_summary.csv"));
    assert_eq!(summary.len(), 1);
    let s = &summary[0];
    let (rt, err) = (s.strain_rt.unwrap(), s.strain_rt_err.unwrap());
    assert!((rt - 0.42).abs() <= err, "strain_rt {rt} ± {err}");
    assert_eq!(s.n, 30);
    let relax = s.relaxation.unwrap();
    assert!((relax + 0.28).abs() <= s.relaxation_err.unwrap(), "relaxation {relax}");

    let report = read_json(&out.join("report_strain_map.json"));
    let raman = &report["stages"]["strain_map"]["raman"];
    assert!(raman["std_difference"].as_f64().unwrap() <= 0.18);
    assert_eq!(raman["within_tolerance"], true);
    assert_eq!(raman["n"], 30);
}

#[test]
fn unshifted_lines_give_zero_strain() {
    let dir = tempfile::tempdir().unwrap();
    let peaks: Vec<PeakRow> = (0..5).map(|k| peak("A", &format!("L{k:02}"), 296.0, 2017.5)).collect();
    let peaks_path = dir.path().join("peaks.csv");
    write_table(&peaks_path, &PEAK_HEADER, &peaks).unwrap();
    let refs = dir.path().join("refs.csv");
    fs::write(&refs, "sample,location_id,temperature_K,reference_meV,reference_err_meV\nA,*,296,2017.5,0\n").unwrap();
    let out = dir.path().join("out");
    let r = qdstrain(&out, &["strain-map", path_str(&peaks_path), "--references", path_str(&refs)]);
    assert!(r.code == 0 || r.code == 2, "{}", r.stderr);
    let rows: Vec<StrainRow> = table(&out.join("strain_map.csv"));
    assert_eq!(rows.len(), 5);
    for row in rows {
        assert_eq!(row.strain_rt, Some(0.0));
        assert_eq!(row.delta_e_rt, Some(0.0));
    }
}

#[test]
fn missing_reference_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = vec![peak("A", "L00", 296.0, 2017.5)];
    let peaks_path = dir.path().join("peaks.csv");
    write_table(&peaks_path, &PEAK_HEADER, &peaks).unwrap();
    let out = dir.path().join("out");
    let r = qdstrain(&out, &["strain-map", path_str(&peaks_path)]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("no reference energy"), "{}", r.stderr);
}

#[test]
fn peaks_outside_both_temperature_classes_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let peaks = vec![peak("A", "L00", 120.0, 2017.5)];
    let peaks_path = dir.path().join("peaks.csv");
    write_table(&peaks_path, &PEAK_HEADER, &peaks).unwrap();
    let r = qdstrain(&dir.path().join("out"), &["strain-map", path_str(&peaks_path)]);
    assert_eq!(r.code, 1);
}
