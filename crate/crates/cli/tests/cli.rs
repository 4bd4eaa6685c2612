use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rydchip(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydchip"))
        .current_dir(dir)
        .env_remove("RYDCHIP_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

// n = 14..16 lies ~15 THz below 48D, so keep every level
const SMALL_ATOM: [&str; 6] =
    ["--set", "atomic.n_min=14", "--set", "atomic.n_max=16", "--set", "atomic.window_half_ghz=1e5"];

#[test]
fn selftest_passes_and_manifest_checksums_match() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rydchip(tmp.path(), &["selftest", "--out", "st"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 8);
    let m = json(&tmp.path().join("st/selftest.manifest.json"));
    assert_eq!(m["command"], "selftest");
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    for f in files {
        let bytes = std::fs::read(tmp.path().join("st").join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        let sha = f["sha256"].as_str().unwrap();
        assert_eq!(sha.len(), 64);
        assert!(sha.chars().all(|c| c.is_ascii_hexdigit()));
    }
}

#[test]
fn stark_map_small_basis_writes_map_and_crossings() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["stark-map", "--emin", "0", "--emax", "8", "--steps", "5", "--out", "sm"];
    args.extend(SMALL_ATOM);
    let o = rydchip(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("sm/stark_map.csv")).unwrap();
    assert!(csv.starts_with("field_Vcm,level_index,energy_GHz_rel_48D,dominant_n,dominant_l,dominant_mj"));
    let fields: std::collections::BTreeSet<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(fields.len(), 5);
    let s = json(&tmp.path().join("sm/stark_map.json"));
    assert_eq!(s["field_points"], 5);
    assert!(tmp.path().join("sm/stark_map.gp").is_file());
}

#[test]
fn single_step_stark_map_is_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["stark-map", "--emin", "2", "--emax", "2", "--steps", "1", "--out", "one"];
    args.extend(SMALL_ATOM);
    let o = rydchip(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("one/stark_map.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("2,")));
    assert!(csv.lines().count() > 1);
}

#[test]
fn stark_map_places_r1_near_its_resonance_field() {
    // default [45, 51] window, a short grid around the resonance
    let tmp = tempfile::tempdir().unwrap();
    let o = rydchip(tmp.path(), &["stark-map", "--emin", "3.55", "--emax", "3.70", "--steps", "4", "--out", "r1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&tmp.path().join("r1/stark_map.json"));
    let crossings: Vec<f64> = s["crossings"].as_array().unwrap().iter().map(|c| c["field"].as_f64().unwrap()).collect();
    assert!(crossings.iter().any(|f| (f - 3.625).abs() < 0.05), "{crossings:?}");
    assert!(crossings.iter().any(|f| (f - 3.570).abs() < 0.05), "{crossings:?}");
}

#[test]
fn missing_defects_file_is_a_config_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rydchip(tmp.path(), &["stark-map", "--set", "atomic.defects_file=/no/such/defects.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/defects.txt"), "{}", stderr(&o));
}

#[test]
fn empty_scan_range_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["excitation-scan", "--ehmin", "5", "--ehmax", "5", "--steps", "10"][..],
        &["excitation-scan", "--ehmin", "6", "--ehmax", "5"][..],
        &["excitation-scan", "--steps", "0"][..],
    ] {
        let o = rydchip(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(stderr(&o).contains("excitation-scan"));
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[cavity]\nkappa_mhz = 9.0\nkapa = 1\n").unwrap();
    let o = rydchip(tmp.path(), &["selftest", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kapa"));
    let o = rydchip(tmp.path(), &["selftest", "--set", "nosuchsection.x=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rydchip(tmp.path(), &["selftest", "--set", "no-equals-sign"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_physical_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for set in ["cavity.kappa_mhz=-1", "sfi.p=0", "surface.zeta_um=0", "atomic.n_min=60"] {
        let o = rydchip(tmp.path(), &["selftest", "--set", set]);
        assert_eq!(o.status.code(), Some(2), "{set}: {}", stderr(&o));
    }
}

#[test]
fn spectrum_runs_are_byte_identical_and_fit_recovers_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = rydchip(tmp.path(), &["spectrum", "--fit", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for p in ["1", "4", "16"] {
        let name = format!("spectrum_P{p}.csv");
        let a = std::fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b);
    }
    let (ma, mb) = (json(&tmp.path().join("a/spectrum.manifest.json")), json(&tmp.path().join("b/spectrum.manifest.json")));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["outputs"][0]["sha256"], mb["outputs"][0]["sha256"]);
    let fit = json(&tmp.path().join("a/spectrum_fit.json"));
    let ratios: Vec<f64> = fit["rabi_ratios"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((ratios[1] - 2.0).abs() < 0.3 && (ratios[2] - 4.0).abs() < 0.6, "{ratios:?}");
    // a different seed changes the counts
    let o = rydchip(tmp.path(), &["spectrum", "--out", "c", "--set", "run.seed=3"]);
    assert_eq!(o.status.code(), Some(0));
    let c = std::fs::read(tmp.path().join("c/spectrum_P1.csv")).unwrap();
    assert_ne!(c, std::fs::read(tmp.path().join("a/spectrum_P1.csv")).unwrap());
}

#[test]
fn rabi_fit_reports_damping_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rydchip(tmp.path(), &["rabi", "--fit", "--tmax", "1.5us", "--out", "r", "--set", "run.pulses=7500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&tmp.path().join("r/rabi_fit.json"));
    let b = fit["damping_b"].as_f64().unwrap();
    assert!((b - 0.2).abs() < 0.05, "{b}");
    assert_eq!(fit["fits"].as_array().unwrap().len(), 3);
    let o = rydchip(tmp.path(), &["rabi", "--tmax", "soon"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn excitation_scan_fit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let truth = ["--set", "surface.states=[{label='r1',e_r_vcm=3.625,stark_gradient=-300.0,amplitude=0.5},{label='rx',e_r_vcm=3.57,stark_gradient=-285.0,amplitude=0.5}]"];
    let mut args = vec!["excitation-scan", "--ehmin", "2", "--ehmax", "10", "--steps", "81", "--out", "fwd"];
    args.extend(truth);
    let o = rydchip(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // noiseless counts for the configured number of pulses
    let csv = std::fs::read_to_string(tmp.path().join("fwd/excitation_scan.csv")).unwrap();
    let mut data = String::from("E_h_Vcm,counts\n");
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        data.push_str(&format!("{},{}\n", cols[0], cols[1] * 3000.0));
    }
    std::fs::write(tmp.path().join("data.csv"), data).unwrap();
    let o = rydchip(
        tmp.path(),
        &[
            "excitation-scan", "--ehmin", "2", "--ehmax", "10", "--steps", "5", "--fit", "data.csv", "--out", "fit",
            "--set", "surface.e0_vcm=35.0", "--set", "surface.zeta_um=66.0", "--set", "surface.exy_vcm=3.4",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = json(&tmp.path().join("fit/excitation_scan_fit.json"));
    let est = &fit["estimates"];
    for (k, v) in [("A_r1", 0.5), ("A_rx", 0.5), ("E0_Vcm", 37.2), ("zeta_um", 70.0), ("Exy_Vcm", 3.482)] {
        let e = est[k].as_f64().unwrap();
        assert!((e - v).abs() < 1e-4 * v, "{k}: {e} vs {v}");
    }
    let o = rydchip(tmp.path(), &["excitation-scan", "--fit", "missing.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.csv"));
}

#[test]
fn sfi_with_ramp_file_writes_histogram_and_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("ramp.csv"), "t_us,field_Vcm\n0,7.2\n0.5,100\n1.0,210\n").unwrap();
    let o = rydchip(
        tmp.path(),
        &["sfi", "--populations", "r1=0.1,r2=0.9", "--ramp", "ramp.csv", "--set", "sfi.model='classical'", "--out", "s"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let hist = std::fs::read_to_string(tmp.path().join("s/sfi_histogram.csv")).unwrap();
    assert!(hist.starts_with("bin_start_us,bin_end_us,counts"));
    let s = json(&tmp.path().join("s/sfi.json"));
    assert!((s["detection_model_ratio"].as_f64().unwrap() - 5.536).abs() < 1e-3);
    assert!((s["inferred_from_detection_model"]["rho22"].as_f64().unwrap() - 0.9).abs() < 1e-9);
    let o = rydchip(tmp.path(), &["sfi", "--populations", "r3=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rydchip(tmp.path(), &["sfi", "--ramp", "nope.csv", "--set", "sfi.model='classical'"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rydchip"))
        .current_dir(tmp.path())
        .env("RYDCHIP_OUT", "envdir")
        .args(["rabi"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("envdir/rabi.manifest.json").is_file());
}

#[test]
fn threads_flag_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["stark-map", "--steps", "2", "--emin", "1", "--emax", "2", "--threads", "1", "--out", "t"];
    args.extend(SMALL_ATOM);
    assert_eq!(rydchip(tmp.path(), &args).status.code(), Some(0));
    let o = rydchip(tmp.path(), &["selftest", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
