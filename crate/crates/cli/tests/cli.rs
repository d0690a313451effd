use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn isrs(dir: &Path, config: &str, args: &[&str]) -> (i32, PathBuf, String) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_isrs"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (o.status.code().unwrap_or(-1), out, String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_SCAN: &str = "
[scan]
stop_ps = 2.0
n_pulses = 300
m_scans = 2
";

#[test]
fn predict_writes_traces_and_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "", &["predict"]);
    assert_eq!(code, 0, "{err}");
    for f in ["trace_squeezing_off.csv", "trace_squeezing_on.csv", "spectrum_squeezing_off.json", "spectrum_squeezing_on.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let off = json(&out.join("spectrum_squeezing_off.json"));
    let on = json(&out.join("spectrum_squeezing_on.json"));
    assert_eq!(off["variance"]["two_omega_present"], false);
    assert_eq!(on["variance"]["two_omega_present"], true);
    assert_eq!(on["mean"]["two_omega_present"], false);
    let header = std::fs::read_to_string(out.join("trace_squeezing_on.csv")).unwrap();
    assert!(header.starts_with("delay_ps,mean_ny,var_ny\n"));
}

#[test]
fn zero_squeezing_config_flags_no_two_omega() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[pump]\nmu_s = 0.0\n", &["predict"]);
    assert_eq!(code, 0, "{err}");
    let on = json(&out.join("spectrum_squeezing_on.json"));
    assert_eq!(on["variance"]["two_omega_present"], false);
}

#[test]
fn bad_delay_step_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[scan]\nstep_ps = 0.0\n", &["predict"]);
    assert_eq!(code, 2);
    assert!(err.contains("scan.step_ps"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[probe]\ncoupling_angle = 0.1\n", &["scan"]);
    assert_eq!(code, 2);
    assert!(err.contains("coupling_angle"), "{err}");
    assert!(!out.exists());
}

#[test]
fn zero_threads_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = isrs(dir.path(), "", &["predict", "--threads", "0"]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn scan_is_byte_identical_for_a_fixed_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, oa, ea) = isrs(a.path(), SMALL_SCAN, &["scan", "--seed", "17", "--threads", "1"]);
    let (cb, ob, eb) = isrs(b.path(), SMALL_SCAN, &["scan", "--seed", "17", "--threads", "2"]);
    assert_eq!(ca, 0, "{ea}");
    assert_eq!(cb, 0, "{eb}");
    for f in ["scan.csv", "scan_per_scan.csv", "wavelet.csv", "spectra.json", "lifetimes.json"] {
        assert_eq!(std::fs::read(oa.join(f)).unwrap(), std::fs::read(ob.join(f)).unwrap(), "{f} differs");
    }
    let m = json(&oa.join("manifest.json"));
    assert_eq!(m["seed"], 17);
    assert_eq!(m["effective_config"]["seed"], 17);

    let c = tempfile::tempdir().unwrap();
    let (_, oc, _) = isrs(c.path(), SMALL_SCAN, &["scan", "--seed", "18"]);
    assert_ne!(std::fs::read(oa.join("scan.csv")).unwrap(), std::fs::read(oc.join("scan.csv")).unwrap());
}

#[test]
fn manifest_digests_match_outputs_and_config_is_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), SMALL_SCAN, &["scan"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read_to_string(dir.path().join("run.toml")).unwrap(), SMALL_SCAN);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "scan");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config_file_sha256"].as_str().unwrap(), isrs_cli::output::sha256_hex(SMALL_SCAN.as_bytes()));
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 5);
    for o in outputs {
        let p = out.join(o["path"].as_str().unwrap());
        assert_eq!(isrs_cli::output::file_sha256(&p).unwrap(), o["sha256"].as_str().unwrap());
    }
}

#[test]
fn single_scan_has_one_per_scan_row_per_delay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scan]\nstop_ps = 1.0\nn_pulses = 100\nm_scans = 1\nhistogram_bins = 8\n";
    let (code, out, err) = isrs(dir.path(), cfg, &["scan"]);
    assert_eq!(code, 0, "{err}");
    let per = std::fs::read_to_string(out.join("scan_per_scan.csv")).unwrap();
    assert_eq!(per.lines().count(), 1 + 51);
    assert!(per.lines().skip(1).all(|l| l.starts_with("0,")));
    let hist = std::fs::read_dir(out.join("histograms")).unwrap().count();
    assert_eq!(hist, 51);
}

#[test]
fn csv_only_output_skips_json() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[outputs]\nformats = [\"csv\"]\n", &["predict"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("trace_squeezing_on.csv").is_file());
    assert!(!out.join("spectrum_squeezing_on.json").exists());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn single_fluence_is_a_fit_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[fluence_series]\nfluences_mj_cm2 = [14.0]\n", &["fluence"]);
    assert_eq!(code, 4, "{err}");
    assert!(!out.exists());
}

#[test]
fn fluence_closed_loop_recovers_the_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "", &["fluence", "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let fit = json(&out.join("fluence_fit.json"));
    let rel = fit["relative_error"].as_f64().unwrap();
    assert!(rel < 0.05, "{fit}");
    let series = std::fs::read_to_string(out.join("fluence_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 7);
}

#[test]
fn fluence_series_without_squeezing_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[pump]\nmu_s = 0.0\n", &["fluence", "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let fit = json(&out.join("fluence_fit.json"));
    let mu = fit["mu_s_hat"].as_f64().unwrap();
    assert!(mu.abs() < 0.01, "{fit}");
    let series = isrs_core::io::read_fluence_csv(&out.join("fluence_series.csv")).unwrap();
    for p in &series {
        assert!(p.a2omega < 5.0 * p.sigma, "{p:?}");
    }
}

#[test]
fn oracle_small_grid_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "[oracle]\npoints = 2\n", &["oracle"]);
    assert_eq!(code, 0, "{err}");
    let rep = json(&out.join("oracle_report.json"));
    assert_eq!(rep["passed"], 2);
}

#[test]
fn oracle_fault_hook_fails_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[oracle]\npoints = 2\nfault = \"flip_anomalous_term\"\n";
    let (code, out, _) = isrs(dir.path(), cfg, &["oracle", "--seed", "3"]);
    assert_eq!(code, 3);
    let rep = json(&out.join("oracle_report.json"));
    assert!(rep["failed"].as_u64().unwrap() >= 1, "{rep}");
    assert_eq!(json(&out.join("manifest.json"))["exit_code"], 3);
}

#[test]
fn oracle_tiny_cutoff_reports_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[oracle]\npoints = 2\nphonon_dim = 4\nmax_doublings = 0\n";
    let (code, out, _) = isrs(dir.path(), cfg, &["oracle"]);
    assert_eq!(code, 3);
    let rep = json(&out.join("oracle_report.json"));
    assert_eq!(rep["errors"], 2);
    assert!(rep["results"][0]["message"].as_str().unwrap().contains("truncation"));
}

#[test]
fn shot_noise_scan_is_linear() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = isrs(dir.path(), "", &["shot-noise"]);
    assert_eq!(code, 0, "{err}");
    let rep = json(&out.join("shot_noise_fit.json"));
    assert!(rep["fit"]["r_squared"].as_f64().unwrap() > 0.999, "{rep}");
    let csv = std::fs::read_to_string(out.join("shot_noise.csv")).unwrap();
    assert!(csv.starts_with("power_mw,variance_v2\n"));
}

#[test]
fn bundled_example_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let cfg = isrs_cli::config::RunConfig::from_toml(&text).unwrap();
    let mut expected = isrs_cli::config::RunConfig::default();
    expected.outputs.dir = cfg.outputs.dir.clone();
    assert_eq!(cfg, expected);
}
