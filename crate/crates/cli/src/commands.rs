//! The five workflows. Each returns the files it wants written and the exit
//! status to report once they are on disk.

use isrs_core::analysis::{
    detrend_and_fft_with, effective_tau_ref, extract_lifetimes, fit_fluence_series, morlet_power, ridge_lifetime,
    spectral_noise_amplitude, wavelet_noise_amplitude, ComponentLifetime, FluenceFitResult, FluenceModel,
    FluencePoint, Lifetimes, SpectrumOptions, SpectrumResult,
};
use isrs_core::detector::{scan_model, shot_noise_scan, ScanOptions, ScanResult, ShotNoiseScan, REFERENCE_PHOTONS};
use isrs_core::io;
use isrs_core::oracle::{check_point, random_grid, OracleCheck, OraclePoint};
use isrs_core::phonon::pump_coefficients;
use isrs_core::probe::{IsrsModel, TracePoint};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{delay_grid, RunConfig};
use crate::output::Artifact;
use crate::CliError;

/// Noise-floor multiple for ridge lifetimes.
const FLOOR_SIGMAS: f64 = 3.0;

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Failure to report after the artifacts are written.
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(artifacts: Vec<Artifact>) -> Self {
        Self { artifacts, failure: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    #[serde(flatten)]
    pub spectrum: SpectrumResult,
    pub two_omega_threshold: f64,
    pub two_omega_present: bool,
}

fn spectrum_report(trace: &[(f64, f64)], cfg: &RunConfig) -> Result<SpectrumReport, CliError> {
    let opts = SpectrumOptions {
        window: cfg.analysis.window,
        detrend_order: cfg.analysis.detrend_order,
        omega: cfg.bath.omega(),
    };
    let spectrum = detrend_and_fft_with(trace, &opts)?;
    let threshold = cfg.analysis.two_omega_threshold;
    Ok(SpectrumReport { two_omega_present: spectrum.two_omega_present(threshold), two_omega_threshold: threshold, spectrum })
}

type Trace = Vec<(f64, f64)>;

fn columns(trace: &[TracePoint]) -> (Trace, Trace) {
    trace.iter().map(|p| ((p.tau, p.mean_ny), (p.tau, p.var_ny))).unzip()
}

#[derive(Debug, Clone, Serialize)]
struct PredictSpectra {
    variant: &'static str,
    mu_s: f64,
    squeezing_r: f64,
    mean: SpectrumReport,
    variance: SpectrumReport,
}

pub fn predict(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let delays = cfg.scan.delays();
    let mut artifacts = Vec::new();
    for (variant, mu_s) in [("squeezing_off", 0.0), ("squeezing_on", cfg.pump.mu_s)] {
        let mut model = cfg.model();
        model.pump.mu_s = mu_s;
        let trace = model.predict(&delays)?;
        let (mean, var) = columns(&trace);
        let spectra = PredictSpectra {
            variant,
            mu_s,
            squeezing_r: pump_coefficients(&model.pump)?.r(),
            mean: spectrum_report(&mean, cfg)?,
            variance: spectrum_report(&var, cfg)?,
        };
        artifacts.push(Artifact::csv(format!("trace_{variant}.csv"), move |p| io::write_prediction_csv(p, &trace)));
        artifacts.push(Artifact::json(format!("spectrum_{variant}.json"), spectra));
    }
    Ok(Outcome::ok(artifacts))
}

fn scan_options(cfg: &RunConfig, seed: u64, sampling: isrs_core::detector::Sampling, histograms: bool) -> ScanOptions {
    ScanOptions {
        n_pulses: cfg.scan.n_pulses,
        m_scans: cfg.scan.m_scans,
        seed,
        sampling,
        histogram_bins: (histograms && cfg.scan.histogram_bins > 0).then_some(cfg.scan.histogram_bins),
    }
}

/// Per-delay standard deviation of the scan-averaged variance, RMS over delays.
fn variance_trace_sigma(scan: &ScanResult, n_pulses: usize) -> f64 {
    let m = scan.per_scan_var.len() as f64;
    let k = 2.0 / ((n_pulses as f64 - 1.0) * m);
    (scan.dt_var.iter().map(|v| v * v * k).sum::<f64>() / scan.dt_var.len() as f64).sqrt()
}

/// Standard deviation of the scan-averaged mean.
fn mean_trace_sigma(scan: &ScanResult, n_pulses: usize) -> f64 {
    let m = scan.per_scan_mean.len() as f64;
    let avg_var = scan.dt_var.iter().sum::<f64>() / scan.dt_var.len() as f64;
    (avg_var / (n_pulses as f64 * m)).sqrt()
}

#[derive(Debug, Clone, Serialize)]
struct ScanSpectra {
    fluence_mj_cm2: f64,
    squeezing_r: f64,
    n_pulses: usize,
    m_scans: usize,
    dt_mean: SpectrumReport,
    dt_var: SpectrumReport,
}

#[derive(Debug, Clone, Serialize)]
struct ScanLifetimes {
    wavelet_width: f64,
    dt_var_noise_floor: f64,
    dt_mean_noise_floor: f64,
    dt_var: Lifetimes,
    dt_mean_omega: ComponentLifetime,
}

pub fn scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model();
    let det = cfg.detector.spec_for(&model);
    let delays = cfg.scan.delays();
    let scan = scan_model(&model, &det, &delays, &scan_options(cfg, cfg.seed, cfg.scan.sampling, true))?;

    let mean: Trace = delays.iter().copied().zip(scan.dt_mean.iter().copied()).collect();
    let var: Trace = delays.iter().copied().zip(scan.dt_var.iter().copied()).collect();
    let spectra = ScanSpectra {
        fluence_mj_cm2: cfg.pump.fluence_mj_cm2,
        squeezing_r: pump_coefficients(&model.pump)?.r(),
        n_pulses: cfg.scan.n_pulses,
        m_scans: cfg.scan.m_scans,
        dt_mean: spectrum_report(&mean, cfg)?,
        dt_var: spectrum_report(&var, cfg)?,
    };

    let freqs = cfg.analysis.wavelet_freqs();
    let width = cfg.analysis.wavelet_width;
    let var_map = morlet_power(&var, &freqs, width)?;
    let mean_map = morlet_power(&mean, &freqs, width)?;
    let dt = cfg.scan.step_ps;
    let f_omega = cfg.bath.frequency_thz;
    let var_floor = FLOOR_SIGMAS
        * wavelet_noise_amplitude(variance_trace_sigma(&scan, cfg.scan.n_pulses), dt, 2.0 * f_omega, width);
    let mean_floor =
        FLOOR_SIGMAS * wavelet_noise_amplitude(mean_trace_sigma(&scan, cfg.scan.n_pulses), dt, f_omega, width);
    let lifetimes = ScanLifetimes {
        wavelet_width: width,
        dt_var_noise_floor: var_floor,
        dt_mean_noise_floor: mean_floor,
        dt_var: extract_lifetimes(&var_map, cfg.bath.omega(), var_floor),
        dt_mean_omega: ridge_lifetime(&mean_map, f_omega, mean_floor),
    };

    let mut artifacts = Vec::new();
    let histograms = scan.histograms.clone();
    let scan_a = std::sync::Arc::new(scan);
    let s1 = scan_a.clone();
    artifacts.push(Artifact::csv("scan.csv", move |p| io::write_scan_csv(p, &s1)));
    let s2 = scan_a.clone();
    artifacts.push(Artifact::csv("scan_per_scan.csv", move |p| io::write_per_scan_csv(p, &s2)));
    if let Some(hs) = histograms {
        for (d, h) in hs.into_iter().enumerate() {
            artifacts.push(Artifact::csv(format!("histograms/delay_{d:04}.csv"), move |p| io::write_histogram_csv(p, &h)));
        }
    }
    artifacts.push(Artifact::json("spectra.json", spectra));
    artifacts.push(Artifact::csv("wavelet.csv", move |p| io::write_wavelet_csv(p, &var_map)));
    artifacts.push(Artifact::csv("wavelet_mean.csv", move |p| io::write_wavelet_csv(p, &mean_map)));
    artifacts.push(Artifact::json("lifetimes.json", lifetimes));
    Ok(Outcome::ok(artifacts))
}

#[derive(Debug, Clone, Serialize)]
struct FluenceReport {
    mu_s_injected: f64,
    relative_error: Option<f64>,
    tau_ref_ps: f64,
    window_ps: (f64, f64),
    #[serde(flatten)]
    fit: FluenceFitResult,
}

/// Measured `2 Omega` cosine amplitudes of the scan-averaged variance, one
/// synthetic acquisition per fluence.
pub fn fluence_points(cfg: &RunConfig) -> Result<Vec<FluencePoint>, CliError> {
    let fs = &cfg.fluence_series;
    let delays = delay_grid(fs.start_ps, fs.stop_ps, fs.step_ps);
    let mut points = Vec::with_capacity(fs.fluences_mj_cm2.len());
    for (i, &f) in fs.fluences_mj_cm2.iter().enumerate() {
        let mut model = cfg.model();
        model.pump = cfg.pump.spec_at(f);
        let det = cfg.detector.spec_for(&model);
        let opts = scan_options(cfg, cfg.seed.wrapping_add(i as u64), fs.sampling, false);
        let scan = scan_model(&model, &det, &delays, &opts)?;
        let var: Trace = delays.iter().copied().zip(scan.dt_var.iter().copied()).collect();
        let rep = spectrum_report(&var, cfg)?;
        let sigma =
            spectral_noise_amplitude(variance_trace_sigma(&scan, cfg.scan.n_pulses), cfg.analysis.window, delays.len());
        points.push(FluencePoint { fluence: f, a2omega: rep.spectrum.peak_2omega, sigma });
    }
    Ok(points)
}

pub fn fluence_model(cfg: &RunConfig, model: &IsrsModel) -> FluenceModel {
    let det = cfg.detector.spec_for(model);
    FluenceModel {
        bath: model.bath,
        probe: model.probe,
        thermal_n: model.thermal_n,
        k_modes: cfg.pump.k_modes,
        photons_per_fluence: cfg.pump.photons_per_fluence,
        signal_scale: (det.gain_v_per_photon * det.quantum_efficiency).powi(2),
    }
}

pub fn fluence(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fs = &cfg.fluence_series;
    let points = fluence_points(cfg)?;
    let model = cfg.model();
    let delays = delay_grid(fs.start_ps, fs.stop_ps, fs.step_ps);
    let tau_ref = effective_tau_ref(&delays, model.bath.lambda, cfg.analysis.window);
    let fit = fit_fluence_series(&points, &fluence_model(cfg, &model), tau_ref)?;
    let mu = cfg.pump.mu_s.abs();
    let report = FluenceReport {
        mu_s_injected: mu,
        relative_error: (mu > 0.0).then(|| (fit.mu_s_hat - mu).abs() / mu),
        tau_ref_ps: tau_ref,
        window_ps: (fs.start_ps, fs.stop_ps),
        fit,
    };
    Ok(Outcome::ok(vec![
        Artifact::csv("fluence_series.csv", move |p| io::write_fluence_csv(p, &points)),
        Artifact::json("fluence_fit.json", report),
    ]))
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PointOutcome {
    Pass { check: OracleCheck },
    Fail { check: OracleCheck },
    Error { point: OraclePoint, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub points: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub max_moment_error: f64,
    pub max_mean_rel_error: f64,
    pub max_var_rel_error: f64,
    pub results: Vec<PointOutcome>,
}

pub fn run_oracle(cfg: &RunConfig) -> OracleSummary {
    let cut = cfg.oracle.cutoffs();
    let fault = cfg.oracle.fault;
    let results: Vec<PointOutcome> = random_grid(cfg.oracle.points, cfg.seed)
        .par_iter()
        .map(|p| match check_point(p, &cut, fault) {
            Ok(check) if check.passed => PointOutcome::Pass { check },
            Ok(check) => PointOutcome::Fail { check },
            Err(e) => PointOutcome::Error { point: *p, message: e.to_string() },
        })
        .collect();
    let checks = || {
        results.iter().filter_map(|r| match r {
            PointOutcome::Pass { check } | PointOutcome::Fail { check } => Some(check),
            PointOutcome::Error { .. } => None,
        })
    };
    let max_of = |f: fn(&OracleCheck) -> f64| checks().map(f).fold(0.0, f64::max);
    OracleSummary {
        points: results.len(),
        passed: results.iter().filter(|r| matches!(r, PointOutcome::Pass { .. })).count(),
        failed: results.iter().filter(|r| matches!(r, PointOutcome::Fail { .. })).count(),
        errors: results.iter().filter(|r| matches!(r, PointOutcome::Error { .. })).count(),
        max_moment_error: max_of(|c| c.moment_error),
        max_mean_rel_error: max_of(|c| c.mean_rel_error),
        max_var_rel_error: max_of(|c| c.var_rel_error),
        results,
    }
}

pub fn oracle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let summary = run_oracle(cfg);
    let failure = (summary.failed + summary.errors > 0).then(|| {
        CliError::Check(format!(
            "oracle: {} of {} points failed, {} errored",
            summary.failed, summary.points, summary.errors
        ))
    });
    Ok(Outcome { artifacts: vec![Artifact::json("oracle_report.json", summary)], failure })
}

#[derive(Debug, Clone, Serialize)]
struct ShotNoiseReport {
    n_pulses: usize,
    repeats: usize,
    gain_v_per_photon: f64,
    #[serde(flatten)]
    scan: ShotNoiseScan,
}

pub fn shot_noise(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sn = &cfg.shot_noise;
    let det = cfg.detector.spec_with_reference(REFERENCE_PHOTONS);
    let scan = shot_noise_scan(&sn.powers_mw, &det, sn.n_pulses, cfg.seed, sn.repeats)?;
    let points = scan.points.clone();
    let report = ShotNoiseReport { n_pulses: sn.n_pulses, repeats: sn.repeats, gain_v_per_photon: det.gain_v_per_photon, scan };
    Ok(Outcome::ok(vec![
        Artifact::csv("shot_noise.csv", move |p| io::write_shot_noise_csv(p, &points)),
        Artifact::json("shot_noise_fit.json", report),
    ]))
}
