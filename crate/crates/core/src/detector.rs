//! Single-pulse differential acquisition: photodiode thinning, reference
//! subtraction, electronic noise, and per-delay pulse statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{domain, Error, Result};
use crate::probe::{check_delays, IsrsModel, ObservablePair};

/// Photodiode quantum efficiency of the balanced detector.
pub const DEFAULT_QUANTUM_EFFICIENCY: f64 = 0.94;
/// Electronic noise floor (V^2).
pub const DEFAULT_ELECTRONIC_VAR: f64 = 0.1;
/// Probe photons per pulse at the reference power.
pub const REFERENCE_PHOTONS: f64 = 1e6;
/// Probe power (mW) at which the shot-noise variance is calibrated to 1 V^2.
pub const REFERENCE_POWER_MW: f64 = 2.5;
/// Elementary charge (fC) x charge amplifier sensitivity (V/fC) x samples
/// summed per pulse: volts per photoelectron in the summed-sample convention.
pub const PHYSICAL_GAIN_V_PER_ELECTRON: f64 = 1.602_176_634e-4 * 5.2e-3 * 300.0;

pub const DEFAULT_PULSES: usize = 4000;
pub const DEFAULT_SCANS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub quantum_efficiency: f64,
    pub gain_v_per_photon: f64,
    pub electronic_var: f64,
    pub ref_mean_photons: f64,
    pub unbalance_v: f64,
    /// Standard deviation (V) of the per-pulse step of a slow random-walk
    /// offset; zero disables drift.
    #[serde(default)]
    pub drift_step_v: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::calibrated(DEFAULT_QUANTUM_EFFICIENCY, DEFAULT_ELECTRONIC_VAR, REFERENCE_PHOTONS)
    }
}

/// Probe photons per pulse for a probe power in mW.
pub fn photons_for_power(power_mw: f64) -> f64 {
    power_mw / REFERENCE_POWER_MW * REFERENCE_PHOTONS
}

impl DetectorSpec {
    /// Detector whose shot-noise-limited variance is 1 V^2 for
    /// [`REFERENCE_PHOTONS`] in each arm.
    pub fn calibrated(quantum_efficiency: f64, electronic_var: f64, ref_mean_photons: f64) -> Self {
        let photonic = (1.0 - electronic_var).max(0.0);
        let gain = (photonic / (2.0 * quantum_efficiency * REFERENCE_PHOTONS)).sqrt();
        Self {
            quantum_efficiency,
            gain_v_per_photon: gain,
            electronic_var,
            ref_mean_photons,
            unbalance_v: 0.0,
            drift_step_v: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return domain(format!("quantum_efficiency must lie in (0, 1], got {}", self.quantum_efficiency));
        }
        if !(self.gain_v_per_photon >= 0.0 && self.gain_v_per_photon.is_finite()) {
            return domain("gain_v_per_photon must be finite and >= 0");
        }
        if !(self.electronic_var >= 0.0 && self.electronic_var.is_finite()) {
            return domain("electronic_var must be finite and >= 0");
        }
        if !(self.ref_mean_photons >= 0.0 && self.ref_mean_photons.is_finite()) {
            return domain("ref_mean_photons must be finite and >= 0");
        }
        if !(self.unbalance_v.is_finite() && self.drift_step_v >= 0.0 && self.drift_step_v.is_finite()) {
            return domain("unbalance_v and drift_step_v must be finite, drift_step_v >= 0");
        }
        Ok(())
    }

    /// Mean and variance of a single `Delta T` sample without drift.
    pub fn pulse_moments(&self, obs: ObservablePair) -> (f64, f64) {
        let eta = self.quantum_efficiency;
        let g = self.gain_v_per_photon;
        let mean = g * eta * (obs.mean_ny - self.ref_mean_photons) + self.unbalance_v;
        let var = g * g * (eta * eta * obs.var_ny + eta * (1.0 - eta) * obs.mean_ny + eta * self.ref_mean_photons)
            + self.electronic_var;
        (mean, var)
    }
}

/// Per-pulse differential voltages of one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEnsemble {
    pub samples: Vec<f64>,
    pub seed: u64,
}

impl PulseEnsemble {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// `(1/N) sum (x_i - mean)^2`
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn histogram(&self, bins: usize) -> Histogram {
        Histogram::of(&self.samples, bins)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_left_v: Vec<f64>,
    pub bin_width_v: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(samples: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0u64; bins];
        for &x in samples {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { bin_left_v: (0..bins).map(|k| lo + k as f64 * width).collect(), bin_width_v: width, counts }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_observables(obs: ObservablePair, n_pulses: usize) -> Result<()> {
    if n_pulses < 2 {
        return domain(format!("n_pulses must be >= 2, got {n_pulses}"));
    }
    if !(obs.var_ny >= 0.0 && obs.mean_ny >= 0.0) {
        return domain(format!("photon statistics must be non-negative (mean {}, var {})", obs.mean_ny, obs.var_ny));
    }
    Ok(())
}

fn pulses_from(obs: ObservablePair, det: &DetectorSpec, n_pulses: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let eta = det.quantum_efficiency;
    let sig_mean = eta * obs.mean_ny;
    let sig_sd = (eta * eta * obs.var_ny + eta * (1.0 - eta) * obs.mean_ny).sqrt();
    let ref_mean = eta * det.ref_mean_photons;
    let ref_sd = ref_mean.sqrt();
    let el_sd = det.electronic_var.sqrt();
    let mut drift = 0.0;
    (0..n_pulses)
        .map(|_| {
            let z: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            let signal = sig_mean + sig_sd * z[0];
            let reference = ref_mean + ref_sd * z[1];
            if det.drift_step_v > 0.0 {
                let step: f64 = StandardNormal.sample(rng);
                drift += det.drift_step_v * step;
            }
            det.gain_v_per_photon * (signal - reference) + det.unbalance_v + el_sd * z[2] + drift
        })
        .collect()
}

/// Simulates `n_pulses` differential voltages for fixed photon statistics.
pub fn sample_pulse_ensemble(
    mean_ny: f64,
    var_ny: f64,
    det: &DetectorSpec,
    n_pulses: usize,
    seed: u64,
) -> Result<PulseEnsemble> {
    let obs = ObservablePair { mean_ny, var_ny };
    check_observables(obs, n_pulses)?;
    det.validate()?;
    let mut rng = stream_rng(seed, 0);
    Ok(PulseEnsemble { samples: pulses_from(obs, det, n_pulses, &mut rng), seed })
}

/// How cell statistics are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Draw every pulse.
    #[default]
    Pulses,
    /// Draw the sample mean and variance directly from their joint law for
    /// i.i.d. Gaussian pulses: `N(mu, s^2/N)` and `s^2 chi^2_{N-1} / N`,
    /// independent. Same distribution as `Pulses` when drift is off.
    Statistics,
}

fn cell_statistics(
    obs: ObservablePair,
    det: &DetectorSpec,
    n_pulses: usize,
    sampling: Sampling,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, Option<Vec<f64>>)> {
    if sampling == Sampling::Statistics && det.drift_step_v == 0.0 {
        let (mu, var) = det.pulse_moments(obs);
        let n = n_pulses as f64;
        let z: f64 = StandardNormal.sample(rng);
        let chi = ChiSquared::new(n - 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        let mean = mu + (var / n).sqrt() * z;
        return Ok((mean, var * chi.sample(rng) / n, None));
    }
    let ens = PulseEnsemble { samples: pulses_from(obs, det, n_pulses, rng), seed: 0 };
    Ok((ens.mean(), ens.variance(), Some(ens.samples)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub n_pulses: usize,
    pub m_scans: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// Histogram bins for the first scan at each delay; `None` skips histograms.
    pub histogram_bins: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { n_pulses: DEFAULT_PULSES, m_scans: DEFAULT_SCANS, seed: 0, sampling: Sampling::Pulses, histogram_bins: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub delays: Vec<f64>,
    pub dt_mean: Vec<f64>,
    pub dt_var: Vec<f64>,
    /// `per_scan_mean[l][d]`
    pub per_scan_mean: Vec<Vec<f64>>,
    pub per_scan_var: Vec<Vec<f64>>,
    /// One histogram per delay from the first scan.
    pub histograms: Option<Vec<Histogram>>,
}

/// Synthetic pump-probe acquisition over `delays`, repeated `m_scans` times.
///
/// Every (delay, scan) cell draws from its own ChaCha stream, so results do
/// not depend on scheduling.
pub fn scan_model(model: &IsrsModel, det: &DetectorSpec, delays: &[f64], opts: &ScanOptions) -> Result<ScanResult> {
    det.validate()?;
    if opts.m_scans == 0 {
        return domain("m_scans must be >= 1");
    }
    check_delays(delays)?;
    let trace = model.predict(delays)?;
    let m = opts.m_scans;
    let want_hist = opts.histogram_bins.is_some();
    let sampling = if want_hist { Sampling::Pulses } else { opts.sampling };

    let cells: Vec<(f64, f64, Option<Histogram>)> = (0..delays.len() * m)
        .into_par_iter()
        .map(|cell| {
            let (d, l) = (cell / m, cell % m);
            let obs = ObservablePair { mean_ny: trace[d].mean_ny, var_ny: trace[d].var_ny };
            check_observables(obs, opts.n_pulses)?;
            let mut rng = stream_rng(opts.seed, ((d as u64) << 32) | l as u64);
            let (mean, var, samples) = if want_hist && l == 0 {
                cell_statistics(obs, det, opts.n_pulses, Sampling::Pulses, &mut rng)?
            } else {
                cell_statistics(obs, det, opts.n_pulses, sampling, &mut rng)?
            };
            let hist = match (opts.histogram_bins, samples) {
                (Some(bins), Some(s)) if l == 0 => Some(Histogram::of(&s, bins)),
                _ => None,
            };
            Ok((mean, var, hist))
        })
        .collect::<Result<_>>()?;

    let nd = delays.len();
    let mut per_scan_mean = vec![vec![0.0; nd]; m];
    let mut per_scan_var = vec![vec![0.0; nd]; m];
    let mut histograms = Vec::new();
    for (cell, (mean, var, hist)) in cells.into_iter().enumerate() {
        let (d, l) = (cell / m, cell % m);
        per_scan_mean[l][d] = mean;
        per_scan_var[l][d] = var;
        if let Some(h) = hist {
            histograms.push(h);
        }
    }
    let avg = |rows: &Vec<Vec<f64>>| (0..nd).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / m as f64).collect();
    Ok(ScanResult {
        delays: delays.to_vec(),
        dt_mean: avg(&per_scan_mean),
        dt_var: avg(&per_scan_var),
        per_scan_mean,
        per_scan_var,
        histograms: want_hist.then_some(histograms),
    })
}

/// [`scan_model`] with the sample initially in equilibrium with the bath.
#[allow(clippy::too_many_arguments)]
pub fn scan_experiment(
    pump: &crate::phonon::PumpSpec,
    bath: &crate::phonon::BathSpec,
    probe: &crate::probe::ProbeSpec,
    det: &DetectorSpec,
    delays: &[f64],
    n_pulses: usize,
    m_scans: usize,
    seed: u64,
) -> Result<ScanResult> {
    let model = IsrsModel { pump: *pump, bath: *bath, probe: *probe, thermal_n: bath.n_bath };
    scan_model(&model, det, delays, &ScanOptions { n_pulses, m_scans, seed, ..Default::default() })
}

/// Ordinary least-squares line with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    /// Half-width of the two-sided 95% confidence interval of the intercept.
    pub intercept_ci95: f64,
}

impl LinearFit {
    pub fn intercept_covers(&self, value: f64) -> bool {
        (self.intercept - value).abs() <= self.intercept_ci95
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::Fit { message: format!("linear fit needs >= 3 paired points, got {n}"), residual_trace: vec![] });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit { message: "abscissae are all equal".into(), residual_trace: vec![] });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = ss_res / (nf - 2.0);
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(0.975);
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r_squared: if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 },
        intercept_ci95: t * intercept_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotNoiseScan {
    /// `(power_mw, variance_v2)`, variance averaged over repeats.
    pub points: Vec<(f64, f64)>,
    pub fit: LinearFit,
}

/// Variance of balanced, unpumped acquisitions against probe power (mW).
///
/// Both arms carry [`photons_for_power`] photons; each power is acquired
/// `repeats` times and the per-acquisition variances averaged.
pub fn shot_noise_scan(
    powers_mw: &[f64],
    det: &DetectorSpec,
    n_pulses: usize,
    seed: u64,
    repeats: usize,
) -> Result<ShotNoiseScan> {
    let points = shot_noise_variances(powers_mw, det, n_pulses, seed, repeats)?;
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    Ok(ShotNoiseScan { fit: linear_fit(&x, &y)?, points })
}

/// The `(power_mw, variance_v2)` points of [`shot_noise_scan`] without the fit.
pub fn shot_noise_variances(
    powers_mw: &[f64],
    det: &DetectorSpec,
    n_pulses: usize,
    seed: u64,
    repeats: usize,
) -> Result<Vec<(f64, f64)>> {
    det.validate()?;
    if powers_mw.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return domain("powers must be positive");
    }
    if repeats == 0 {
        return domain("repeats must be >= 1");
    }
    powers_mw
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let photons = photons_for_power(p);
            let arm = DetectorSpec { ref_mean_photons: photons, ..*det };
            let obs = ObservablePair { mean_ny: photons, var_ny: photons };
            check_observables(obs, n_pulses)?;
            let mut total = 0.0;
            for rep in 0..repeats {
                let mut rng = stream_rng(seed, ((i as u64) << 32) | rep as u64);
                let ens = PulseEnsemble { samples: pulses_from(obs, &arm, n_pulses, &mut rng), seed };
                total += ens.variance();
            }
            Ok((p, total / repeats as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonon::{BathSpec, PumpSpec, QUARTZ_E_MODE_OMEGA};
    use crate::probe::ProbeSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ideal() -> DetectorSpec {
        DetectorSpec {
            quantum_efficiency: 1.0,
            gain_v_per_photon: 1e-3,
            electronic_var: 0.0,
            ref_mean_photons: 0.0,
            unbalance_v: 0.0,
            drift_step_v: 0.0,
        }
    }

    fn model(mu_s: f64, mu_d: f64) -> IsrsModel {
        IsrsModel {
            pump: PumpSpec::with_intensity(mu_d, mu_s, 1.4, 1000),
            bath: BathSpec { omega: QUARTZ_E_MODE_OMEGA, lambda: 2.0 / 7.0, n_bath: 1.18 },
            probe: ProbeSpec::new(0.05, 1e6),
            thermal_n: 1.18,
        }
    }

    #[test]
    fn coherent_light_gives_shot_noise() {
        let n = 4000;
        let mean = 1e6;
        let ens = sample_pulse_ensemble(mean, mean, &ideal(), n, 3).unwrap();
        let g = ideal().gain_v_per_photon;
        let scaled = ens.variance() / (g * g);
        // population variance has mean (N-1)/N s^2 and sd s^2 sqrt(2(N-1))/N
        let nf = n as f64;
        let expect = mean * (nf - 1.0) / nf;
        let sd = mean * (2.0 * (nf - 1.0)).sqrt() / nf;
        assert!((scaled - expect).abs() < 5.0 * sd, "{scaled} vs {expect}");
        assert_eq!(ens.samples.len(), n);
    }

    #[test]
    fn zero_gain_returns_unbalance() {
        let det = DetectorSpec { gain_v_per_photon: 0.0, unbalance_v: 0.37, ..ideal() };
        let ens = sample_pulse_ensemble(1e6, 1e6, &det, 100, 1).unwrap();
        assert!(ens.samples.iter().all(|&x| x == 0.37));
    }

    #[test]
    fn default_calibration_is_one_volt_squared() {
        let det = DetectorSpec::default();
        let (_, var) = det.pulse_moments(ObservablePair { mean_ny: 1e6, var_ny: 1e6 });
        assert_relative_eq!(var, 1.0, max_relative = 1e-12);
        assert!((det.gain_v_per_photon - 6.92e-4).abs() < 1e-6);
        let ens = sample_pulse_ensemble(1e6, 1e6, &det, 4000, 9).unwrap();
        assert!((ens.variance() - 1.0).abs() < 5.0 * (2.0f64 / 4000.0).sqrt());
        assert!((PHYSICAL_GAIN_V_PER_ELECTRON - 2.4994e-4).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(sample_pulse_ensemble(1e6, 1e6, &ideal(), 1, 0).is_err());
        assert!(sample_pulse_ensemble(1e6, -1.0, &ideal(), 10, 0).is_err());
        let bad = DetectorSpec { quantum_efficiency: 0.0, ..ideal() };
        assert!(sample_pulse_ensemble(1e6, 1e6, &bad, 10, 0).is_err());
    }

    #[test]
    fn unbiased_mean_over_seeds() {
        let det = DetectorSpec { unbalance_v: 0.05, ref_mean_photons: 0.99e6, ..DetectorSpec::default() };
        let obs = ObservablePair { mean_ny: 1e6, var_ny: 1.2e6 };
        let (mu, var) = det.pulse_moments(obs);
        let n = 4000;
        let means: Vec<f64> = (0..100)
            .map(|s| sample_pulse_ensemble(obs.mean_ny, obs.var_ny, &det, n, s).unwrap().mean())
            .collect();
        let grand = means.iter().sum::<f64>() / 100.0;
        let sd = (var / (n as f64 * 100.0)).sqrt();
        let expect = det.gain_v_per_photon * det.quantum_efficiency * (1e6 - 0.99e6) + 0.05;
        assert_relative_eq!(mu, expect, max_relative = 1e-12);
        assert!((grand - expect).abs() < 5.0 * sd, "{grand} vs {expect} (sd {sd})");
    }

    #[test]
    fn electronic_noise_adds_exactly() {
        let base = DetectorSpec::calibrated(0.94, 0.0, 1e6);
        let noisy = DetectorSpec { electronic_var: 0.25, ..base };
        let (_, v0) = base.pulse_moments(ObservablePair { mean_ny: 1e6, var_ny: 1e6 });
        let (_, v1) = noisy.pulse_moments(ObservablePair { mean_ny: 1e6, var_ny: 1e6 });
        assert_relative_eq!(v1 - v0, 0.25, max_relative = 1e-12);

        // Same seed: the photonic part is identical, the electronic part is
        // the same standard normal scaled by its sd.
        let a = sample_pulse_ensemble(1e6, 1e6, &base, 4000, 17).unwrap();
        let b = sample_pulse_ensemble(1e6, 1e6, &noisy, 4000, 17).unwrap();
        let diff = PulseEnsemble { samples: a.samples.iter().zip(&b.samples).map(|(x, y)| y - x).collect(), seed: 0 };
        assert!((diff.variance() - 0.25).abs() < 5.0 * 0.25 * (2.0f64 / 4000.0).sqrt());
    }

    #[test]
    fn statistics_sampler_matches_pulse_sampler() {
        let det = DetectorSpec::default();
        let obs = ObservablePair { mean_ny: 1e6, var_ny: 1.3e6 };
        let trials = 400;
        let n = 500;
        let collect = |mode: Sampling| -> (f64, f64, f64) {
            let (mut sm, mut sv, mut svv) = (0.0, 0.0, 0.0);
            for t in 0..trials {
                let mut rng = stream_rng(1000 + t, if mode == Sampling::Pulses { 1 } else { 2 });
                let (m, v, _) = cell_statistics(obs, &det, n, mode, &mut rng).unwrap();
                sm += m;
                sv += v;
                svv += v * v;
            }
            let t = trials as f64;
            (sm / t, sv / t, svv / t - (sv / t).powi(2))
        };
        let (m_p, v_p, vv_p) = collect(Sampling::Pulses);
        let (m_s, v_s, vv_s) = collect(Sampling::Statistics);
        let (mu, var) = det.pulse_moments(obs);
        let nf = n as f64;
        let mean_sd = (var / nf / trials as f64).sqrt();
        let ev = var * (nf - 1.0) / nf;
        let var_sd = var * (2.0 * (nf - 1.0)).sqrt() / nf / (trials as f64).sqrt();
        for (m, v) in [(m_p, v_p), (m_s, v_s)] {
            assert!((m - mu).abs() < 5.0 * mean_sd);
            assert!((v - ev).abs() < 5.0 * var_sd);
        }
        // spread of the variance statistic agrees within 25%
        assert!((vv_p / vv_s - 1.0).abs() < 0.25, "{vv_p} {vv_s}");
    }

    #[test]
    fn scan_is_deterministic_and_shaped() {
        let m = model(0.05 / 1000.0, 0.3 / 1000.0);
        let delays: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let opts = ScanOptions { n_pulses: 200, m_scans: 3, seed: 42, sampling: Sampling::Pulses, histogram_bins: Some(16) };
        let a = scan_model(&m, &DetectorSpec::default(), &delays, &opts).unwrap();
        let b = scan_model(&m, &DetectorSpec::default(), &delays, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_scan_mean.len(), 3);
        assert_eq!(a.per_scan_var[0].len(), 20);
        assert!(a.dt_var.iter().all(|&v| v >= 0.0));
        let h = a.histograms.as_ref().unwrap();
        assert_eq!(h.len(), 20);
        assert!(h.iter().all(|h| h.counts.iter().sum::<u64>() == 200));
        let c = scan_model(&m, &DetectorSpec::default(), &delays, &ScanOptions { seed: 43, ..opts }).unwrap();
        assert_ne!(a.dt_mean, c.dt_mean);
    }

    #[test]
    fn pump_off_noise_floor_is_flat() {
        let m = model(0.0, 0.0);
        let delays: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let det = DetectorSpec { ref_mean_photons: m.unpumped().mean_ny, ..DetectorSpec::default() };
        let opts = ScanOptions { n_pulses: 4000, m_scans: 10, seed: 7, ..Default::default() };
        let scan = scan_model(&m, &det, &delays, &opts).unwrap();
        let fit = linear_fit(&delays, &scan.dt_var).unwrap();
        assert!(fit.slope.abs() < 3.0 * fit.slope_se, "slope {} +- {}", fit.slope, fit.slope_se);
        let spread = scan.dt_mean.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let (mu, var) = det.pulse_moments(m.unpumped());
        assert!(mu.abs() < 1e-12);
        assert!(spread < 5.0 * (var / 40_000.0).sqrt(), "{spread}");
    }

    #[test]
    fn scan_experiment_uses_bath_equilibrium() {
        let m = model(0.0, 0.0);
        let delays = [0.0, 1.0];
        let a = scan_experiment(&m.pump, &m.bath, &m.probe, &DetectorSpec::default(), &delays, 100, 2, 5).unwrap();
        let b = scan_model(&m, &DetectorSpec::default(), &delays, &ScanOptions { n_pulses: 100, m_scans: 2, seed: 5, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shot_noise_scan_is_linear() {
        let det = DetectorSpec::default();
        let powers: Vec<f64> = (1..=10).map(|i| 0.25 * i as f64).collect();
        let scan = shot_noise_scan(&powers, &det, 4000, 11, 10).unwrap();
        assert!(scan.fit.r_squared > 0.999, "{:?}", scan.fit);
        assert!(scan.fit.intercept_covers(det.electronic_var), "{:?}", scan.fit);
        let at_ref = scan.fit.intercept + scan.fit.slope * REFERENCE_POWER_MW;
        assert!((at_ref - 1.0).abs() < 0.02);

        let quiet = DetectorSpec { electronic_var: 0.0, ..det };
        let scan = shot_noise_scan(&powers, &quiet, 4000, 12, 10).unwrap();
        assert!(scan.fit.intercept_covers(0.0), "{:?}", scan.fit);
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert!(linear_fit(&x[..2], &y[..2]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn doubling_power_doubles_excess_variance(p in 0.3..1.2f64, seed in 0u64..1000) {
            let det = DetectorSpec::default();
            let pts = shot_noise_variances(&[p, 2.0 * p], &det, 4000, seed, 20).unwrap();
            let (v1, v2) = (pts[0].1 - det.electronic_var, pts[1].1 - det.electronic_var);
            let rel_sd = (2.0f64 / (4000.0 * 20.0)).sqrt();
            prop_assert!((v2 / v1 - 2.0).abs() < 2.0 * 5.0 * rel_sd * 1.5);
        }
    }
}
