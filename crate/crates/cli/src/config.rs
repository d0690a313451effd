//! Run configuration: one TOML file, every section optional, unknown keys
//! rejected, everything validated before any computation starts.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use isrs_core::analysis::Window;
use isrs_core::detector::{DetectorSpec, Sampling, REFERENCE_PHOTONS};
use isrs_core::oracle::{OracleCutoffs, OracleFault};
use isrs_core::phonon::{beta_omega, thermal_occupation, BathSpec, PumpSpec};
use isrs_core::probe::{IsrsModel, ProbeSpec};
use isrs_core::C64;
use serde::{Deserialize, Serialize};

/// Field-level configuration problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { field: field.into(), message: message.into() })
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        bad(field, "must be finite")
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(field, format!("must be > 0, got {v}"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(field, format!("must be >= 0, got {v}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpConfig {
    /// Displacement coupling (model units).
    pub mu_d: f64,
    /// Squeezing coupling (model units).
    pub mu_s: f64,
    /// Number of equal-amplitude pump comb modes.
    pub k_modes: u32,
    /// Pump fluence (mJ/cm^2).
    pub fluence_mj_cm2: f64,
    /// Pump photons per unit cell per pulse for 1 mJ/cm^2. Not published;
    /// placeholder scale, only used consistently in generate-then-fit loops.
    pub photons_per_fluence: f64,
    /// Phase of the pump amplitude (rad).
    pub phase: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self { mu_d: 20.0, mu_s: 0.1, k_modes: 1000, fluence_mj_cm2: 14.0, photons_per_fluence: 1e-4, phase: 0.0 }
    }
}

impl PumpConfig {
    pub fn spec_at(&self, fluence: f64) -> PumpSpec {
        let nu_sq = self.photons_per_fluence * fluence;
        PumpSpec {
            mu_d: self.mu_d,
            mu_s: self.mu_s,
            nu_amp: C64::from_polar(nu_sq.sqrt(), self.phase),
            k_modes: self.k_modes,
        }
    }

    pub fn spec(&self) -> PumpSpec {
        self.spec_at(self.fluence_mj_cm2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    /// Phonon frequency (THz); `Omega = 2 pi f`.
    pub frequency_thz: f64,
    /// Amplitude lifetime of the Omega component (ps); `lambda = 2 / lifetime`.
    pub omega_lifetime_ps: f64,
    /// Overrides the lifetime-derived damping rate (1/ps).
    pub lambda_per_ps: Option<f64>,
    pub temperature_k: f64,
    /// Bath occupation; defaults to the thermal occupation at `temperature_k`.
    pub n_bath: Option<f64>,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self { frequency_thz: 3.84, omega_lifetime_ps: 7.0, lambda_per_ps: None, temperature_k: 300.0, n_bath: None }
    }
}

impl BathConfig {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_thz
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_per_ps.unwrap_or(2.0 / self.omega_lifetime_ps)
    }

    /// Pre-pump thermal occupation at the configured temperature.
    pub fn thermal_n(&self) -> f64 {
        beta_omega(self.omega(), self.temperature_k)
            .and_then(thermal_occupation)
            .unwrap_or(0.0)
    }

    pub fn spec(&self) -> BathSpec {
        BathSpec { omega: self.omega(), lambda: self.lambda(), n_bath: self.n_bath.unwrap_or_else(|| self.thermal_n()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Beamsplitter angle of the probe interaction (rad).
    pub coupling: f64,
    pub theta_prime: f64,
    /// Photons per pulse in the detected polarization.
    pub intensity_y: f64,
    pub theta_y: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { coupling: 0.25, theta_prime: 0.0, intensity_y: REFERENCE_PHOTONS, theta_y: 0.0 }
    }
}

impl ProbeConfig {
    pub fn spec(&self) -> ProbeSpec {
        ProbeSpec {
            coupling_norm: self.coupling,
            theta_prime: self.theta_prime,
            intensity_y: self.intensity_y,
            theta_y: self.theta_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub quantum_efficiency: f64,
    /// Defaults to the gain giving 1 V^2 of shot noise at the 2.5 mW point.
    pub gain_v_per_photon: Option<f64>,
    pub electronic_var: f64,
    /// Defaults to the unpumped signal mean (balanced arms).
    pub ref_mean_photons: Option<f64>,
    pub unbalance_v: f64,
    pub drift_step_v: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let d = DetectorSpec::default();
        Self {
            quantum_efficiency: d.quantum_efficiency,
            gain_v_per_photon: None,
            electronic_var: d.electronic_var,
            ref_mean_photons: None,
            unbalance_v: 0.0,
            drift_step_v: 0.0,
        }
    }
}

impl DetectorConfig {
    /// Detector for `model`, balancing the reference arm against the
    /// unpumped signal unless overridden.
    pub fn spec_for(&self, model: &IsrsModel) -> DetectorSpec {
        let balanced = model.unpumped().mean_ny;
        self.spec_with_reference(self.ref_mean_photons.unwrap_or(balanced))
    }

    pub fn spec_with_reference(&self, reference: f64) -> DetectorSpec {
        let mut d = DetectorSpec::calibrated(self.quantum_efficiency, self.electronic_var, reference);
        if let Some(g) = self.gain_v_per_photon {
            d.gain_v_per_photon = g;
        }
        d.unbalance_v = self.unbalance_v;
        d.drift_step_v = self.drift_step_v;
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub start_ps: f64,
    pub stop_ps: f64,
    pub step_ps: f64,
    pub n_pulses: usize,
    pub m_scans: usize,
    pub sampling: Sampling,
    /// Histogram bins per delay (first scan); 0 disables histograms.
    pub histogram_bins: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            start_ps: 0.0,
            stop_ps: 10.0,
            step_ps: 0.02,
            n_pulses: 4000,
            m_scans: 10,
            sampling: Sampling::Pulses,
            histogram_bins: 0,
        }
    }
}

/// Uniform grid `start, start + step, ...` up to `stop` inclusive.
pub fn delay_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| start + i as f64 * step).collect()
}

impl ScanConfig {
    pub fn delays(&self) -> Vec<f64> {
        delay_grid(self.start_ps, self.stop_ps, self.step_ps)
    }
}

fn validate_grid(section: &str, start: f64, stop: f64, step: f64) -> Result<(), ConfigError> {
    non_negative(&format!("{section}.start_ps"), start)?;
    positive(&format!("{section}.step_ps"), step)?;
    finite(&format!("{section}.stop_ps"), stop)?;
    if stop <= start {
        return bad(&format!("{section}.stop_ps"), "must exceed start_ps");
    }
    if delay_grid(start, stop, step).len() < 16 {
        return bad(&format!("{section}.step_ps"), "grid must contain at least 16 delays");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub window: Window,
    pub detrend_order: usize,
    /// Morlet cycles.
    pub wavelet_width: f64,
    pub wavelet_min_thz: f64,
    pub wavelet_max_thz: f64,
    pub wavelet_count: usize,
    /// `peak_2omega / peak_omega` above which the 2 Omega flag is raised.
    pub two_omega_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            detrend_order: 3,
            wavelet_width: isrs_core::analysis::DEFAULT_WAVELET_WIDTH,
            wavelet_min_thz: 0.5,
            wavelet_max_thz: 10.0,
            wavelet_count: 96,
            two_omega_threshold: 1e-3,
        }
    }
}

impl AnalysisConfig {
    pub fn wavelet_freqs(&self) -> Vec<f64> {
        let n = self.wavelet_count.max(1);
        if n == 1 {
            return vec![self.wavelet_min_thz];
        }
        (0..n)
            .map(|i| self.wavelet_min_thz + (self.wavelet_max_thz - self.wavelet_min_thz) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluenceConfig {
    pub fluences_mj_cm2: Vec<f64>,
    pub start_ps: f64,
    pub stop_ps: f64,
    pub step_ps: f64,
    pub sampling: Sampling,
}

impl Default for FluenceConfig {
    fn default() -> Self {
        Self {
            fluences_mj_cm2: vec![5.0, 9.0, 13.0, 17.0, 21.0, 25.0],
            start_ps: 0.0,
            stop_ps: 4.0,
            step_ps: 0.02,
            sampling: Sampling::Statistics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Random grid size; the grid is drawn from the run seed.
    pub points: usize,
    pub phonon_dim: usize,
    pub photon_dim: usize,
    pub max_doublings: u32,
    /// Test hook corrupting one variance term of the fast path.
    pub fault: OracleFault,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let c = OracleCutoffs::default();
        Self {
            points: 24,
            phonon_dim: c.phonon_dim,
            photon_dim: c.photon_dim,
            max_doublings: c.max_doublings,
            fault: OracleFault::None,
        }
    }
}

impl OracleConfig {
    pub fn cutoffs(&self) -> OracleCutoffs {
        OracleCutoffs { phonon_dim: self.phonon_dim, photon_dim: self.photon_dim, max_doublings: self.max_doublings }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotNoiseConfig {
    pub powers_mw: Vec<f64>,
    pub n_pulses: usize,
    /// Acquisitions averaged per power.
    pub repeats: usize,
}

impl Default for ShotNoiseConfig {
    fn default() -> Self {
        Self { powers_mw: (1..=10).map(|i| 0.25 * i as f64).collect(), n_pulses: 4000, repeats: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub pump: PumpConfig,
    pub bath: BathConfig,
    pub probe: ProbeConfig,
    pub detector: DetectorConfig,
    pub scan: ScanConfig,
    pub analysis: AnalysisConfig,
    pub fluence_series: FluenceConfig,
    pub oracle: OracleConfig,
    pub shot_noise: ShotNoiseConfig,
    pub outputs: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError { field: String::new(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ConfigError { field: String::new(), message: format!("cannot read {}: {e}", path.display()) })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| ConfigError { field: String::new(), message: "config is not UTF-8".into() })?;
        Ok((Self::from_toml(text)?, bytes))
    }

    pub fn model(&self) -> IsrsModel {
        IsrsModel {
            pump: self.pump.spec(),
            bath: self.bath.spec(),
            probe: self.probe.spec(),
            thermal_n: self.bath.thermal_n(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pump;
        finite("pump.mu_d", p.mu_d)?;
        finite("pump.mu_s", p.mu_s)?;
        finite("pump.phase", p.phase)?;
        if p.k_modes == 0 {
            return bad("pump.k_modes", "must be >= 1");
        }
        non_negative("pump.fluence_mj_cm2", p.fluence_mj_cm2)?;
        positive("pump.photons_per_fluence", p.photons_per_fluence)?;

        let b = &self.bath;
        positive("bath.frequency_thz", b.frequency_thz)?;
        positive("bath.omega_lifetime_ps", b.omega_lifetime_ps)?;
        if let Some(l) = b.lambda_per_ps {
            non_negative("bath.lambda_per_ps", l)?;
        }
        positive("bath.temperature_k", b.temperature_k)?;
        if let Some(n) = b.n_bath {
            non_negative("bath.n_bath", n)?;
        }

        let pr = &self.probe;
        finite("probe.coupling", pr.coupling)?;
        finite("probe.theta_prime", pr.theta_prime)?;
        finite("probe.theta_y", pr.theta_y)?;
        non_negative("probe.intensity_y", pr.intensity_y)?;

        let d = &self.detector;
        if !(d.quantum_efficiency > 0.0 && d.quantum_efficiency <= 1.0) {
            return bad("detector.quantum_efficiency", "must lie in (0, 1]");
        }
        if let Some(g) = d.gain_v_per_photon {
            non_negative("detector.gain_v_per_photon", g)?;
        }
        non_negative("detector.electronic_var", d.electronic_var)?;
        if let Some(r) = d.ref_mean_photons {
            non_negative("detector.ref_mean_photons", r)?;
        }
        finite("detector.unbalance_v", d.unbalance_v)?;
        non_negative("detector.drift_step_v", d.drift_step_v)?;

        let s = &self.scan;
        validate_grid("scan", s.start_ps, s.stop_ps, s.step_ps)?;
        if s.n_pulses < 2 {
            return bad("scan.n_pulses", "must be >= 2");
        }
        if s.m_scans == 0 {
            return bad("scan.m_scans", "must be >= 1");
        }

        let a = &self.analysis;
        positive("analysis.wavelet_width", a.wavelet_width)?;
        positive("analysis.wavelet_min_thz", a.wavelet_min_thz)?;
        if !(a.wavelet_max_thz >= a.wavelet_min_thz && a.wavelet_max_thz.is_finite()) {
            return bad("analysis.wavelet_max_thz", "must be finite and >= wavelet_min_thz");
        }
        if a.wavelet_count == 0 {
            return bad("analysis.wavelet_count", "must be >= 1");
        }
        non_negative("analysis.two_omega_threshold", a.two_omega_threshold)?;

        let f = &self.fluence_series;
        validate_grid("fluence_series", f.start_ps, f.stop_ps, f.step_ps)?;
        if f.fluences_mj_cm2.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return bad("fluence_series.fluences_mj_cm2", "fluences must be finite and >= 0");
        }

        let o = &self.oracle;
        if o.points == 0 {
            return bad("oracle.points", "must be >= 1");
        }
        if o.phonon_dim < 2 {
            return bad("oracle.phonon_dim", "must be >= 2");
        }
        if o.photon_dim < isrs_core::oracle::MIN_PHOTON_DIM {
            return bad("oracle.photon_dim", format!("must be >= {}", isrs_core::oracle::MIN_PHOTON_DIM));
        }

        let sn = &self.shot_noise;
        if sn.powers_mw.len() < 3 {
            return bad("shot_noise.powers_mw", "need at least 3 powers");
        }
        if sn.powers_mw.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return bad("shot_noise.powers_mw", "powers must be positive");
        }
        if sn.n_pulses < 2 {
            return bad("shot_noise.n_pulses", "must be >= 2");
        }
        if sn.repeats == 0 {
            return bad("shot_noise.repeats", "must be >= 1");
        }
        if self.outputs.formats.is_empty() {
            return bad("outputs.formats", "select at least one of csv, json");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[pump]\nmu_x = 1.0\n").is_err());
        assert!(RunConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn field_level_messages() {
        let e = RunConfig::from_toml("[scan]\nstep_ps = 0.0\n").unwrap_err();
        assert_eq!(e.field, "scan.step_ps");
        let e = RunConfig::from_toml("[detector]\nquantum_efficiency = 1.5\n").unwrap_err();
        assert_eq!(e.field, "detector.quantum_efficiency");
    }

    #[test]
    fn default_physics() {
        let m = RunConfig::default().model();
        assert!((m.bath.lambda * 7.0 - 2.0).abs() < 1e-12);
        assert!((m.thermal_n - 1.18).abs() < 5e-3);
        assert_eq!(m.bath.n_bath, m.thermal_n);
        let c = isrs_core::phonon::pump_coefficients(&m.pump).unwrap();
        assert!((c.r() - 0.28).abs() < 1e-12);
        assert_eq!(delay_grid(0.0, 10.0, 0.02).len(), 501);
    }

    #[test]
    fn serialized_config_round_trips() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }
}
