use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Smallest trace accepted by the spectral tools.
pub const MIN_POINTS: usize = 16;
/// Zero-padding factor of the fine spectrum used for peak interpolation.
pub const ZERO_PAD: usize = 16;
/// Half-width, in native bins, of the peak search window.
pub const PEAK_SEARCH_BINS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    None,
    #[default]
    Hann,
}

impl Window {
    pub fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin().powi(2))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    /// Order of the subtracted polynomial baseline.
    pub detrend_order: usize,
    /// Nominal phonon angular frequency (rad/ps) locating the peaks.
    pub omega: f64,
}

impl SpectrumOptions {
    pub fn new(omega: f64) -> Self {
        Self { window: Window::Hann, detrend_order: 3, omega }
    }
}

/// One-sided amplitude spectrum of a detrended trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Native-resolution frequencies (THz).
    pub freqs: Vec<f64>,
    /// Amplitude spectrum: a cosine of amplitude `A` on a bin shows as `A`.
    pub power: Vec<f64>,
    pub peak_omega: f64,
    pub peak_2omega: f64,
    pub freq_omega: f64,
    pub freq_2omega: f64,
    /// Native bin width (THz).
    pub resolution: f64,
    #[serde(skip)]
    pub fine_freqs: Vec<f64>,
    #[serde(skip)]
    pub fine_power: Vec<f64>,
    #[serde(skip)]
    pub detrended: Vec<f64>,
}

impl SpectrumResult {
    /// `a_0^2 + sum a_k^2 / 2` (Nyquist bin counted fully), equal to the
    /// mean square of the detrended trace for the rectangular window.
    pub fn total_power(&self) -> f64 {
        let n = self.detrended.len();
        self.power
            .iter()
            .enumerate()
            .map(|(k, a)| if k == 0 || (n.is_multiple_of(2) && k == n / 2) { a * a } else { a * a / 2.0 })
            .sum()
    }

    /// Mean square of the detrended trace.
    pub fn time_domain_power(&self) -> f64 {
        self.detrended.iter().map(|x| x * x).sum::<f64>() / self.detrended.len() as f64
    }

    /// Interpolated `(frequency, amplitude)` of the largest fine-spectrum
    /// maximum inside `[lo, hi]` THz.
    pub fn dominant_peak(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        peak_in(&self.fine_freqs, &self.fine_power, lo, hi)
    }

    /// Peak amplitude near `freq` (THz), searched within three native bins.
    pub fn peak_near(&self, freq: f64) -> (f64, f64) {
        let half = PEAK_SEARCH_BINS * self.resolution;
        peak_in(&self.fine_freqs, &self.fine_power, freq - half, freq + half).unwrap_or((freq, 0.0))
    }

    /// `peak_2omega > threshold * peak_omega`
    pub fn two_omega_present(&self, threshold: f64) -> bool {
        self.peak_2omega > threshold * self.peak_omega.max(f64::MIN_POSITIVE)
    }
}

fn peak_in(freqs: &[f64], amp: &[f64], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let idx: Vec<usize> = (0..freqs.len()).filter(|&i| freqs[i] >= lo && freqs[i] <= hi).collect();
    let &best = idx.iter().max_by(|&&a, &&b| amp[a].total_cmp(&amp[b]))?;
    if best == 0 || best + 1 >= amp.len() {
        return Some((freqs[best], amp[best]));
    }
    let (y0, y1, y2) = (amp[best - 1], amp[best], amp[best + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return Some((freqs[best], y1));
    }
    let p = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
    let df = freqs[1] - freqs[0];
    Some((freqs[best] + p * df, y1 - 0.25 * (y0 - y2) * p))
}

/// RMS spectral amplitude produced by white noise of standard deviation
/// `sigma` per sample on an `n`-point trace.
pub fn spectral_noise_amplitude(sigma: f64, window: Window, n: usize) -> f64 {
    let w = window.weights(n);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    2.0 * sigma * s2.sqrt() / s1
}

/// Checks that `delays` is a uniform grid and returns its step.
pub fn uniform_step(delays: &[f64]) -> Result<f64> {
    if delays.len() < MIN_POINTS {
        return domain(format!("need at least {MIN_POINTS} points, got {}", delays.len()));
    }
    let n = delays.len();
    let step = (delays[n - 1] - delays[0]) / (n - 1) as f64;
    if !(step > 0.0 && step.is_finite()) {
        return domain("delays must be strictly increasing");
    }
    let worst = delays
        .windows(2)
        .map(|w| ((w[1] - w[0]) - step).abs())
        .fold(0.0, f64::max);
    if worst > 1e-6 * step {
        return domain(format!("non-uniform delay grid (step deviation {worst:.3e} ps); resample first"));
    }
    Ok(step)
}

/// Least-squares polynomial baseline of the given order, evaluated on the grid.
pub fn polynomial_baseline(x: &[f64], y: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let (lo, hi) = (x[0], x[n - 1]);
    let scale = |v: f64| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
    let cols = (order + 1).min(n);
    let a = DMatrix::from_fn(n, cols, |i, j| scale(x[i]).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).expect("svd with both factors");
    (a * coef).iter().copied().collect()
}

fn amplitude_spectrum(x: &[f64], w: &[f64], len: usize) -> Vec<f64> {
    let wsum: f64 = w.iter().sum();
    let mut buf: Vec<C64> = x.iter().zip(w).map(|(a, b)| C64::new(a * b, 0.0)).collect();
    buf.resize(len, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    (0..=half)
        .map(|k| {
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == half) { 1.0 } else { 2.0 };
            one_sided * buf[k].norm() / wsum
        })
        .collect()
}

/// Detrended, windowed amplitude spectrum with peaks at `omega` and `2 omega`.
pub fn detrend_and_fft_with(trace: &[(f64, f64)], opts: &SpectrumOptions) -> Result<SpectrumResult> {
    let delays: Vec<f64> = trace.iter().map(|p| p.0).collect();
    let values: Vec<f64> = trace.iter().map(|p| p.1).collect();
    let step = uniform_step(&delays)?;
    if values.iter().any(|v| !v.is_finite()) {
        return domain("trace contains non-finite values");
    }
    let n = values.len();
    let base = polynomial_baseline(&delays, &values, opts.detrend_order);
    let detrended: Vec<f64> = values.iter().zip(&base).map(|(v, b)| v - b).collect();
    let w = opts.window.weights(n);

    let power = amplitude_spectrum(&detrended, &w, n);
    let resolution = 1.0 / (n as f64 * step);
    let freqs = (0..power.len()).map(|k| k as f64 * resolution).collect();
    let fine_len = n * ZERO_PAD;
    let fine_power = amplitude_spectrum(&detrended, &w, fine_len);
    let fine_res = 1.0 / (fine_len as f64 * step);
    let fine_freqs = (0..fine_power.len()).map(|k| k as f64 * fine_res).collect();

    let mut out = SpectrumResult {
        freqs,
        power,
        peak_omega: 0.0,
        peak_2omega: 0.0,
        freq_omega: 0.0,
        freq_2omega: 0.0,
        resolution,
        fine_freqs,
        fine_power,
        detrended,
    };
    let f1 = opts.omega / (2.0 * std::f64::consts::PI);
    (out.freq_omega, out.peak_omega) = out.peak_near(f1);
    (out.freq_2omega, out.peak_2omega) = out.peak_near(2.0 * f1);
    Ok(out)
}

/// [`detrend_and_fft_with`] using a cubic baseline.
pub fn detrend_and_fft(trace: &[(f64, f64)], window: Window, omega: f64) -> Result<SpectrumResult> {
    detrend_and_fft_with(trace, &SpectrumOptions { window, ..SpectrumOptions::new(omega) })
}
