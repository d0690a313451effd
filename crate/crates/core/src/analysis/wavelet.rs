use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectrum::uniform_step;
use crate::error::{domain, Result};

/// Default number of cycles (`2 pi f sigma_t`) of the Morlet wavelet.
pub const DEFAULT_WAVELET_WIDTH: f64 = 12.0;
/// Gaussian support kept on each side, in units of `sigma_t`.
const SUPPORT_SIGMAS: f64 = 6.0;
/// Edge margin, in units of `sigma_t`, outside which ridge values are trusted.
pub const CONE_SIGMAS: f64 = 4.0;
/// Relative envelope change over the fitted span below which a ridge counts
/// as flat regardless of its standard error.
pub const FLAT_TOLERANCE: f64 = 1e-4;

/// Morlet transform of a trace: `amplitude[f][t]`, `power = amplitude^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFrequencyMap {
    pub delays: Vec<f64>,
    pub freqs: Vec<f64>,
    pub width: f64,
    pub amplitude: Vec<Vec<f64>>,
}

impl TimeFrequencyMap {
    pub fn power(&self) -> Vec<Vec<f64>> {
        self.amplitude.iter().map(|row| row.iter().map(|a| a * a).collect()).collect()
    }

    /// Temporal width `sigma_t` (ps) of the wavelet at `freq` (THz).
    pub fn sigma_t(&self, freq: f64) -> f64 {
        self.width / (2.0 * std::f64::consts::PI * freq)
    }

    pub fn row_nearest(&self, freq: f64) -> usize {
        (0..self.freqs.len())
            .min_by(|&a, &b| (self.freqs[a] - freq).abs().total_cmp(&(self.freqs[b] - freq).abs()))
            .unwrap_or(0)
    }

    /// Delay indices of row `row` whose wavelet support clears both trace edges
    /// by [`CONE_SIGMAS`] widths.
    pub fn cone(&self, row: usize) -> std::ops::Range<usize> {
        let margin = CONE_SIGMAS * self.sigma_t(self.freqs[row]);
        let (t0, t1) = (self.delays[0], *self.delays.last().unwrap_or(&0.0));
        let start = self.delays.iter().position(|&t| t >= t0 + margin).unwrap_or(self.delays.len());
        let end = self.delays.iter().rposition(|&t| t <= t1 - margin).map_or(start, |i| i + 1);
        start..end.max(start)
    }
}

/// Continuous Morlet transform normalized so that `A cos(2 pi f t)` gives a
/// ridge of height `A` at `f`.
///
/// Near the trace edges the Gaussian is truncated and the normalization uses
/// only the in-range part of the window.
pub fn morlet_power(trace: &[(f64, f64)], freqs: &[f64], wavelet_width: f64) -> Result<TimeFrequencyMap> {
    let delays: Vec<f64> = trace.iter().map(|p| p.0).collect();
    let values: Vec<f64> = trace.iter().map(|p| p.1).collect();
    let dt = uniform_step(&delays)?;
    if !(wavelet_width > 0.0 && wavelet_width.is_finite()) {
        return domain("wavelet width must be positive");
    }
    if freqs.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return domain("wavelet frequencies must be positive");
    }
    let n = values.len();
    let amplitude = freqs
        .par_iter()
        .map(|&f| {
            let sigma = wavelet_width / (2.0 * std::f64::consts::PI * f);
            let half = ((SUPPORT_SIGMAS * sigma / dt).ceil() as usize).min(n);
            let kernel: Vec<(f64, C64)> = (0..=2 * half)
                .map(|j| {
                    let t = (j as f64 - half as f64) * dt;
                    let g = (-0.5 * (t / sigma).powi(2)).exp();
                    (g, C64::from_polar(g, -2.0 * std::f64::consts::PI * f * t))
                })
                .collect();
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half).min(n - 1);
                    let (mut acc, mut gsum) = (C64::new(0.0, 0.0), 0.0);
                    for (k, &v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                        let (g, psi) = kernel[k + half - i];
                        acc += psi * v;
                        gsum += g;
                    }
                    acc.norm() / (0.5 * gsum)
                })
                .collect()
        })
        .collect();
    Ok(TimeFrequencyMap { delays, freqs: freqs.to_vec(), width: wavelet_width, amplitude })
}

/// Expected ridge amplitude produced by white noise of standard deviation
/// `sigma` per sample, away from the edges.
pub fn wavelet_noise_amplitude(sigma: f64, dt: f64, freq: f64, width: f64) -> f64 {
    let sigma_t = width / (2.0 * std::f64::consts::PI * freq);
    (2.0 * sigma * sigma * dt / (std::f64::consts::PI.sqrt() * sigma_t)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentLifetime {
    /// Fewer than three ridge samples above the noise floor.
    Absent,
    /// Decay rate consistent with zero at three standard errors.
    NonDecaying { rate: f64, rate_stderr: f64 },
    /// Amplitude envelope `exp(-rate t)`, lifetime `1/rate` (ps).
    Decaying { rate: f64, rate_stderr: f64, lifetime: f64 },
}

impl ComponentLifetime {
    pub fn rate(&self) -> Option<f64> {
        match *self {
            ComponentLifetime::Absent => None,
            ComponentLifetime::NonDecaying { rate, .. } | ComponentLifetime::Decaying { rate, .. } => Some(rate),
        }
    }

    pub fn is_absent(&self) -> bool {
        matches!(self, ComponentLifetime::Absent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub omega: ComponentLifetime,
    pub two_omega: ComponentLifetime,
}

impl Lifetimes {
    /// `rate(2 Omega) / rate(Omega)`
    pub fn rate_ratio(&self) -> Option<f64> {
        Some(self.two_omega.rate()? / self.omega.rate()?)
    }
}

/// Weighted log-linear fit `ln a = c - rate t` over the ridge at `freq`.
pub fn ridge_lifetime(map: &TimeFrequencyMap, freq: f64, noise_floor: f64) -> ComponentLifetime {
    let row = map.row_nearest(freq);
    let pts: Vec<(f64, f64)> = map
        .cone(row)
        .map(|i| (map.delays[i], map.amplitude[row][i]))
        .filter(|&(_, a)| a > noise_floor && a > 0.0)
        .collect();
    if pts.len() < 3 {
        return ComponentLifetime::Absent;
    }
    // weights a^2: relative errors of ln a scale as 1/a
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, a) in &pts {
        let (w, y) = (a * a, a.ln());
        sw += w;
        st += w * t;
        sy += w * y;
        stt += w * t * t;
        sty += w * t * y;
    }
    let det = sw * stt - st * st;
    let slope = (sw * sty - st * sy) / det;
    let icpt = (sy - slope * st) / sw;
    let chi2: f64 = pts.iter().map(|&(t, a)| a * a * (a.ln() - icpt - slope * t).powi(2)).sum();
    let dof = (pts.len() - 2) as f64;
    let stderr = (chi2 / dof * sw / det).sqrt();
    let rate = -slope;
    let span = pts[pts.len() - 1].0 - pts[0].0;
    if rate.abs() <= 3.0 * stderr || rate.abs() * span < FLAT_TOLERANCE {
        ComponentLifetime::NonDecaying { rate, rate_stderr: stderr }
    } else {
        ComponentLifetime::Decaying { rate, rate_stderr: stderr, lifetime: 1.0 / rate }
    }
}

/// Lifetimes of the `omega` and `2 omega` ridges (`omega` in rad/ps).
pub fn extract_lifetimes(map: &TimeFrequencyMap, omega: f64, noise_floor: f64) -> Lifetimes {
    let f = omega / (2.0 * std::f64::consts::PI);
    Lifetimes { omega: ridge_lifetime(map, f, noise_floor), two_omega: ridge_lifetime(map, 2.0 * f, noise_floor) }
}

/// First delay inside the cone at which the ridge power at `freq` falls
/// below `fraction` of its value at the start of the cone.
pub fn ridge_power_drop_time(map: &TimeFrequencyMap, freq: f64, fraction: f64) -> Option<f64> {
    let row = map.row_nearest(freq);
    let cone = map.cone(row);
    let p0 = map.amplitude[row].get(cone.start)?.powi(2);
    cone.clone()
        .find(|&i| map.amplitude[row][i].powi(2) < fraction * p0)
        .map(|i| map.delays[i])
}

/// Last delay inside the cone at which the ridge at `freq` is above `floor`.
pub fn ridge_last_above(map: &TimeFrequencyMap, freq: f64, floor: f64) -> Option<f64> {
    let row = map.row_nearest(freq);
    map.cone(row).rev().find(|&i| map.amplitude[row][i] > floor).map(|i| map.delays[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonon::QUARTZ_E_MODE_OMEGA;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const W: f64 = QUARTZ_E_MODE_OMEGA;

    fn trace(mut f: impl FnMut(f64) -> f64) -> Vec<(f64, f64)> {
        (0..=500).map(|i| i as f64 * 0.02).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn cosine_ridge_height() {
        let tr = trace(|t| 2.0 * (W * t).cos());
        let map = morlet_power(&tr, &[3.84], DEFAULT_WAVELET_WIDTH).unwrap();
        for i in map.cone(0) {
            assert!((map.amplitude[0][i] - 2.0).abs() < 2e-3, "{}", map.amplitude[0][i]);
        }
    }

    #[test]
    fn zero_input_zero_map() {
        let map = morlet_power(&trace(|_| 0.0), &[1.0, 3.84, 7.68], 8.0).unwrap();
        assert!(map.amplitude.iter().flatten().all(|&a| a == 0.0));
    }

    #[test]
    fn decaying_tone_envelope() {
        let lambda = 0.4;
        let tr = trace(|t| (-0.5 * lambda * t).exp() * (W * t).cos());
        let map = morlet_power(&tr, &[3.84], DEFAULT_WAVELET_WIDTH).unwrap();
        match ridge_lifetime(&map, 3.84, 1e-6) {
            ComponentLifetime::Decaying { rate, .. } => {
                // power envelope e^{-lambda t} <=> amplitude rate lambda/2
                assert!((2.0 * rate / lambda - 1.0).abs() < 0.05, "rate {rate}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undamped_tone_is_non_decaying_and_absent_component_reported() {
        let tr = trace(|t| (W * t).cos());
        let map = morlet_power(&tr, &[3.84, 7.68], DEFAULT_WAVELET_WIDTH).unwrap();
        let lt = extract_lifetimes(&map, W, 1e-4);
        assert!(matches!(lt.omega, ComponentLifetime::NonDecaying { .. }), "{lt:?}");
        assert!(lt.two_omega.is_absent(), "{lt:?}");
    }

    #[test]
    fn two_component_lifetimes_with_noise() {
        let sd = 0.15;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, sd).unwrap();
        let tr = trace(|t| {
            (-t / 7.0).exp() * (W * t).cos() + 0.4 * (-t / 2.0).exp() * (2.0 * W * t).cos() + noise.sample(&mut rng)
        });
        let map = morlet_power(&tr, &[3.84, 7.68], DEFAULT_WAVELET_WIDTH).unwrap();
        let floor_1 = 3.0 * wavelet_noise_amplitude(sd, 0.02, 3.84, DEFAULT_WAVELET_WIDTH);
        let floor_2 = 3.0 * wavelet_noise_amplitude(sd, 0.02, 7.68, DEFAULT_WAVELET_WIDTH);
        let first_below = |row: usize, floor: f64| map.cone(row).find(|&i| map.amplitude[row][i] < floor).map(|i| map.delays[i]);
        let gone = first_below(1, floor_2).unwrap();
        assert!(gone < 2.5, "2 Omega ridge persists to {gone}");
        assert!(first_below(0, floor_1).is_none_or(|t| t > 5.0));
        let lt = extract_lifetimes(&map, W, floor_1.max(floor_2));
        let ratio = lt.rate_ratio().unwrap();
        assert!((ratio - 3.5).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn noise_amplitude_matches_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let (mut total, mut count) = (0.0, 0);
        for _ in 0..50 {
            let tr = trace(|_| noise.sample(&mut rng));
            let map = morlet_power(&tr, &[5.0], DEFAULT_WAVELET_WIDTH).unwrap();
            for i in map.cone(0) {
                total += map.amplitude[0][i].powi(2);
                count += 1;
            }
        }
        let expect = wavelet_noise_amplitude(1.0, 0.02, 5.0, DEFAULT_WAVELET_WIDTH).powi(2);
        let ms = total / count as f64;
        assert!((ms / expect - 1.0).abs() < 0.1, "{ms} vs {expect}");
    }
}
