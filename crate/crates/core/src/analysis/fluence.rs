use serde::{Deserialize, Serialize};

use super::spectrum::Window;
use crate::error::{domain, Error, Result};
use crate::phonon::{squeezed_thermal_quadrature_variance, BathSpec};
use crate::probe::ProbeSpec;

pub const MAX_FIT_ITERATIONS: usize = 200;
pub const FIT_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Fixed quantities of the `2 Omega` amplitude model for a fluence series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluenceModel {
    pub bath: BathSpec,
    pub probe: ProbeSpec,
    /// Pre-pump thermal occupation, sets the quadrature reference.
    pub thermal_n: f64,
    pub k_modes: u32,
    /// Pump photons per unit cell per pulse for 1 mJ/cm^2.
    pub photons_per_fluence: f64,
    /// Converts a photon-number variance into measured units
    /// (`gain^2 eta^2` for V^2, 1 for photon units).
    pub signal_scale: f64,
}

impl FluenceModel {
    /// Squeezing amplitude `r = 2 K |mu_s| |nu|^2` at a fluence.
    pub fn r(&self, mu_s: f64, fluence: f64) -> f64 {
        2.0 * f64::from(self.k_modes) * mu_s.abs() * self.photons_per_fluence * fluence
    }

    /// Cosine amplitude `2 |A_2Omega|` at `tau_ref`, per unit `sinh(2r)`.
    pub fn prefactor(&self, tau_ref: f64) -> f64 {
        let th = self.probe.coupling_norm;
        2.0 * self.probe.intensity_y * (1.0 + 2.0 * self.bath.n_bath) / 8.0
            * (2.0 * th).sin().powi(2)
            * (-self.bath.lambda * tau_ref).exp()
            * self.signal_scale
    }

    pub fn amplitude(&self, mu_s: f64, fluence: f64, tau_ref: f64) -> f64 {
        self.prefactor(tau_ref) * (2.0 * self.r(mu_s, fluence)).sinh()
    }

    /// `(n + 1/2) e^{-2r}` and `(n + 1/2) e^{2r}`: variances of the squeezed
    /// and anti-squeezed quadratures.
    pub fn quadrature_pair(&self, r: f64) -> (f64, f64) {
        (
            squeezed_thermal_quadrature_variance(self.thermal_n, r, 0.0),
            squeezed_thermal_quadrature_variance(self.thermal_n, r, std::f64::consts::PI),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluencePoint {
    /// mJ/cm^2
    pub fluence: f64,
    pub a2omega: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluenceFitResult {
    pub mu_s_hat: f64,
    pub mu_s_stderr: f64,
    /// `(fluence, r)`
    pub r_per_fluence: Vec<(f64, f64)>,
    /// `(fluence, squeezed variance, anti-squeezed variance)`
    pub quad_uncertainties: Vec<(f64, f64, f64)>,
    /// Final weighted least-squares cost.
    pub fit_residual: f64,
    pub iterations: usize,
}

/// Delay at which `exp(-lambda tau)` equals its window-weighted average over
/// `delays`, so that a windowed FFT amplitude of a decaying component equals
/// its instantaneous amplitude there.
pub fn effective_tau_ref(delays: &[f64], lambda: f64, window: Window) -> f64 {
    let w = window.weights(delays.len());
    let wsum: f64 = w.iter().sum();
    if lambda == 0.0 {
        return delays.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / wsum;
    }
    let avg = delays.iter().zip(&w).map(|(t, w)| w * (-lambda * t).exp()).sum::<f64>() / wsum;
    -avg.ln() / lambda
}

fn fit_error(message: impl Into<String>, residual_trace: Vec<f64>) -> Error {
    Error::Fit { message: message.into(), residual_trace }
}

/// Weighted Levenberg-Marquardt fit of `mu_s >= 0` to the `2 Omega`
/// amplitudes of a fluence series.
pub fn fit_fluence_series(points: &[FluencePoint], model: &FluenceModel, tau_ref: f64) -> Result<FluenceFitResult> {
    if points.len() < 3 {
        return Err(fit_error(format!("need at least 3 fluence points, got {}", points.len()), vec![]));
    }
    if points.iter().any(|p| !(p.fluence >= 0.0 && p.fluence.is_finite() && p.a2omega.is_finite())) {
        return domain("fluences must be finite and >= 0, amplitudes finite");
    }
    if points.iter().any(|p| !(p.sigma > 0.0 && p.sigma.is_finite())) {
        return domain("amplitude uncertainties must be positive");
    }
    let c = model.prefactor(tau_ref);
    if !(c > 0.0 && c.is_finite()) {
        return domain(format!("amplitude prefactor must be positive, got {c}"));
    }
    let kappa: Vec<f64> = points.iter().map(|p| 2.0 * model.r(1.0, p.fluence)).collect();

    let finish = |mu: f64, cost: f64, hess: f64, iterations: usize| {
        let dof = (points.len() - 1) as f64;
        let r_per_fluence: Vec<(f64, f64)> = points.iter().map(|p| (p.fluence, model.r(mu, p.fluence))).collect();
        let quad_uncertainties = r_per_fluence
            .iter()
            .map(|&(f, r)| {
                let (sq, anti) = model.quadrature_pair(r);
                (f, sq, anti)
            })
            .collect();
        FluenceFitResult {
            mu_s_hat: mu,
            mu_s_stderr: if hess > 0.0 { (cost / dof / hess).sqrt() } else { 0.0 },
            r_per_fluence,
            quad_uncertainties,
            fit_residual: cost,
            iterations,
        }
    };

    if points.iter().all(|p| p.a2omega == 0.0) {
        let cost = 0.0;
        return Ok(finish(0.0, cost, 0.0, 0));
    }

    let eval = |mu: f64| -> (f64, f64, f64) {
        let (mut cost, mut grad, mut hess) = (0.0, 0.0, 0.0);
        for (p, k) in points.iter().zip(&kappa) {
            let res = (p.a2omega - c * (k * mu).sinh()) / p.sigma;
            let jac = -c * k * (k * mu).cosh() / p.sigma;
            cost += res * res;
            grad += jac * res;
            hess += jac * jac;
        }
        (cost, grad, hess)
    };

    let (mut wsum, mut acc) = (0.0, 0.0);
    for (p, k) in points.iter().zip(&kappa) {
        if p.a2omega > 0.0 && *k > 0.0 {
            let w = (k / p.sigma).powi(2);
            acc += w * (p.a2omega / c).asinh() / k;
            wsum += w;
        }
    }
    let mut mu = if wsum > 0.0 { acc / wsum } else { 0.0 };
    let (mut cost, mut grad, mut hess) = eval(mu);
    let mut damping = 1e-3;
    let mut trace = vec![cost];
    for it in 1..=MAX_FIT_ITERATIONS {
        let step = -grad / (hess * (1.0 + damping));
        let trial = (mu + step).max(0.0);
        let (tc, tg, th) = eval(trial);
        if tc.is_finite() && tc <= cost {
            let improvement = cost - tc;
            let moved = (trial - mu).abs();
            (mu, cost, grad, hess) = (trial, tc, tg, th);
            trace.push(cost);
            damping = (damping / 10.0).max(1e-12);
            if improvement <= FIT_RELATIVE_TOLERANCE * cost || moved <= 1e-15 * mu.max(1e-300) {
                return Ok(finish(mu, cost, hess, it));
            }
        } else {
            damping *= 10.0;
            if damping > 1e16 {
                return Ok(finish(mu, cost, hess, it));
            }
        }
    }
    Err(fit_error(format!("no convergence after {MAX_FIT_ITERATIONS} iterations"), trace))
}
