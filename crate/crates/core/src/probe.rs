//! Probe read-out: photon-number mean and variance of the y-polarized
//! collective mode after the beamsplitter-type probe interaction, the
//! closed-form Omega / 2 Omega variance amplitudes, and the chi(3)
//! polarization-selection helpers.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::phonon::{
    apply_pump, evolve, pump_coefficients, BathSpec, GaussianPhononState, PumpSpec,
};

/// Probe pulse parameters after the mean-field reduction of the x component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Beamsplitter angle `||alpha'|| = sqrt(K) |mu_d alpha_x|` (rad).
    pub coupling_norm: f64,
    /// `theta' = arg(mu_d alpha_x)`
    pub theta_prime: f64,
    /// `I_y = K |alpha_y|^2`, photons per pulse.
    pub intensity_y: f64,
    /// Phase of `alpha_y`.
    pub theta_y: f64,
}

impl ProbeSpec {
    pub fn new(coupling_norm: f64, intensity_y: f64) -> Self {
        Self {
            coupling_norm,
            theta_prime: 0.0,
            intensity_y,
            theta_y: 0.0,
        }
    }

    /// `theta' - theta_y`
    pub fn delta(&self) -> f64 {
        self.theta_prime - self.theta_y
    }

    /// Whether the coupling lies in `[0, pi/2]`; outside it the model still
    /// evaluates but the weak-probe picture no longer applies.
    pub fn in_weak_probe_regime(&self) -> bool {
        (0.0..=std::f64::consts::FRAC_PI_2).contains(&self.coupling_norm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_y >= 0.0 && self.intensity_y.is_finite()) {
            return domain(format!("intensity_y must be >= 0, got {}", self.intensity_y));
        }
        if !(self.coupling_norm.is_finite() && self.theta_prime.is_finite() && self.theta_y.is_finite()) {
            return domain("probe angles must be finite");
        }
        Ok(())
    }
}

/// Photon-number mean and variance of the detected mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservablePair {
    pub mean_ny: f64,
    pub var_ny: f64,
}

/// Third and fourth order phonon moments of a Gaussian state (Wick expansion).
#[derive(Debug, Clone, Copy)]
pub struct GaussianMoments {
    pub mean: C64,
    pub occ: f64,
    pub anom: C64,
    /// `<(b^dag b)^2>`
    pub occ_sq: f64,
    /// `<b^dag b^dag b>`
    pub cubic: C64,
}

impl GaussianMoments {
    pub fn of(state: &GaussianPhononState) -> Self {
        let beta = state.mean_b;
        let nc = state.central_occupation();
        let mc = state.central_anomalous();
        let b2 = beta.norm_sqr();
        let number_var = nc * nc
            + nc
            + mc.norm_sqr()
            + b2 * (2.0 * nc + 1.0)
            + 2.0 * (beta.conj() * beta.conj() * mc).re;
        Self {
            mean: beta,
            occ: state.occ,
            anom: state.anom,
            occ_sq: number_var + state.occ * state.occ,
            cubic: beta.conj() * b2 + 2.0 * beta.conj() * nc + beta * mc.conj(),
        }
    }

    /// `<(b^dag b)^2> - <b^dag b>^2`
    pub fn number_variance(&self) -> f64 {
        self.occ_sq - self.occ * self.occ
    }
}

/// The individual terms of the photon-number variance, in the order they
/// appear in the expansion (all real up to rounding).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct VarianceTerms {
    /// `I_y cos^4`
    pub shot: f64,
    /// `sin^4 (<(b^dag b)^2> - <b^dag b>^2)`
    pub phonon_number: f64,
    /// `sin^2 cos^2 <b^dag b>`
    pub occupation: f64,
    /// `-I_y sin^2 cos^2 [e^{-2i d} m_c^* + c.c.]`, the 2 Omega carrier.
    pub anomalous: f64,
    /// `I_y sin^2 cos^2 (2 <b^dag b> + 1 - 2 |<b>|^2)`
    pub occupation_beat: f64,
    /// `i sqrt(I_y) sin cos^3 (e^{-i d} <b^dag> - c.c.)`
    pub linear: f64,
    /// Cubic-moment term `i sqrt(I_y) sin^3 cos [...]`.
    pub cubic: f64,
    /// Largest imaginary residue seen while summing.
    pub imag_residue: f64,
}

impl VarianceTerms {
    pub fn total(&self) -> f64 {
        self.shot
            + self.phonon_number
            + self.occupation
            + self.anomalous
            + self.occupation_beat
            + self.linear
            + self.cubic
    }
}

/// Photon-number mean `<N_y>` for a phonon state probed with `probe`.
pub fn probe_mean(state: &GaussianPhononState, probe: &ProbeSpec) -> f64 {
    let th = probe.coupling_norm;
    let (s, c) = th.sin_cos();
    let iy = probe.intensity_y;
    let e = C64::from_polar(1.0, probe.delta());
    let beta = state.mean_b;
    let cross = C64::i() * 0.5 * iy.sqrt() * (2.0 * th).sin() * (e.conj() * beta.conj() - e * beta);
    let total = C64::new(iy * c * c + s * s * state.occ, 0.0) + cross;
    debug_assert!(
        total.im.abs() <= 1e-12 * total.re.abs().max(1.0),
        "probe mean has imaginary residue {}",
        total.im
    );
    total.re
}

/// Term-by-term photon-number variance with Gaussian moment closure.
pub fn variance_terms(state: &GaussianPhononState, probe: &ProbeSpec) -> VarianceTerms {
    let th = probe.coupling_norm;
    let (s, c) = th.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let iy = probe.intensity_y;
    let sq = iy.sqrt();
    let e = C64::from_polar(1.0, probe.delta());
    let i = C64::i();
    let mo = GaussianMoments::of(state);
    let beta = mo.mean;
    let n = mo.occ;

    let mc = mo.anom - beta * beta;
    let anomalous = -iy * s2 * c2 * (e.conj() * e.conj() * mc.conj() + e * e * mc);
    let linear = i * sq * s * c2 * c * (e.conj() * beta.conj() - e * beta);
    let cubic_inner = 2.0 * e.conj() * (mo.cubic - n * beta.conj() + 0.5 * beta.conj())
        - 2.0 * e * (mo.cubic.conj() - n * beta + 0.5 * beta);
    let cubic = i * sq * s2 * s * c * cubic_inner;

    let imag_residue = anomalous.im.abs().max(linear.im.abs()).max(cubic.im.abs());
    VarianceTerms {
        shot: iy * c2 * c2,
        phonon_number: s2 * s2 * mo.number_variance(),
        occupation: s2 * c2 * n,
        anomalous: anomalous.re,
        occupation_beat: iy * s2 * c2 * (2.0 * n + 1.0 - 2.0 * beta.norm_sqr()),
        linear: linear.re,
        cubic: cubic.re,
        imag_residue,
    }
}

/// Photon-number variance `Delta^2 N_y`.
pub fn probe_variance(state: &GaussianPhononState, probe: &ProbeSpec) -> f64 {
    let terms = variance_terms(state, probe);
    let total = terms.total();
    debug_assert!(
        terms.imag_residue <= 1e-12 * total.abs().max(1.0),
        "probe variance has imaginary residue {}",
        terms.imag_residue
    );
    total
}

pub fn observables(state: &GaussianPhononState, probe: &ProbeSpec) -> ObservablePair {
    ObservablePair {
        mean_ny: probe_mean(state, probe),
        var_ny: probe_variance(state, probe),
    }
}

/// `|A_2Omega(tau)|`, the coefficient of `exp(2 i Omega tau)` in the variance.
///
/// A cosine fit of the variance trace at `2 Omega` has amplitude `2 |A_2Omega|`.
/// The thermal factor uses the bath occupation `n'`; the exact coefficient
/// carries the pre-pump occupation instead, so the two coincide when the
/// pump does not heat the bath (`n' = n`).
pub fn amplitude_2omega(tau: f64, pump: &PumpSpec, bath: &BathSpec, probe: &ProbeSpec) -> Result<f64> {
    let r = pump_coefficients(pump)?.r();
    let th = probe.coupling_norm;
    Ok(probe.intensity_y * (1.0 + 2.0 * bath.n_bath) / 8.0
        * (-bath.lambda * tau).exp()
        * (2.0 * th).sin().powi(2)
        * (2.0 * r).sinh())
}

/// `|A_Omega(tau)|`, the coefficient of `exp(i Omega tau)` in the variance.
///
/// `z` is the phonon displacement right after the pump and `n` the pre-pump
/// thermal occupation. The squeezing phase `psi` of the pump enters through
/// the relative angle `2 arg(z) - psi`; for `r -> 0` this reduces to
/// `(1/2) sqrt(I_y) |z| e^{-lambda tau/2} |sin 2a| (1 + 2 sin^2 a (n' + (n - n') e^{-lambda tau}))`.
pub fn amplitude_omega(
    tau: f64,
    z: C64,
    pump: &PumpSpec,
    bath: &BathSpec,
    probe: &ProbeSpec,
    n: f64,
) -> Result<f64> {
    let coeffs = pump_coefficients(pump)?;
    let (r, psi) = (coeffs.r(), coeffs.psi());
    let th = probe.coupling_norm;
    let s2 = th.sin().powi(2);
    let decay = (-bath.lambda * tau).exp();

    let nc0 = (n + 0.5) * (2.0 * r).cosh() - 0.5;
    let nc_tau = decay * (nc0 - bath.n_bath) + bath.n_bath;
    let rel = C64::from_polar(1.0, 2.0 * z.arg() - psi);
    let bracket = C64::new(1.0 + 2.0 * s2 * nc_tau, 0.0) - s2 * decay * (2.0 * n + 1.0) * (2.0 * r).sinh() * rel;

    Ok(0.5
        * probe.intensity_y.sqrt()
        * z.norm()
        * (-0.5 * bath.lambda * tau).exp()
        * (2.0 * th).sin().abs()
        * bracket.norm())
}

/// Full set of model parameters for one pump-probe configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsrsModel {
    pub pump: PumpSpec,
    pub bath: BathSpec,
    pub probe: ProbeSpec,
    /// Pre-pump thermal occupation `n`.
    pub thermal_n: f64,
}

/// One noiseless point of a predicted pump-probe trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub tau: f64,
    pub mean_ny: f64,
    pub var_ny: f64,
}

impl IsrsModel {
    /// Phonon state right after the pump.
    pub fn pumped_state(&self) -> Result<GaussianPhononState> {
        if !(self.thermal_n >= 0.0 && self.thermal_n.is_finite()) {
            return domain(format!("thermal occupation must be >= 0, got {}", self.thermal_n));
        }
        let c = pump_coefficients(&self.pump)?;
        apply_pump(&GaussianPhononState::thermal(self.thermal_n), c.c1, c.c2)
    }

    pub fn state_at(&self, tau: f64) -> Result<GaussianPhononState> {
        evolve(&self.pumped_state()?, tau, &self.bath)
    }

    /// Observables with the pump blocked (thermal phonons at occupation `n`).
    pub fn unpumped(&self) -> ObservablePair {
        observables(&GaussianPhononState::thermal(self.thermal_n), &self.probe)
    }

    pub fn predict(&self, delays: &[f64]) -> Result<Vec<TracePoint>> {
        predict_trace(&self.pump, &self.bath, &self.probe, self.thermal_n, delays)
    }
}

pub(crate) fn check_delays(delays: &[f64]) -> Result<()> {
    if delays.is_empty() {
        return domain("delay list is empty");
    }
    if delays.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return domain("delays must be finite and non-negative");
    }
    if delays.windows(2).any(|w| w[1] <= w[0]) {
        return domain("delays must be strictly increasing");
    }
    Ok(())
}

/// Noiseless mean and variance of the detected photon number at each delay.
pub fn predict_trace(
    pump: &PumpSpec,
    bath: &BathSpec,
    probe: &ProbeSpec,
    thermal_n: f64,
    delays: &[f64],
) -> Result<Vec<TracePoint>> {
    check_delays(delays)?;
    bath.validate()?;
    probe.validate()?;
    let model = IsrsModel { pump: *pump, bath: *bath, probe: *probe, thermal_n };
    let pumped = model.pumped_state()?;
    delays
        .iter()
        .map(|&tau| {
            let st = evolve(&pumped, tau, bath)?;
            let obs = observables(&st, probe);
            Ok(TracePoint { tau, mean_ny: obs.mean_ny, var_ny: obs.var_ny })
        })
        .collect()
}

/// chi(3) of the in-plane quartz Raman tensors as a 4x4 block matrix.
///
/// Entry `[2i + k][2j + l]` holds `chi_{ijkl}`: the outer 2x2 blocks are
/// indexed by emitted/probe polarization `(i, j)`, the inner ones by the two
/// pump polarizations `(k, l)`.
pub fn chi3_block(a: f64, c: f64) -> [[f64; 4]; 4] {
    let tensors = [
        [[a, 0.0], [0.0, a]],
        [[c, 0.0], [0.0, -c]],
        [[0.0, -c], [-c, 0.0]],
    ];
    let mut out = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = tensors.iter().map(|t| t[i][j] * t[k][l]).sum();
                }
            }
        }
    }
    out
}

/// Cross-polarized drive `|chi_{21kl, k != l} cos(theta) sin(theta)|` for a
/// linearly polarized pump at angle `theta` from x.
pub fn pump_efficiency(theta_pump: f64, c: f64) -> f64 {
    let chi = chi3_block(0.0, c);
    (chi[2][1] * theta_pump.cos() * theta_pump.sin()).abs()
}
