//! Single-mode phonon in the Gaussian (first and second moment) representation.
//!
//! Every state reachable in the model (thermal preparation, the pump's
//! displacement and squeezing, then thermal damping) is Gaussian, so the
//! triple `(<b>, <b^dag b>, <b^2>)` describes it completely. The operations
//! here are closed-form maps on that triple.
//!
//! Conventions: time in ps, angular frequency in rad/ps, the pump unitary is
//! `U = exp(-i (c1 b^dag + c1* b + c2 b^dag^2 + c2* b^2))` and the pumped
//! state is `U rho U^dag`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Phonon angular frequency of the quartz E mode, 3.84 THz, in rad/ps.
pub const QUARTZ_E_MODE_OMEGA: f64 = 2.0 * std::f64::consts::PI * 3.84;

/// hbar / k_B in K ps (so that `HBAR_OVER_KB * omega[rad/ps]` is a temperature).
pub const HBAR_OVER_KB_K_PS: f64 = 7.638_232_577;

/// Below this `|c2|` the pump is treated as a pure displacement.
pub const SQUEEZE_EPS: f64 = 1e-8;

const PHYSICALITY_TOL: f64 = 1e-12;

/// First and second moments of one bosonic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPhononState {
    /// `<b>`
    pub mean_b: C64,
    /// `<b^dag b>`
    pub occ: f64,
    /// `<b^2>`
    pub anom: C64,
}

impl GaussianPhononState {
    pub fn vacuum() -> Self {
        Self::thermal(0.0)
    }

    pub fn thermal(n: f64) -> Self {
        Self {
            mean_b: C64::new(0.0, 0.0),
            occ: n,
            anom: C64::new(0.0, 0.0),
        }
    }

    /// `<b^dag b> - |<b>|^2`
    pub fn central_occupation(&self) -> f64 {
        self.occ - self.mean_b.norm_sqr()
    }

    /// `<b^2> - <b>^2`
    pub fn central_anomalous(&self) -> C64 {
        self.anom - self.mean_b * self.mean_b
    }

    /// Rebuild a state from its mean and central second moments.
    pub fn from_central(mean_b: C64, central_occ: f64, central_anom: C64) -> Self {
        Self {
            mean_b,
            occ: central_occ + mean_b.norm_sqr(),
            anom: central_anom + mean_b * mean_b,
        }
    }

    /// `(nu_c + 1/2)^2 - |m_c|^2 - 1/4`; non-negative for physical states.
    pub fn uncertainty_margin(&self) -> f64 {
        let half = self.central_occupation() + 0.5;
        half * half - self.central_anomalous().norm_sqr() - 0.25
    }

    pub fn check_physical(&self) -> Result<()> {
        let nc = self.central_occupation();
        let scale = (nc + 0.5).powi(2).max(1.0);
        if !(self.occ.is_finite() && self.mean_b.is_finite() && self.anom.is_finite()) {
            return Err(Error::Unphysical("non-finite moment".into()));
        }
        if nc < -PHYSICALITY_TOL * scale {
            return Err(Error::Unphysical(format!("central occupation {nc:e} < 0")));
        }
        let margin = self.uncertainty_margin();
        if margin < -PHYSICALITY_TOL * scale {
            return Err(Error::Unphysical(format!(
                "uncertainty bound violated by {:e}",
                -margin
            )));
        }
        Ok(())
    }

    pub fn is_physical(&self) -> bool {
        self.check_physical().is_ok()
    }
}

/// Bose-Einstein occupation `1 / (exp(beta*Omega) - 1)`.
///
/// Returns exactly 0 for `beta_omega > 700`.
pub fn thermal_occupation(beta_omega: f64) -> Result<f64> {
    if !beta_omega.is_finite() && beta_omega != f64::INFINITY {
        return domain(format!("beta*Omega must be a number, got {beta_omega}"));
    }
    if beta_omega <= 0.0 {
        return domain(format!("beta*Omega must be > 0, got {beta_omega}"));
    }
    if beta_omega > 700.0 {
        return Ok(0.0);
    }
    Ok(1.0 / beta_omega.exp_m1())
}

/// `hbar Omega / (k_B T)` for `omega` in rad/ps and `temperature_k` in K.
pub fn beta_omega(omega: f64, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0 && temperature_k.is_finite()) {
        return domain(format!("temperature must be positive, got {temperature_k}"));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return domain(format!("omega must be positive, got {omega}"));
    }
    Ok(HBAR_OVER_KB_K_PS * omega / temperature_k)
}

/// Pump pulse parameters for the mean-field pump unitary.
///
/// All `K` comb modes carry the same amplitude. The x-polarized component is
/// the phase reference (amplitude `|nu|`), the y-polarized component is
/// `nu_amp`, so a real positive `nu_amp` gives real positive `c1`, `c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub mu_d: f64,
    pub mu_s: f64,
    pub nu_amp: C64,
    pub k_modes: u32,
}

impl PumpSpec {
    /// Pump with real amplitude `sqrt(nu_sq)` (photons per unit cell per pulse).
    pub fn with_intensity(mu_d: f64, mu_s: f64, nu_sq: f64, k_modes: u32) -> Self {
        Self {
            mu_d,
            mu_s,
            nu_amp: C64::new(nu_sq.max(0.0).sqrt(), 0.0),
            k_modes,
        }
    }

    pub fn off() -> Self {
        Self::with_intensity(0.0, 0.0, 0.0, 1)
    }
}

/// Linear (`c1`) and quadratic (`c2`) pump generator coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpCoefficients {
    pub c1: C64,
    pub c2: C64,
}

impl PumpCoefficients {
    /// Squeezing amplitude `r = 2 |c2|`.
    pub fn r(&self) -> f64 {
        2.0 * self.c2.norm()
    }

    /// Squeezing phase `psi = arg(c2) + pi/2`.
    pub fn psi(&self) -> f64 {
        self.c2.arg() + std::f64::consts::FRAC_PI_2
    }
}

pub fn pump_coefficients(spec: &PumpSpec) -> Result<PumpCoefficients> {
    if spec.k_modes == 0 {
        return domain("k_modes must be >= 1");
    }
    if !(spec.mu_d.is_finite() && spec.mu_s.is_finite() && spec.nu_amp.is_finite()) {
        return domain("pump parameters must be finite");
    }
    let pair = spec.nu_amp * spec.nu_amp.norm() * f64::from(spec.k_modes);
    Ok(PumpCoefficients {
        c1: pair * spec.mu_d,
        c2: pair * spec.mu_s,
    })
}

/// Thermal bath driving the phonon mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    /// Phonon angular frequency (rad/ps).
    pub omega: f64,
    /// Damping rate (1/ps).
    pub lambda: f64,
    /// Bath occupation `n'`.
    pub n_bath: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return domain(format!("omega must be > 0, got {}", self.omega));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return domain(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.n_bath >= 0.0 && self.n_bath.is_finite()) {
            return domain(format!("n_bath must be >= 0, got {}", self.n_bath));
        }
        Ok(())
    }
}

/// Affine Bogoliubov map of the pump in the Heisenberg picture:
/// `U^dag b U = s11 b + s12 b^dag + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BogoliubovMap {
    pub s11: f64,
    pub s12: C64,
    pub shift: C64,
}

impl BogoliubovMap {
    pub fn from_coefficients(c1: C64, c2: C64) -> Self {
        let a = c2.norm();
        if a < SQUEEZE_EPS {
            return Self {
                s11: 1.0,
                s12: C64::new(0.0, 0.0),
                shift: -C64::i() * c1,
            };
        }
        let phase = c2 / a;
        let two_a = 2.0 * a;
        let s12 = -C64::i() * phase * two_a.sinh();
        // shift = (S - 1) (c1* c2, c1 c2*)^T / (2|c2|^2), first row, written
        // without the 1/|c2| cancellation.
        let sinh_a = a.sinh();
        let shift = c1.conj() * phase * (sinh_a * (sinh_a / a))
            - C64::i() * c1 * (two_a.sinh() / two_a);
        Self {
            s11: two_a.cosh(),
            s12,
            shift,
        }
    }

    /// Determinant of the 2x2 squeezing matrix, `cosh^2 - sinh^2`.
    pub fn determinant(&self) -> f64 {
        self.s11 * self.s11 - self.s12.norm_sqr()
    }

    pub fn apply(&self, state: &GaussianPhononState) -> GaussianPhononState {
        let (s11, s12) = (self.s11, self.s12);
        let beta = state.mean_b;
        let nc = state.central_occupation();
        let mc = state.central_anomalous();

        let mean = s11 * beta + s12 * beta.conj() + self.shift;
        let mc_new = s11 * s11 * mc + s12 * s12 * mc.conj() + s11 * s12 * (2.0 * nc + 1.0);
        let nc_new = s11 * s11 * nc
            + s12.norm_sqr() * (nc + 1.0)
            + 2.0 * (s11 * s12 * mc.conj()).re;
        GaussianPhononState::from_central(mean, nc_new, mc_new)
    }
}

/// Pumped state `U rho U^dag` for the displacement/squeezing unitary.
pub fn apply_pump(state: &GaussianPhononState, c1: C64, c2: C64) -> Result<GaussianPhononState> {
    let out = BogoliubovMap::from_coefficients(c1, c2).apply(state);
    out.check_physical().map_err(|e| {
        Error::Unphysical(format!("apply_pump produced an unphysical state ({e})"))
    })?;
    Ok(out)
}

/// Variance of `B = (b + b^dag)/sqrt(2)`.
pub fn quadrature_variance(state: &GaussianPhononState) -> f64 {
    state.central_occupation() + 0.5 + state.central_anomalous().re
}

/// Variance of the conjugate quadrature `(b - b^dag)/(i sqrt(2))`.
pub fn conjugate_quadrature_variance(state: &GaussianPhononState) -> f64 {
    state.central_occupation() + 0.5 - state.central_anomalous().re
}

/// Smallest and largest variance over all rotated quadratures.
pub fn principal_quadrature_variances(state: &GaussianPhononState) -> (f64, f64) {
    let nc = state.central_occupation() + 0.5;
    let m = state.central_anomalous().norm();
    (nc - m, nc + m)
}

/// Closed form for a squeezed thermal state:
/// `(n + 1/2) (cosh 2r - sinh 2r cos psi)`, with `n + 1/2 = coth(beta Omega / 2) / 2`.
pub fn squeezed_thermal_quadrature_variance(n: f64, r: f64, psi: f64) -> f64 {
    (n + 0.5) * ((2.0 * r).cosh() - (2.0 * r).sinh() * psi.cos())
}

/// Free damped evolution for a delay `tau` under the thermal Lindblad generator.
pub fn evolve(state: &GaussianPhononState, tau: f64, bath: &BathSpec) -> Result<GaussianPhononState> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("tau must be finite and >= 0, got {tau}"));
    }
    bath.validate()?;
    let decay = (-bath.lambda * tau).exp();
    let half = (-0.5 * bath.lambda * tau).exp();
    let rot = C64::from_polar(1.0, -bath.omega * tau);

    let mean = state.mean_b * rot * half;
    let mc = state.central_anomalous() * rot * rot * decay;
    let nc = decay * (state.central_occupation() - bath.n_bath) + bath.n_bath;
    Ok(GaussianPhononState::from_central(mean, nc, mc))
}
