use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fock::{apply_pump_exact, build_thermal_fock, evolve_lindblad_exact, lindblad_step_bound, FockDensityMatrix};
use super::probe::probe_exact;
use crate::error::{Error, Result};
use crate::phonon::{apply_pump, evolve, quadrature_variance, BathSpec, GaussianPhononState, QUARTZ_E_MODE_OMEGA};
use crate::probe::{observables, variance_terms, ObservablePair, ProbeSpec};

pub const MOMENT_TOL: f64 = 1e-6;
pub const OBSERVABLE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCutoffs {
    pub phonon_dim: usize,
    pub photon_dim: usize,
    /// How many times a cutoff may be doubled after a failed tail check.
    pub max_doublings: u32,
}

impl Default for OracleCutoffs {
    fn default() -> Self {
        Self { phonon_dim: 60, photon_dim: 40, max_doublings: 2 }
    }
}

/// One configuration of the cross-validation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub n: f64,
    pub c1: C64,
    pub c2: C64,
    pub bath: BathSpec,
    pub tau: f64,
    pub probe: ProbeSpec,
}

/// Deliberate corruption of the fast path, used to prove the grid can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleFault {
    #[default]
    None,
    /// Flip the sign of the anomalous-moment term of the variance.
    FlipAnomalousTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub point: OraclePoint,
    pub phonon_dim: usize,
    pub photon_dim: usize,
    /// Largest absolute deviation among `<b>`, `<b^dag b>`, `<b^2>` and the quadrature variance.
    pub moment_error: f64,
    pub mean_rel_error: f64,
    pub var_rel_error: f64,
    pub fast: ObservablePair,
    pub exact: ObservablePair,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub max_moment_error: f64,
    pub max_mean_rel_error: f64,
    pub max_var_rel_error: f64,
    pub passed: bool,
}

struct ExactRun {
    phonon: FockDensityMatrix,
    obs: ObservablePair,
    photon_dim: usize,
}

fn exact_once(p: &OraclePoint, phonon_dim: usize, photon_dim: usize) -> Result<ExactRun> {
    let rho = build_thermal_fock(p.n, phonon_dim)?;
    let rho = apply_pump_exact(&rho, p.c1, p.c2)?;
    let rho = evolve_lindblad_exact(&rho, p.tau, &p.bath, lindblad_step_bound(&p.bath))?;
    let obs = probe_exact(&rho, &p.probe, photon_dim)?;
    Ok(ExactRun { phonon: rho, obs, photon_dim })
}

fn exact_with_retries(p: &OraclePoint, cut: &OracleCutoffs) -> Result<ExactRun> {
    let (mut pd, mut ph) = (cut.phonon_dim, cut.photon_dim);
    let mut attempt = 0;
    loop {
        match exact_once(p, pd, ph) {
            Err(Error::Truncation { what, .. }) if attempt < cut.max_doublings => {
                if what == "probe photon state" {
                    ph *= 2;
                } else {
                    pd *= 2;
                }
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Fast-path versus Fock-space comparison for one configuration.
pub fn check_point(p: &OraclePoint, cut: &OracleCutoffs, fault: OracleFault) -> Result<OracleCheck> {
    let fast_state = evolve(&apply_pump(&GaussianPhononState::thermal(p.n), p.c1, p.c2)?, p.tau, &p.bath)?;
    let mut fast = observables(&fast_state, &p.probe);
    if fault == OracleFault::FlipAnomalousTerm {
        fast.var_ny -= 2.0 * variance_terms(&fast_state, &p.probe).anomalous;
    }

    let run = exact_with_retries(p, cut)?;
    let got = run.phonon.gaussian_moments();
    let (_, qvar) = run.phonon.quadrature_moments();
    let moment_error = [
        (got.mean_b - fast_state.mean_b).norm(),
        (got.occ - fast_state.occ).abs(),
        (got.anom - fast_state.anom).norm(),
        (qvar - quadrature_variance(&fast_state)).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let mean_rel_error = rel(fast.mean_ny, run.obs.mean_ny);
    let var_rel_error = rel(fast.var_ny, run.obs.var_ny);
    Ok(OracleCheck {
        point: *p,
        phonon_dim: run.phonon.dim,
        photon_dim: run.photon_dim,
        moment_error,
        mean_rel_error,
        var_rel_error,
        fast,
        exact: run.obs,
        passed: moment_error < MOMENT_TOL && mean_rel_error < OBSERVABLE_TOL && var_rel_error < OBSERVABLE_TOL,
    })
}

/// Randomized grid over `n in [0, 2]`, `r in [0, 0.5]`, `lambda tau in [0, 3]`,
/// coupling in `[0, 0.3]` and `I_y in [5, 50]`, with random phases.
pub fn random_grid(points: usize, seed: u64) -> Vec<OraclePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..points)
        .map(|_| {
            let n = rng.random_range(0.0..=2.0);
            let r: f64 = rng.random_range(0.0..=0.5);
            let c2 = C64::from_polar(0.5 * r, rng.random_range(0.0..two_pi));
            let c1 = C64::from_polar(rng.random_range(0.0..=1.0), rng.random_range(0.0..two_pi));
            let lambda = rng.random_range(0.1..=0.5);
            let n_bath = n * rng.random_range(0.8..=1.2f64);
            let tau = rng.random_range(0.0..=3.0) / lambda;
            OraclePoint {
                n,
                c1,
                c2,
                bath: BathSpec { omega: QUARTZ_E_MODE_OMEGA, lambda, n_bath: n_bath.min(2.0) },
                tau,
                probe: ProbeSpec {
                    coupling_norm: rng.random_range(0.0..=0.3),
                    theta_prime: rng.random_range(0.0..two_pi),
                    intensity_y: rng.random_range(5.0..=50.0),
                    theta_y: 0.0,
                },
            }
        })
        .collect()
}

pub fn run_grid(points: &[OraclePoint], cut: &OracleCutoffs, fault: OracleFault) -> Result<OracleReport> {
    let checks = points
        .par_iter()
        .map(|p| check_point(p, cut, fault))
        .collect::<Result<Vec<_>>>()?;
    let max_of = |f: fn(&OracleCheck) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    Ok(OracleReport {
        max_moment_error: max_of(|c| c.moment_error),
        max_mean_rel_error: max_of(|c| c.mean_rel_error),
        max_var_rel_error: max_of(|c| c.var_rel_error),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_passes() {
        let pts = random_grid(3, 11);
        let rep = run_grid(&pts, &OracleCutoffs::default(), OracleFault::None).unwrap();
        assert!(rep.passed, "{rep:#?}");
    }

    #[test]
    fn fault_is_detected() {
        let mut pts = random_grid(2, 5);
        for p in &mut pts {
            p.c2 = C64::new(0.0, -0.2);
            p.tau = 0.2;
        }
        let rep = run_grid(&pts, &OracleCutoffs::default(), OracleFault::FlipAnomalousTerm).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn grid_respects_ranges() {
        for p in random_grid(200, 1) {
            assert!((0.0..=2.0).contains(&p.n));
            assert!(2.0 * p.c2.norm() <= 0.5 + 1e-12);
            let lt = p.bath.lambda * p.tau;
            assert!((0.0..=3.0 + 1e-12).contains(&lt));
            assert!((0.0..=0.3).contains(&p.probe.coupling_norm));
            assert!((5.0..=50.0).contains(&p.probe.intensity_y));
        }
    }
}
