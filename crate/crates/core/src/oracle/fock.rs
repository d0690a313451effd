use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};
use crate::phonon::{BathSpec, GaussianPhononState};

/// Largest population allowed in the top tenth of the number basis.
pub const TAIL_LIMIT: f64 = 1e-8;
/// Trace drift beyond which the Lindblad integration is rejected.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Density matrix of a single bosonic mode in a truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    pub dim: usize,
    pub rho: DMatrix<C64>,
}

/// Number of levels counted by the tail-mass check.
pub fn tail_levels(dim: usize) -> usize {
    dim.div_ceil(10).max(1)
}

/// Annihilation operator truncated to `dim` levels.
pub fn annihilation(dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

impl FockDensityMatrix {
    pub fn from_matrix(rho: DMatrix<C64>) -> Result<Self> {
        if !rho.is_square() || rho.nrows() < 2 {
            return domain("density matrix must be square with dim >= 2");
        }
        Ok(Self { dim: rho.nrows(), rho })
    }

    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return domain("zero state vector");
        }
        let v = v / C64::new(norm, 0.0);
        Self::from_matrix(&v * v.adjoint())
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// Population of the top 10% of levels.
    pub fn tail_mass(&self) -> f64 {
        let k = tail_levels(self.dim);
        self.populations()[self.dim - k..].iter().sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn check_tail(&self, what: &'static str) -> Result<()> {
        let tail = self.tail_mass();
        if tail.is_finite() && tail < TAIL_LIMIT {
            Ok(())
        } else {
            Err(Error::Truncation { what, tail_mass: tail, dim: self.dim, suggested: 2 * self.dim })
        }
    }

    /// Full health check: Hermitian, unit trace, positive semidefinite.
    pub fn check_invariants(&self) -> Result<()> {
        let herm = (&self.rho - self.rho.adjoint()).camax();
        if herm > 1e-12 {
            return Err(Error::Unphysical(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Unphysical(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.rho.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-10 {
            return Err(Error::Unphysical(format!("negative eigenvalue {min_eig:.2e}")));
        }
        Ok(())
    }

    /// `<b>`
    pub fn mean_b(&self) -> C64 {
        (0..self.dim - 1)
            .map(|m| self.rho[(m + 1, m)] * ((m + 1) as f64).sqrt())
            .sum()
    }

    /// `<b^dag b>`
    pub fn occupation(&self) -> f64 {
        (0..self.dim).map(|m| m as f64 * self.rho[(m, m)].re).sum()
    }

    /// `<b^2>`
    pub fn anomalous(&self) -> C64 {
        (0..self.dim.saturating_sub(2))
            .map(|m| self.rho[(m + 2, m)] * (((m + 1) * (m + 2)) as f64).sqrt())
            .sum()
    }

    /// First and second moments as a Gaussian triple.
    pub fn gaussian_moments(&self) -> GaussianPhononState {
        GaussianPhononState { mean_b: self.mean_b(), occ: self.occupation(), anom: self.anomalous() }
    }

    /// Mean and variance of `B = (b + b^dag)/sqrt(2)` from the truncated
    /// matrix representation of `B`.
    pub fn quadrature_moments(&self) -> (f64, f64) {
        let b = annihilation(self.dim);
        let q = (&b + b.adjoint()) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mean = (&self.rho * &q).trace().re;
        let second = (&self.rho * &q * &q).trace().re;
        (mean, second - mean * mean)
    }
}

/// Thermal state with mean occupation `n_mean`, renormalized on `dim` levels.
pub fn build_thermal_fock(n_mean: f64, dim: usize) -> Result<FockDensityMatrix> {
    if dim < 2 {
        return domain("Fock cutoff must be >= 2");
    }
    if !(n_mean >= 0.0 && n_mean.is_finite()) {
        return domain(format!("thermal occupation must be >= 0, got {n_mean}"));
    }
    let ratio = n_mean / (n_mean + 1.0);
    let mut pops: Vec<f64> = (0..dim).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = pops.iter().sum();
    pops.iter_mut().for_each(|p| *p /= total);
    let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        pops.into_iter().map(|p| C64::new(p, 0.0)),
    ));
    let out = FockDensityMatrix { dim, rho };
    out.check_tail("thermal state")?;
    Ok(out)
}

/// Pump unitary `exp(-i [c1 b^dag + c1^* b + c2 b^dag^2 + c2^* b^2])` on the truncated space.
pub fn pump_unitary(dim: usize, c1: C64, c2: C64) -> DMatrix<C64> {
    let b = annihilation(dim);
    let bd = b.adjoint();
    let gen = &bd * c1 + &b * c1.conj() + &bd * &bd * c2 + &b * &b * c2.conj();
    (gen * C64::new(0.0, -1.0)).exp()
}

pub fn apply_pump_exact(rho: &FockDensityMatrix, c1: C64, c2: C64) -> Result<FockDensityMatrix> {
    rho.check_tail("pump input")?;
    let u = pump_unitary(rho.dim, c1, c2);
    let mut out = &u * &rho.rho * u.adjoint();
    hermitize(&mut out);
    let out = FockDensityMatrix { dim: rho.dim, rho: out };
    out.check_tail("pumped state")?;
    Ok(out)
}

/// `dst = base + h k`
fn offset(dst: &mut DMatrix<C64>, base: &DMatrix<C64>, h: f64, k: &DMatrix<C64>) {
    for ((d, b), k) in dst.iter_mut().zip(base.iter()).zip(k.iter()) {
        *d = b + k * h;
    }
}

fn hermitize(m: &mut DMatrix<C64>) {
    let h = (&*m + m.adjoint()) * C64::new(0.5, 0.0);
    *m = h;
}

/// Largest step the Lindblad integrator accepts for a bath.
pub fn lindblad_step_bound(bath: &BathSpec) -> f64 {
    let relax = if bath.lambda > 0.0 { 0.05 / (bath.lambda * (1.0 + bath.n_bath)) } else { f64::INFINITY };
    let rot = if bath.omega > 0.0 { 0.05 / bath.omega } else { f64::INFINITY };
    relax.min(rot)
}

/// Dissipative part of the generator, evaluated elementwise.
///
/// The truncated `b b^dag` is `diag(m + 1)` with the top level zeroed, which
/// keeps the trace exactly conserved on the truncated space.
fn dissipator(rho: &DMatrix<C64>, down: f64, up: f64, out: &mut DMatrix<C64>) {
    let d = rho.nrows();
    let bbd = |m: usize| if m + 1 < d { (m + 1) as f64 } else { 0.0 };
    for n in 0..d {
        for m in 0..d {
            let mut v = C64::new(0.0, 0.0);
            if m + 1 < d && n + 1 < d {
                v += rho[(m + 1, n + 1)] * (((m + 1) * (n + 1)) as f64).sqrt() * down;
            }
            if m > 0 && n > 0 {
                v += rho[(m - 1, n - 1)] * ((m * n) as f64).sqrt() * up;
            }
            v -= rho[(m, n)] * (0.5 * down * (m + n) as f64 + 0.5 * up * (bbd(m) + bbd(n)));
            out[(m, n)] = v;
        }
    }
}

/// Integrates the thermal master equation for a delay `tau`.
///
/// The dissipator is phase covariant, so the free rotation is applied exactly
/// and only the dissipative part is integrated with classical RK4. `dt` is
/// the requested step; it is subdivided further when the truncated
/// dissipator is stiff.
pub fn evolve_lindblad_exact(
    rho: &FockDensityMatrix,
    tau: f64,
    bath: &BathSpec,
    dt: f64,
) -> Result<FockDensityMatrix> {
    bath.validate()?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return domain(format!("tau must be finite and >= 0, got {tau}"));
    }
    let bound = lindblad_step_bound(bath);
    if !(dt > 0.0 && dt <= bound) {
        return domain(format!("dt = {dt} outside (0, {bound:.3e}]"));
    }
    let d = rho.dim;
    let down = bath.lambda * (bath.n_bath + 1.0);
    let up = bath.lambda * bath.n_bath;
    let fastest = down * (d - 1) as f64 + up * (2 * d - 1) as f64;
    let h_max = if fastest > 0.0 { dt.min(1.0 / fastest) } else { dt };
    let steps = if fastest > 0.0 { (tau / h_max).ceil() as usize } else { 0 };

    let mut x = rho.rho.clone();
    let tr0 = rho.trace();
    if steps > 0 {
        let h = tau / steps as f64;
        let (mut k1, mut k2, mut k3, mut k4) =
            (x.clone(), x.clone(), x.clone(), x.clone());
        let mut tmp = x.clone();
        for _ in 0..steps {
            dissipator(&x, down, up, &mut k1);
            offset(&mut tmp, &x, 0.5 * h, &k1);
            dissipator(&tmp, down, up, &mut k2);
            offset(&mut tmp, &x, 0.5 * h, &k2);
            dissipator(&tmp, down, up, &mut k3);
            offset(&mut tmp, &x, h, &k3);
            dissipator(&tmp, down, up, &mut k4);
            for (((xi, a), (b, c)), e) in x.iter_mut().zip(k1.iter()).zip(k2.iter().zip(k3.iter())).zip(k4.iter()) {
                *xi += (a + (b + c) * 2.0 + e) * (h / 6.0);
            }
        }
    }
    for n in 0..d {
        for m in 0..d {
            x[(m, n)] *= C64::from_polar(1.0, -bath.omega * tau * (m as f64 - n as f64));
        }
    }
    hermitize(&mut x);
    let drift = ((x.trace().re) - tr0).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::StepSize { drift, limit: TRACE_DRIFT_LIMIT });
    }
    let out = FockDensityMatrix { dim: d, rho: x };
    out.check_tail("evolved state")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonon::{apply_pump, evolve, QUARTZ_E_MODE_OMEGA};
    use approx::assert_relative_eq;

    fn bath(lambda: f64, n_bath: f64) -> BathSpec {
        BathSpec { omega: QUARTZ_E_MODE_OMEGA, lambda, n_bath }
    }

    #[test]
    fn thermal_populations() {
        let vac = build_thermal_fock(0.0, 10).unwrap();
        assert_eq!(vac.populations()[0], 1.0);
        assert!(vac.populations()[1..].iter().all(|&p| p == 0.0));

        let one = build_thermal_fock(1.0, 40).unwrap();
        let p = one.populations();
        for k in 0..10 {
            assert_relative_eq!(p[k], 0.5f64.powi(k as i32 + 1), max_relative = 1e-10);
        }
        assert!(build_thermal_fock(1.0, 1).is_err());
    }

    #[test]
    fn thermal_occupation_is_accurate() {
        for &(n, dim) in &[(0.3, 40), (1.0, 40), (1.18, 60), (2.0, 60), (2.0, 80)] {
            let th = build_thermal_fock(n, dim).unwrap();
            assert!((th.occupation() - n).abs() < 1e-8, "n={n} dim={dim}: {}", th.occupation());
            th.check_invariants().unwrap();
        }
    }

    #[test]
    fn thermal_tail_check_suggests_larger_cutoff() {
        match build_thermal_fock(2.0, 40) {
            Err(Error::Truncation { suggested, dim, .. }) => {
                assert_eq!(dim, 40);
                assert!(suggested > 40);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn pump_identity_and_displacement() {
        let th = build_thermal_fock(0.7, 50).unwrap();
        let same = apply_pump_exact(&th, C64::new(0.0, 0.0), C64::new(0.0, 0.0)).unwrap();
        assert!((&same.rho - &th.rho).camax() < 1e-14);

        let vac = build_thermal_fock(0.0, 50).unwrap();
        let coh = apply_pump_exact(&vac, C64::new(0.8, 0.0), C64::new(0.0, 0.0)).unwrap();
        let b = coh.mean_b();
        assert!((b - C64::new(0.0, -0.8)).norm() < 1e-12, "{b}");
        assert_relative_eq!(coh.occupation(), 0.64, max_relative = 1e-12);
    }

    #[test]
    fn squeezed_vacuum_occupation() {
        let vac = build_thermal_fock(0.0, 60).unwrap();
        for &a in &[0.05, 0.1, 0.25] {
            for &phi in &[0.0, 1.0, -2.0] {
                let sq = apply_pump_exact(&vac, C64::new(0.0, 0.0), C64::from_polar(a, phi)).unwrap();
                let expect = (2.0 * a).sinh().powi(2);
                assert!((sq.occupation() - expect).abs() < 1e-6, "{} vs {}", sq.occupation(), expect);
                assert!((sq.purity() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pump_matches_gaussian_map() {
        let th = build_thermal_fock(1.2, 60).unwrap();
        let (c1, c2) = (C64::new(0.3, -0.5), C64::new(0.12, 0.07));
        let exact = apply_pump_exact(&th, c1, c2).unwrap().gaussian_moments();
        let fast = apply_pump(&GaussianPhononState::thermal(1.2), c1, c2).unwrap();
        assert!((exact.mean_b - fast.mean_b).norm() < 1e-8);
        assert!((exact.occ - fast.occ).abs() < 1e-7);
        assert!((exact.anom - fast.anom).norm() < 1e-7);
    }

    #[test]
    fn pure_input_stays_pure() {
        let amps: Vec<C64> = (0..8).map(|k| C64::new(1.0 / (k + 1) as f64, 0.1 * k as f64)).collect();
        let mut padded = amps.clone();
        padded.resize(60, C64::new(0.0, 0.0));
        let psi = FockDensityMatrix::pure(&padded).unwrap();
        let out = apply_pump_exact(&psi, C64::new(0.2, 0.1), C64::new(0.05, -0.1)).unwrap();
        assert!((out.purity() - 1.0).abs() < 1e-8);
        out.check_invariants().unwrap();
    }

    #[test]
    fn unitary_rotation_without_damping() {
        let vac = build_thermal_fock(0.0, 40).unwrap();
        let coh = apply_pump_exact(&vac, C64::new(0.5, 0.2), C64::new(0.0, 0.0)).unwrap();
        let b0 = coh.mean_b();
        let bt = bath(0.0, 0.0);
        let tau = 0.731;
        let out = evolve_lindblad_exact(&coh, tau, &bt, lindblad_step_bound(&bt)).unwrap();
        let expect = b0 * C64::from_polar(1.0, -bt.omega * tau);
        assert!((out.mean_b() - expect).norm() < 1e-12);
    }

    #[test]
    fn thermal_bath_state_is_stationary() {
        let bt = bath(0.4, 1.1);
        let th = build_thermal_fock(1.1, 60).unwrap();
        let out = evolve_lindblad_exact(&th, 5.0, &bt, lindblad_step_bound(&bt)).unwrap();
        assert!((&out.rho - &th.rho).camax() < 1e-8);
        assert!((out.trace() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lindblad_matches_gaussian_evolution() {
        let bt = bath(0.3, 1.0);
        let start = GaussianPhononState::thermal(0.8);
        let (c1, c2) = (C64::new(0.6, 0.1), C64::new(0.0, -0.1));
        let fock = apply_pump_exact(&build_thermal_fock(0.8, 60).unwrap(), c1, c2).unwrap();
        let tau = 3.0 / bt.lambda;
        let exact = evolve_lindblad_exact(&fock, tau, &bt, lindblad_step_bound(&bt)).unwrap();
        let fast = evolve(&apply_pump(&start, c1, c2).unwrap(), tau, &bt).unwrap();
        let got = exact.gaussian_moments();
        assert!((got.mean_b - fast.mean_b).norm() < 1e-6);
        assert!((got.occ - fast.occ).abs() < 1e-6);
        assert!((got.anom - fast.anom).norm() < 1e-6);
        assert!((exact.trace() - 1.0).abs() < 1e-8);
        exact.check_invariants().unwrap();
    }

    #[test]
    fn zero_temperature_bath_drains_energy_monotonically() {
        let bt = bath(0.5, 0.0);
        let psi = apply_pump_exact(&build_thermal_fock(0.5, 50).unwrap(), C64::new(0.7, 0.0), C64::new(0.1, 0.0)).unwrap();
        let dt = lindblad_step_bound(&bt);
        let mut cur = psi;
        let mut last = cur.occupation();
        for _ in 0..40 {
            cur = evolve_lindblad_exact(&cur, 0.5, &bt, dt).unwrap();
            let e = cur.occupation();
            assert!(e < last);
            last = e;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn rejects_oversized_steps() {
        let bt = bath(0.3, 1.0);
        let th = build_thermal_fock(1.0, 40).unwrap();
        assert!(evolve_lindblad_exact(&th, 1.0, &bt, 0.1).is_err());
    }

    #[test]
    fn quadrature_of_vacuum() {
        let vac = build_thermal_fock(0.0, 20).unwrap();
        let (m, v) = vac.quadrature_moments();
        assert_eq!(m, 0.0);
        assert!((v - 0.5).abs() < 1e-15);
    }
}
