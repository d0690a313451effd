use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::fock::{annihilation, tail_levels, FockDensityMatrix, TAIL_LIMIT};
use crate::error::{domain, Error, Result};
use crate::probe::{ObservablePair, ProbeSpec};

/// Smallest photon cutoff accepted by [`probe_exact`].
pub const MIN_PHOTON_DIM: usize = 30;

/// Column `|0, m> -> sum_k u_k |k, m - k>` of the probe unitary restricted to
/// total excitation number `m`, with `k` counting photons.
fn block_column(m: usize, theta: f64) -> DVector<C64> {
    let n = m + 1;
    let gen = DMatrix::from_fn(n, n, |i, j| {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if hi == lo + 1 {
            C64::new(((hi * (m - lo)) as f64).sqrt() * -theta, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    (gen * C64::i()).exp().column(0).into_owned()
}

/// Photon state `Tr_b[U (|0><0| (x) rho) U^dag]` on `photon_dim` levels.
fn reduced_photon_state(rho: &FockDensityMatrix, theta: f64, photon_dim: usize) -> DMatrix<C64> {
    let d = rho.dim;
    let cols: Vec<DVector<C64>> = (0..d).map(|m| block_column(m, theta)).collect();
    let p = photon_dim.min(d);
    let mut sigma = DMatrix::zeros(photon_dim, photon_dim);
    for k in 0..p {
        for kp in 0..p {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..d - k.max(kp) {
                acc += rho.rho[(k + j, kp + j)] * cols[k + j][k] * cols[kp + j][kp].conj();
            }
            sigma[(k, kp)] = acc;
        }
    }
    sigma
}

/// Exact photon-number mean and variance of the detected mode.
///
/// The coherent amplitude is handled in the displaced frame: moving the
/// displacement through the beamsplitter leaves a displacement `a cos` on
/// the photons and one on the phonons, the latter dropping out of the
/// partial trace. Only the vacuum-input photon state then needs a number
/// basis, and its population stays close to that of the phonons.
pub fn probe_exact(rho_phonon: &FockDensityMatrix, probe: &ProbeSpec, photon_dim: usize) -> Result<ObservablePair> {
    probe.validate()?;
    if photon_dim < MIN_PHOTON_DIM {
        return domain(format!("photon_dim must be >= {MIN_PHOTON_DIM}, got {photon_dim}"));
    }
    rho_phonon.check_tail("probe phonon input")?;
    let theta = probe.coupling_norm;
    let sigma = reduced_photon_state(rho_phonon, theta, photon_dim);

    let pops: Vec<f64> = sigma.diagonal().iter().map(|z| z.re).collect();
    let tail: f64 = pops[photon_dim - tail_levels(photon_dim)..].iter().sum();
    let lost = 1.0 - pops.iter().sum::<f64>();
    if !(tail < TAIL_LIMIT && lost.abs() < TAIL_LIMIT) {
        return Err(Error::Truncation {
            what: "probe photon state",
            tail_mass: tail.max(lost.abs()),
            dim: photon_dim,
            suggested: 2 * photon_dim,
        });
    }

    // Two spare levels keep (X^dag X)^2 exact on the support of sigma.
    let pd = photon_dim + 2;
    let mut padded = DMatrix::zeros(pd, pd);
    padded.view_mut((0, 0), (photon_dim, photon_dim)).copy_from(&sigma);
    let shift = probe.intensity_y.sqrt() * C64::from_polar(1.0, -probe.delta()) * theta.cos();
    let x = annihilation(pd) + DMatrix::identity(pd, pd) * shift;
    let number = x.adjoint() * &x;
    let weighted = &padded * &number;
    let mean = weighted.trace().re;
    let second = (&weighted * &number).trace().re;
    Ok(ObservablePair { mean_ny: mean, var_ny: second - mean * mean })
}
