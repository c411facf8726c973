use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{section_basis, section_basis_from, variational_tol, FloquetData};
use crate::dynamics::{self, apply_omega, HamiltonianSystem};
use crate::error::{Error, Result};
use crate::orbits::PeriodicOrbit;

const DEFAULT_SAMPLES: usize = 512;
const DEFAULT_TOL: f64 = 1e-10;

fn wrap(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Null vector of `Ψ − λ` (last right singular vector).
fn eigenvector(psi: &DMatrix<f64>, lam: Complex64) -> DVector<Complex64> {
    let n = psi.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(psi[(i, j)], 0.0) - if i == j { lam } else { Complex64::new(0.0, 0.0) });
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^*");
    let (imin, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    v_t.row(imin).adjoint()
}

/// Krein sign `Im(v* Ω v)` of an eigenvector of a symplectic map.
fn krein(v: &DVector<Complex64>) -> f64 {
    let d = v.len() / 2;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        acc += v[i].conj() * v[d + i] - v[d + i].conj() * v[i];
    }
    acc.im
}

/// Angles of the Krein-positive eigenvalues on the unit circle.
fn positive_angles(psi: &DMatrix<f64>) -> Vec<f64> {
    let eig = psi.clone().complex_eigenvalues();
    let mut out = Vec::new();
    for &lam in eig.iter() {
        if (lam.norm() - 1.0).abs() > 1e-5 || lam.im.abs() < 1e-7 {
            continue;
        }
        let v = eigenvector(psi, lam);
        if krein(&v) > 0.0 {
            out.push(lam.arg());
        }
    }
    out
}

pub fn elliptic_index(sys: &HamiltonianSystem, orbit: &PeriodicOrbit, floq: &FloquetData) -> Result<i64> {
    elliptic_index_with(sys, orbit, floq, DEFAULT_SAMPLES, DEFAULT_TOL)
}

/// Track the angle of each Krein-positive elliptic eigenvalue of the
/// reduced tangent map `Ψ(t)` over one period and sum `⌊sweep / 2π⌋`.
///
/// `Ψ(t) = B(t)ᵀ dΦ^t B(0)`, with `B(t)` a section basis transported from
/// `B(0)` by projection, so `Ψ(0) = Id` and `Ψ(T)` is the monodromy.
pub fn elliptic_index_with(
    sys: &HamiltonianSystem,
    orbit: &PeriodicOrbit,
    floq: &FloquetData,
    samples: usize,
    tol: f64,
) -> Result<i64> {
    let ell = floq.elliptic_count;
    if ell == 0 {
        return Ok(0);
    }
    let samples = samples.max(64);
    let x0 = orbit.x0.to_flat();
    let b0 = section_basis(sys, &x0)?;
    let d = b0.ncols() / 2;
    let seeds: Vec<DVector<f64>> = (0..d).map(|i| b0.column(i).into_owned()).collect();
    let times: Vec<f64> = (1..=samples).map(|i| orbit.period * i as f64 / samples as f64).collect();
    let states = dynamics::variational_samples(sys, &x0, &times, variational_tol(tol))?;

    let mut angles: Option<Vec<f64>> = None;
    let mut skipped_run = 0usize;
    for vs in &states {
        let x = vs.point.to_flat();
        let g = sys.gradient(&x)?;
        let gn = g.normalize();
        let f = apply_omega(&g);
        let fperp = (&f - &gn * gn.dot(&f)).normalize();
        let bt = section_basis_from(&[gn, fperp], sys.n, Some(&seeds))?;
        let psi = bt.transpose() * &vs.jacobian * &b0;

        let cands = positive_angles(&psi);
        if cands.len() != ell {
            skipped_run += 1;
            if skipped_run > samples / 16 {
                return Err(Error::Degeneracy(format!(
                    "expected {ell} Krein-positive elliptic eigenvalues, found {} over a long stretch",
                    cands.len()
                )));
            }
            continue;
        }
        skipped_run = 0;
        for (i, a) in cands.iter().enumerate() {
            for b in &cands[i + 1..] {
                if wrap(a - b).abs() < 1e-6 {
                    return Err(Error::Degeneracy("two elliptic pairs collide on the unit circle".into()));
                }
            }
        }
        match angles.as_mut() {
            None => {
                let mut a = cands.clone();
                a.sort_by(|x, y| x.total_cmp(y));
                angles = Some(a);
            }
            Some(track) => {
                let mut free: Vec<f64> = cands.clone();
                for phi in track.iter_mut() {
                    let (k, inc) = free
                        .iter()
                        .enumerate()
                        .map(|(k, c)| (k, wrap(c - *phi)))
                        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                        .expect("as many candidates as tracks");
                    if inc.abs() > PI / 2.0 {
                        return Err(Error::Degeneracy(format!(
                            "elliptic angle jumped by {inc:.3} rad between samples; increase the sample count"
                        )));
                    }
                    *phi += inc;
                    free.swap_remove(k);
                }
            }
        }
    }
    let angles = angles.ok_or_else(|| Error::Degeneracy("no sample resolved the elliptic eigenvalues".into()))?;
    Ok(angles.iter().map(|a| (a / (2.0 * PI)).floor() as i64).sum())
}
