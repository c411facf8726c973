//! Linearized Poincaré maps of periodic orbits and their Floquet data.
//!
//! Exponents are per period: `λ = e^{μ}` for a multiplier of the reduced
//! map, never rates per unit time.

mod index;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, apply_omega, symplectic_defect, HamiltonianSystem};
use crate::error::{Error, Result};
use crate::orbits::PeriodicOrbit;

pub use index::{elliptic_index, elliptic_index_with};

pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloquetTag {
    Ee,
    Hr,
    Hc,
}

impl fmt::Display for FloquetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FloquetTag::Ee => "ee",
            FloquetTag::Hr => "hr",
            FloquetTag::Hc => "hc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetData {
    /// Row-major reduced map.
    pub reduced_map: Vec<Vec<f64>>,
    pub multipliers: Vec<Complex64>,
    pub exponents: Vec<Complex64>,
    pub tags: Vec<FloquetTag>,
    pub nondegenerate: bool,
    pub elliptic_count: usize,
    pub g_ell: i64,
    /// A real multiplier `λ ≤ 0` was found.
    #[serde(default)]
    pub hypothesis_violation: bool,
}

impl FloquetData {
    pub fn map(&self) -> DMatrix<f64> {
        let n = self.reduced_map.len();
        DMatrix::from_fn(n, n, |i, j| self.reduced_map[i][j])
    }

    pub fn d(&self) -> usize {
        self.exponents.len()
    }
}

/// Orthonormal basis `[b_1..b_d, −Ωb_1..−Ωb_d]` of the Euclidean complement
/// of `span{X_H, ∇H}` at `x`; symplectic in the sense `BᵀΩB = Ω_d`.
pub fn section_basis(sys: &HamiltonianSystem, x: &[f64]) -> Result<DMatrix<f64>> {
    let g = sys.gradient(x)?;
    let f = apply_omega(&g);
    let gn = g.norm();
    if !(gn > 1e-12) {
        return Err(Error::Section(format!("∇H vanishes at {x:?}")));
    }
    let mut frame = vec![&g / gn];
    let fperp = &f - &frame[0] * frame[0].dot(&f);
    if fperp.norm() <= 1e-10 * gn {
        return Err(Error::Section("X_H and ∇H are parallel".into()));
    }
    frame.push(fperp.normalize());
    section_basis_from(&frame, sys.n, None)
}

/// Complete `frame` (orthonormal, Ω-invariant span) to an orthonormal
/// Ω-paired basis; `seeds` (if any) are tried before the coordinate axes so
/// the basis can follow a previous one continuously.
fn section_basis_from(frame: &[DVector<f64>], n: usize, seeds: Option<&[DVector<f64>]>) -> Result<DMatrix<f64>> {
    let m = 2 * n;
    let d = n - 1;
    let mut ortho: Vec<DVector<f64>> = frame.to_vec();
    let mut bs: Vec<DVector<f64>> = Vec::with_capacity(d);
    let project = |v: &DVector<f64>, ortho: &[DVector<f64>]| {
        let mut w = v.clone();
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for o in ortho {
                w -= o * o.dot(&w);
            }
        }
        w
    };
    if let Some(seeds) = seeds {
        for s in seeds {
            if bs.len() == d {
                break;
            }
            let w = project(s, &ortho);
            if w.norm() > 0.1 * s.norm() {
                let b = w.normalize();
                ortho.push(b.clone());
                ortho.push(apply_omega(&b));
                bs.push(b);
            }
        }
    }
    while bs.len() < d {
        // the coordinate axis with the largest surviving component
        let best = (0..m)
            .map(|i| project(&DVector::from_fn(m, |r, _| if r == i { 1.0 } else { 0.0 }), &ortho))
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("m > 0");
        if best.norm() < 1e-6 {
            return Err(Error::Section("could not complete a symplectic basis".into()));
        }
        let b = best.normalize();
        ortho.push(b.clone());
        ortho.push(apply_omega(&b));
        bs.push(b);
    }
    let mut basis = DMatrix::zeros(m, 2 * d);
    for (i, b) in bs.iter().enumerate() {
        basis.set_column(i, b);
        basis.set_column(d + i, &(-apply_omega(b)));
    }
    Ok(basis)
}

fn variational_tol(tol: f64) -> f64 {
    (tol * 1e-2).clamp(1e-13, 1e-8)
}

/// Full `2n×2n` tangent map over one period starting at `x`.
pub fn full_monodromy(sys: &HamiltonianSystem, x: &[f64], period: f64, tol: f64) -> Result<DMatrix<f64>> {
    let vs = dynamics::variational_samples(sys, x, &[period], variational_tol(tol))?;
    Ok(vs.into_iter().next().expect("one sample").jacobian)
}

/// Reduced monodromy at an arbitrary point `x` of a periodic orbit.
pub fn monodromy_at(sys: &HamiltonianSystem, x: &[f64], period: f64, tol: f64) -> Result<DMatrix<f64>> {
    if sys.n < 2 {
        return Err(Error::Section("one degree of freedom leaves an empty section".into()));
    }
    let basis = section_basis(sys, x)?;
    let m = full_monodromy(sys, x, period, tol)?;
    Ok(basis.transpose() * m * &basis)
}

pub fn monodromy_matrix(sys: &HamiltonianSystem, orbit: &PeriodicOrbit, tol: f64) -> Result<DMatrix<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if orbit.residual > tol {
        return Err(Error::Precondition(format!(
            "orbit residual {:e} exceeds tolerance {tol:e}",
            orbit.residual
        )));
    }
    monodromy_at(sys, &orbit.x0.to_flat(), orbit.period, tol)
}

fn sort_multipliers(v: &mut [Complex64]) {
    v.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.im.total_cmp(&b.im)));
}

pub fn classify(map: &DMatrix<f64>, tol: f64) -> Result<FloquetData> {
    let n = map.nrows();
    if n == 0 || n != map.ncols() || n % 2 != 0 {
        return Err(Error::Arity(format!("reduced map must be square of even size, got {}×{}", n, map.ncols())));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("reduced map has non-finite entries".into()));
    }
    let d = n / 2;
    let scale = map.amax().max(1.0);
    let defect = symplectic_defect(map) / (scale * scale);
    if defect > tol.sqrt() {
        return Err(Error::Contract(format!("map is not symplectic (relative defect {defect:e})")));
    }
    let mut multipliers: Vec<Complex64> = map.clone().complex_eigenvalues().iter().copied().collect();
    sort_multipliers(&mut multipliers);

    let mut violation = false;
    let mut hyper: Vec<(Complex64, FloquetTag)> = Vec::new();
    let mut ell: Vec<Complex64> = Vec::new();
    let mut unit_real: Vec<Complex64> = Vec::new();
    for &lam in &multipliers {
        let r = lam.norm();
        let is_real = lam.im.abs() <= tol * r.max(1.0);
        if is_real && lam.re <= 0.0 {
            violation = true;
        }
        if (r - 1.0).abs() <= tol {
            if is_real {
                unit_real.push(lam);
            } else if lam.im > 0.0 {
                ell.push(Complex64::new(0.0, lam.arg()));
            }
        } else if r > 1.0 {
            let tag = if is_real { FloquetTag::Hr } else { FloquetTag::Hc };
            let mu = if is_real {
                // keep hr exponents real-or-iπ regardless of a tiny imaginary part
                Complex64::new(r.ln(), if lam.re < 0.0 { std::f64::consts::PI } else { 0.0 })
            } else {
                lam.ln()
            };
            hyper.push((mu, tag));
        }
    }
    unit_real.sort_by(|a, b| a.re.total_cmp(&b.re));
    for pair in unit_real.chunks(2) {
        let im = if pair[0].re < 0.0 { std::f64::consts::PI } else { 0.0 };
        ell.push(Complex64::new(0.0, im));
    }
    hyper.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
    ell.sort_by(|a, b| a.im.total_cmp(&b.im));
    if hyper.len() + ell.len() != d {
        return Err(Error::Numerical(format!(
            "could not pair multipliers {multipliers:?} into {d} exponents (tolerance {tol:e})"
        )));
    }
    let elliptic_count = ell.len();
    let mut exponents: Vec<Complex64> = hyper.iter().map(|h| h.0).collect();
    let mut tags: Vec<FloquetTag> = hyper.iter().map(|h| h.1).collect();
    exponents.extend(ell);
    tags.extend(std::iter::repeat_n(FloquetTag::Ee, elliptic_count));

    let gap = multipliers.iter().map(|l| (l - 1.0).norm()).fold(f64::INFINITY, f64::min);
    Ok(FloquetData {
        reduced_map: (0..n).map(|i| (0..n).map(|j| map[(i, j)]).collect()).collect(),
        multipliers,
        exponents,
        tags,
        nondegenerate: gap > tol.sqrt(),
        elliptic_count,
        g_ell: 0,
        hypothesis_violation: violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonresonanceReport {
    pub pass: bool,
    pub worst_k: Vec<i64>,
    pub worst_distance: f64,
}

/// Distance of `Σ k_j μ_j` to `2πiZ`, minimized over `0 < |k|_∞ ≤ K`.
pub fn check_nonresonance(exponents: &[Complex64], k_max: u32, tol: f64) -> Result<NonresonanceReport> {
    if k_max < 1 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    let d = exponents.len();
    if d == 0 {
        return Ok(NonresonanceReport { pass: true, worst_k: vec![], worst_distance: f64::INFINITY });
    }
    let k = k_max as i64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut kv = vec![-k; d];
    let mut worst = (f64::INFINITY, vec![0; d]);
    loop {
        if kv.iter().any(|&c| c != 0) {
            let s: Complex64 = kv.iter().zip(exponents).map(|(&c, mu)| mu * c as f64).sum();
            let m = (s.im / two_pi).round();
            let dist = Complex64::new(s.re, s.im - two_pi * m).norm();
            if dist < worst.0 {
                worst = (dist, kv.clone());
            }
        }
        let mut i = 0;
        while i < d {
            kv[i] += 1;
            if kv[i] <= k {
                break;
            }
            kv[i] = -k;
            i += 1;
        }
        if i == d {
            break;
        }
    }
    Ok(NonresonanceReport { pass: worst.0 > tol, worst_k: worst.1, worst_distance: worst.0 })
}
