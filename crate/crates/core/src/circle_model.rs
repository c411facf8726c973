//! The operator `hD_t` on the circle: chart solutions, Gram determinant and
//! the model Grushin problem, on a uniform periodic grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

const TWO_PI: f64 = 2.0 * PI;
const MIN_TRANSITION_CELLS: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGrid {
    pub n_points: usize,
    pub h: f64,
}

impl CircleGrid {
    pub fn new(n_points: usize, h: f64) -> Result<Self> {
        if n_points < 64 || !n_points.is_power_of_two() {
            return Err(Error::Domain(format!("n_points must be a power of two ≥ 64, got {n_points}")));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::Domain(format!("need 0 < h ≤ 1, got {h}")));
        }
        Ok(CircleGrid { n_points, h })
    }

    pub fn dt(&self) -> f64 {
        TWO_PI / self.n_points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| j as f64 * self.dt()).collect()
    }
}

/// `e^{−1/x}`-based step rising from 0 at `x ≤ 0` to 1 at `x ≥ 1`, with derivative.
fn smooth_step(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |s: f64| (-1.0 / s).exp();
    let (a, b) = (f(x), f(1.0 - x));
    let (da, db) = (a / (x * x), b / ((1.0 - x) * (1.0 - x)));
    let den = a + b;
    (a / den, (da * b + a * db) / (den * den))
}

/// `χ = χ^a`, equal to 1 near `t = 0` and to 0 near `t = π`.
///
/// `drop_regions[0] ⊂ (0, π)` is where χ falls to 0, `drop_regions[1] ⊂ (π, 2π)`
/// is where it climbs back to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    pub drop_regions: [(f64, f64); 2],
}

impl Cutoff {
    pub fn new(grid: &CircleGrid, fall: (f64, f64), rise: (f64, f64)) -> Result<Self> {
        let cells = |(a, b): (f64, f64)| (b - a) / grid.dt();
        if !(0.0 < fall.0 && fall.0 < fall.1 && fall.1 < PI) {
            return Err(Error::Cutoff(format!("falling arc {fall:?} must lie inside (0, π)")));
        }
        if !(PI < rise.0 && rise.0 < rise.1 && rise.1 < TWO_PI) {
            return Err(Error::Cutoff(format!("rising arc {rise:?} must lie inside (π, 2π)")));
        }
        for arc in [fall, rise] {
            if cells(arc) < MIN_TRANSITION_CELLS {
                return Err(Error::Cutoff(format!(
                    "transition {arc:?} spans {:.1} cells, need at least {MIN_TRANSITION_CELLS}",
                    cells(arc)
                )));
            }
        }
        let mut values = Vec::with_capacity(grid.n_points);
        let mut derivative = Vec::with_capacity(grid.n_points);
        for t in grid.points() {
            let (v, dv) = if t < PI {
                let w = fall.1 - fall.0;
                let (s, ds) = smooth_step((t - fall.0) / w);
                (1.0 - s, -ds / w)
            } else {
                let w = rise.1 - rise.0;
                let (s, ds) = smooth_step((t - rise.0) / w);
                (s, ds / w)
            };
            values.push(v);
            derivative.push(dv);
        }
        Ok(Cutoff { values, derivative, drop_regions: [fall, rise] })
    }

    /// Transitions of half-width `half` centred at `π/2` and `3π/2`.
    pub fn centered(grid: &CircleGrid, half: f64) -> Result<Self> {
        Cutoff::new(grid, (PI / 2.0 - half, PI / 2.0 + half), (1.5 * PI - half, 1.5 * PI + half))
    }

    pub fn standard(grid: &CircleGrid) -> Result<Self> {
        Cutoff::centered(grid, 1.2)
    }
}

fn check_grid(grid: &CircleGrid, chi: &Cutoff) -> Result<()> {
    if chi.values.len() != grid.n_points {
        return Err(Error::Arity(format!("cutoff has {} samples, grid {}", chi.values.len(), grid.n_points)));
    }
    Ok(())
}

/// Chart parameter of a grid point: `(−π, π]` for the chart at 0, `[0, 2π)` for the chart at π.
fn chart_a(t: f64) -> f64 {
    if t <= PI {
        t
    } else {
        t - TWO_PI
    }
}

fn wave(z: Complex64, h: f64, t: f64) -> Complex64 {
    (Complex64::i() * z * t / h).exp()
}

/// `(u^a, u^{a'})`: `e^{izt/h}` on the charts `(−π, π)` and `(0, 2π)`.
pub fn chart_solutions(grid: &CircleGrid, z: Complex64) -> (Vec<Complex64>, Vec<Complex64>) {
    let pts = grid.points();
    let ua = pts.iter().map(|&t| wave(z, grid.h, chart_a(t))).collect();
    let uap = pts.iter().map(|&t| wave(z, grid.h, t)).collect();
    (ua, uap)
}

/// The 2×2 Gram matrix of the chart solutions against the split commutator data.
///
/// `F_± = χ_b′·u^b` restricted to `(0, π)` and `(π, 2π)`; the pairing is
/// `(u|F) = ∫ u(z) · conj(F(z̄)) dt`.
pub fn gram_matrix(grid: &CircleGrid, z: Complex64, chi: &Cutoff) -> Result<[[Complex64; 2]; 2]> {
    check_grid(grid, chi)?;
    let zc = z.conj();
    let (ua, uap) = chart_solutions(grid, z);
    let (ua_c, uap_c) = chart_solutions(grid, zc);
    let pts = grid.points();
    let dt = grid.dt();
    let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (j, &t) in pts.iter().enumerate() {
        let sign = if t < PI { 1.0 } else { -1.0 };
        let d = chi.derivative[j];
        // conj(F(z̄)) for b = a (χ′) and b = a' (−χ′)
        let fa = (ua_c[j] * d).conj() * sign;
        let fap = (uap_c[j] * (-d)).conj() * sign;
        g[0][0] += ua[j] * fa;
        g[0][1] += uap[j] * fa;
        g[1][0] += ua[j] * fap;
        g[1][1] += uap[j] * fap;
    }
    for row in g.iter_mut() {
        for v in row.iter_mut() {
            *v *= dt;
        }
    }
    Ok(g)
}

/// Determinant of [`gram_matrix`]; equals `−4 sin²(πz/h)` up to quadrature error.
pub fn gram_determinant(grid: &CircleGrid, z: Complex64, chi: &Cutoff) -> Result<Complex64> {
    let g = gram_matrix(grid, z, chi)?;
    Ok(g[0][0] * g[1][1] - g[0][1] * g[1][0])
}

/// `E₋₊(z) = 1 − e^{2iπz/h}`.
pub fn effective_hamiltonian(z: Complex64, h: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) - (Complex64::i() * z * TWO_PI / h).exp()
}

fn distance_to_spectrum(z: Complex64, h: f64) -> f64 {
    (z - (z.re / h).round() * h).norm()
}

/// `E₊(z)·1 = χu^a + (1 − χ)u^{a'}`.
pub fn e_plus(grid: &CircleGrid, z: Complex64, chi: &Cutoff) -> Result<Vec<Complex64>> {
    check_grid(grid, chi)?;
    let (ua, uap) = chart_solutions(grid, z);
    Ok((0..grid.n_points).map(|j| ua[j] * chi.values[j] + uap[j] * (1.0 - chi.values[j])).collect())
}

/// `R₋(z)·1 = −χ′₋ u^a`, supported on `(π, 2π)`.
pub fn r_minus(grid: &CircleGrid, z: Complex64, chi: &Cutoff) -> Result<Vec<Complex64>> {
    check_grid(grid, chi)?;
    let (ua, _) = chart_solutions(grid, z);
    let pts = grid.points();
    Ok((0..grid.n_points).map(|j| if pts[j] > PI { -ua[j] * chi.derivative[j] } else { Complex64::new(0.0, 0.0) }).collect())
}

/// Sup norm of `(i/h)(hD_t − z)E₊(z) + R₋(z)E₋₊(z)`, with the derivative
/// taken spectrally.
pub fn verify_grushin_identity(grid: &CircleGrid, z: Complex64, chi: &Cutoff) -> Result<f64> {
    if distance_to_spectrum(z, grid.h) < grid.h / grid.n_points as f64 {
        return Err(Error::Precondition(format!("z = {z} is within h/n of the spectrum")));
    }
    let ep = e_plus(grid, z, chi)?;
    let rm = r_minus(grid, z, chi)?;
    let emp = effective_hamiltonian(z, grid.h);
    let dep = spectral::derivative(&ep, TWO_PI);
    let iz_h = Complex64::i() * z / grid.h;
    Ok((0..grid.n_points).map(|j| (dep[j] - iz_h * ep[j] + rm[j] * emp).norm()).fold(0.0, f64::max))
}

/// `(hD_t − z)^{-1} v` by division in Fourier space.
pub fn resolvent_direct(grid: &CircleGrid, z: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = grid.n_points;
    if rhs.len() != n {
        return Err(Error::Arity(format!("rhs has {} samples, grid {n}", rhs.len())));
    }
    let mut buf = rhs.to_vec();
    spectral::fft(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let den = grid.h * spectral::frequency(j, n) - z;
        if den.norm() == 0.0 {
            return Err(Error::Pole(z));
        }
        *c /= den;
    }
    spectral::ifft(&mut buf);
    Ok(buf)
}

/// `(hD_t − z)^{-1} v = (i/h)[E(z)v − E₊(z)E₋₊(z)^{-1}E₋(z)v]`.
///
/// `E(z)v = χU^a + (1 − χ)U^{a'}` glues the chart solutions
/// `U = e^{izt/h}(Ĵ + J(t))` of `(d/dt − iz/h)U = v`, where
/// `J(t) = ∫₀ᵗ e^{−izs/h} v(s) ds` and `Ĵ = ∫ χ′₊ J`; then
/// `E₋(z)v = (1 − e^{2iπz/h})Ĵ − e^{2iπz/h}J(2π)`.
pub fn resolvent_grushin(grid: &CircleGrid, z: Complex64, chi: &Cutoff, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    check_grid(grid, chi)?;
    let n = grid.n_points;
    if rhs.len() != n {
        return Err(Error::Arity(format!("rhs has {} samples, grid {n}", rhs.len())));
    }
    let h = grid.h;
    let emp = effective_hamiltonian(z, h);
    if emp.norm() < 1e-14 {
        return Err(Error::Pole(z));
    }
    // periodic g with g′ − (iz/h)g = v, so J(s) = e^{−izs/h}g(s) − g(0)
    let mut gh = rhs.to_vec();
    spectral::fft(&mut gh);
    for (j, c) in gh.iter_mut().enumerate() {
        *c /= Complex64::i() * (spectral::frequency(j, n) - z / h);
    }
    spectral::ifft(&mut gh);
    let g = gh;
    let pts = grid.points();
    let j_at = |s: f64, gs: Complex64| wave(-z, h, s) * gs - g[0];

    let dt = grid.dt();
    let j_hat: Complex64 = (0..n)
        .filter(|&j| pts[j] < PI)
        .map(|j| j_at(pts[j], g[j]) * chi.derivative[j] * dt)
        .sum();
    let q = wave(z, h, TWO_PI);
    let j_2pi = wave(-z, h, TWO_PI) * g[0] - g[0];
    let e_minus = (Complex64::new(1.0, 0.0) - q) * j_hat - q * j_2pi;

    let ep = e_plus(grid, z, chi)?;
    let ratio = e_minus / emp;
    Ok((0..n)
        .map(|j| {
            let (ta, tap) = (chart_a(pts[j]), pts[j]);
            let ua = wave(z, h, ta) * (j_hat + j_at(ta, g[j]));
            let uap = wave(z, h, tap) * (j_hat + j_at(tap, g[j]));
            let ev = ua * chi.values[j] + uap * (1.0 - chi.values[j]);
            Complex64::i() / h * (ev - ep[j] * ratio)
        })
        .collect())
}

/// Sup norm of the difference between [`resolvent_direct`] and [`resolvent_grushin`].
pub fn resolvent_reconstruction(grid: &CircleGrid, z: Complex64, chi: &Cutoff, rhs: &[Complex64]) -> Result<f64> {
    let a = resolvent_direct(grid, z, rhs)?;
    let b = resolvent_grushin(grid, z, chi, rhs)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
}
