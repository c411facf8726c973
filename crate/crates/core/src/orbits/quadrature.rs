use serde::{Deserialize, Serialize};

use super::{OrbitFamily, PeriodicOrbit};
use crate::dynamics::HamiltonianSystem;
use crate::error::{Error, Result};
use crate::spectral;

/// Split the samples into `N` points of the periodic grid on `[0, T)` and
/// report whether the endpoint `t = T` was present.
fn periodic_grid(orbit: &PeriodicOrbit) -> Result<(&[(f64, crate::dynamics::PhasePoint)], bool)> {
    let s = &orbit.samples;
    if !(orbit.period > 0.0) {
        return Err(Error::Domain(format!("orbit period must be positive, got {}", orbit.period)));
    }
    let has_end = s.last().is_some_and(|(t, _)| (t - orbit.period).abs() <= 1e-9 * orbit.period);
    let grid = if has_end { &s[..s.len() - 1] } else { &s[..] };
    if grid.len() < 64 {
        return Err(Error::Arity(format!("need at least 64 samples per period, got {}", grid.len())));
    }
    Ok((grid, has_end))
}

/// `S₀ = ∮ p·dq` by the trapezoid rule on the closed loop, with `q̇` from
/// spectral differentiation of the periodic part of each coordinate.
///
/// Secular drift (whole turns of an angle coordinate) is read off the
/// endpoint sample when present.
pub fn action_s0(orbit: &PeriodicOrbit) -> Result<f64> {
    let (grid, has_end) = periodic_grid(orbit)?;
    let n = grid.len();
    let dof = orbit.dof();
    let period = orbit.period;
    let mut total = 0.0;
    for i in 0..dof {
        let q: Vec<f64> = grid.iter().map(|(_, x)| x.q[i]).collect();
        let drift = if has_end { orbit.samples[n].1.q[i] - q[0] } else { 0.0 };
        let periodic: Vec<f64> = q.iter().enumerate().map(|(j, v)| v - drift * j as f64 / n as f64).collect();
        let dq = spectral::derivative_real(&periodic, period);
        total += grid.iter().zip(&dq).map(|((_, x), d)| x.p[i] * (d + drift / period)).sum::<f64>();
    }
    Ok(total * period / n as f64)
}

/// `−∫₀^T H₁` along the orbit.
pub fn subprincipal_integral(orbit: &PeriodicOrbit, sys: &HamiltonianSystem) -> Result<f64> {
    if !sys.has_h1() {
        return Err(Error::Config(format!("system '{}' has no subprincipal symbol", sys.label)));
    }
    let (grid, _) = periodic_grid(orbit)?;
    let mut acc = 0.0;
    for (_, x) in grid {
        acc += sys.h1(&x.to_flat())?;
    }
    Ok(-acc * orbit.period / grid.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub max_rel_err: f64,
}

/// First-derivative weights at `x0` of the Lagrange interpolant through `xs`.
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|j| {
            (0..xs.len())
                .filter(|&m| m != j)
                .map(|m| {
                    let prod: f64 = (0..xs.len())
                        .filter(|&l| l != j && l != m)
                        .map(|l| (x0 - xs[l]) / (xs[j] - xs[l]))
                        .product();
                    prod / (xs[j] - xs[m])
                })
                .sum()
        })
        .collect()
}

/// Compare the slope of `S₀(E)` (five nearest nodes, fourth order) with `T(E)` at every node.
pub fn action_derivative_check(family: &OrbitFamily) -> Result<DerivativeReport> {
    let e = &family.energies;
    let s = &family.actions;
    let t = &family.periods;
    if e.len() < 3 || s.len() != e.len() || t.len() != e.len() {
        return Err(Error::Arity(format!("need at least 3 aligned orbits, got {}", e.len())));
    }
    if e.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("energies must be strictly increasing".into()));
    }
    let width = e.len().min(5);
    let mut max_rel_err: f64 = 0.0;
    for i in 0..e.len() {
        let lo = i.saturating_sub(width / 2).min(e.len() - width);
        let w = derivative_weights(e[i], &e[lo..lo + width]);
        let slope: f64 = w.iter().zip(&s[lo..lo + width]).map(|(a, b)| a * b).sum();
        max_rel_err = max_rel_err.max((slope - t[i]).abs() / t[i].abs());
    }
    Ok(DerivativeReport { max_rel_err })
}
