//! Periodic orbits by Newton shooting, continuation in energy, and the
//! classical quantities carried by an orbit.

mod quadrature;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, HamiltonianSystem, PhasePoint};
use crate::error::{Error, Result};

pub use quadrature::{action_derivative_check, action_s0, subprincipal_integral, DerivativeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub sys_label: String,
    pub x0: PhasePoint,
    pub period: f64,
    pub energy: f64,
    pub residual: f64,
    /// `N + 1` equispaced samples on `[0, T]`, both ends included.
    pub samples: Vec<(f64, PhasePoint)>,
}

impl PeriodicOrbit {
    pub fn dof(&self) -> usize {
        self.x0.dof()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitFamily {
    pub orbits: Vec<PeriodicOrbit>,
    pub energies: Vec<f64>,
    pub periods: Vec<f64>,
    pub actions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub integrator_tol: f64,
    pub samples: usize,
}

impl ShootingOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        ShootingOptions { tol, max_iter, integrator_tol: (tol * 1e-2).clamp(1e-13, 1e-8), samples: 256 }
    }
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions::new(1e-10, 40)
    }
}

/// Shift angle coordinates of `d = Φ^T(x) − x` by whole turns.
fn unwind(sys: &HamiltonianSystem, d: &mut [f64]) {
    for (i, &per) in sys.periodic().iter().enumerate() {
        if per {
            d[i] -= 2.0 * PI * (d[i] / (2.0 * PI)).round();
        }
    }
}

struct Shot {
    x: Vec<f64>,
    period: f64,
    residual: f64,
}

fn shoot(
    sys: &HamiltonianSystem,
    start: &[f64],
    period0: f64,
    energy: Option<f64>,
    opts: &ShootingOptions,
) -> Result<Shot> {
    let m = 2 * sys.n;
    let anchor = start.to_vec();
    let fa = sys.vector_field(&anchor)?;
    let grad_scale = sys.gradient(&anchor)?.amax().max(1.0);
    if fa.norm() <= 1e-12 * grad_scale {
        return Err(Error::FixedPoint { norm: fa.norm() });
    }
    let mut x = anchor.clone();
    let mut period = period0;
    let rows = m + 1 + usize::from(energy.is_some());
    let mut last = f64::INFINITY;
    for _ in 0..=opts.max_iter {
        let vs = dynamics::variational_samples(sys, &x, &[period], opts.integrator_tol)?;
        let vs = &vs[0];
        let xt = vs.point.to_flat();
        let mut d: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        unwind(sys, &mut d);
        let residual = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let phase: f64 = x.iter().zip(&anchor).zip(fa.iter()).map(|((xi, ai), fi)| (xi - ai) * fi).sum();
        let e_res = match energy {
            Some(e) => sys.energy(&x)? - e,
            None => 0.0,
        };
        last = residual.max(e_res.abs());
        if !last.is_finite() {
            break;
        }
        if residual <= opts.tol && e_res.abs() <= opts.tol && phase.abs() <= opts.tol.max(1e-12) {
            return Ok(Shot { x, period, residual });
        }

        let mut jac = DMatrix::zeros(rows, m + 1);
        let mut rhs = DVector::zeros(rows);
        let ft = sys.vector_field(&xt)?;
        for i in 0..m {
            for j in 0..m {
                jac[(i, j)] = vs.jacobian[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
            jac[(i, m)] = ft[i];
            rhs[i] = -d[i];
        }
        for j in 0..m {
            jac[(m, j)] = fa[j];
        }
        rhs[m] = -phase;
        if energy.is_some() {
            let g = sys.gradient(&x)?;
            for j in 0..m {
                jac[(m + 1, j)] = g[j];
            }
            rhs[m + 1] = -e_res;
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let mut step = svd.solve(&rhs, 1e-10 * smax).map_err(|e| Error::Numerical(e.to_string()))?;
        // keep wild early steps from leaving the basin
        let size = step.rows(0, m).amax();
        let scale = x.iter().fold(1f64, |a, v| a.max(v.abs()));
        if size > 0.5 * scale {
            step *= 0.5 * scale / size;
        }
        for j in 0..m {
            x[j] += step[j];
        }
        period += step[m];
        if !(period > 0.0) {
            return Err(Error::NoConvergence { iterations: opts.max_iter, residual: last });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: last })
}

fn finish(sys: &HamiltonianSystem, shot: Shot, opts: &ShootingOptions) -> Result<PeriodicOrbit> {
    let n_samples = opts.samples.max(64);
    let times: Vec<f64> = (0..=n_samples).map(|i| shot.period * i as f64 / n_samples as f64).collect();
    let pts = dynamics::flow_samples(sys, &shot.x, &times, opts.integrator_tol)?;
    let samples = times.into_iter().zip(pts).map(|(t, y)| (t, PhasePoint::from_flat(&y))).collect();
    Ok(PeriodicOrbit {
        sys_label: sys.label.clone(),
        x0: PhasePoint::from_flat(&shot.x),
        period: shot.period,
        energy: sys.energy(&shot.x)?,
        residual: shot.residual,
        samples,
    })
}

fn check_primitive(sys: &HamiltonianSystem, shot: &Shot, opts: &ShootingOptions) -> Result<()> {
    let scale = shot.x.iter().fold(1f64, |a, v| a.max(v.abs()));
    for q in [2usize, 3] {
        let pts = dynamics::flow_samples(sys, &shot.x, &[shot.period / q as f64], opts.integrator_tol)?;
        let mut d: Vec<f64> = pts[0].iter().zip(&shot.x).map(|(a, b)| a - b).collect();
        unwind(sys, &mut d);
        let dist = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist <= 1e-6 * scale {
            return Err(Error::Period(format!(
                "period {} is a {q}-fold multiple of a shorter period",
                shot.period
            )));
        }
    }
    Ok(())
}

fn check_dof(sys: &HamiltonianSystem, x: &PhasePoint) -> Result<()> {
    x.validate()?;
    if x.dof() != sys.n {
        return Err(Error::Arity(format!("system has {} degrees of freedom, guess has {}", sys.n, x.dof())));
    }
    Ok(())
}

pub fn find_periodic_orbit(
    sys: &HamiltonianSystem,
    guess: &PhasePoint,
    guess_period: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PeriodicOrbit> {
    let e = sys.energy(&guess.to_flat())?;
    find_periodic_orbit_with(sys, guess, guess_period, Some(e), &ShootingOptions::new(tol, max_iter))
}

/// Shooting with explicit options and an optional fixed-energy constraint.
/// Without the constraint the energy direction is left to the minimum-norm
/// step, which is fine for twisting families but drifts to the equilibrium
/// for isochronous ones such as hyp2.
pub fn find_periodic_orbit_with(
    sys: &HamiltonianSystem,
    guess: &PhasePoint,
    guess_period: f64,
    energy: Option<f64>,
    opts: &ShootingOptions,
) -> Result<PeriodicOrbit> {
    check_dof(sys, guess)?;
    if !(guess_period > 0.0) {
        return Err(Error::Domain(format!("guess period must be positive, got {guess_period}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("shooting tolerance must be positive".into()));
    }
    let shot = shoot(sys, &guess.to_flat(), guess_period, energy, opts)?;
    if (shot.period - guess_period).abs() > 0.2 * guess_period {
        return Err(Error::Period(format!(
            "period {} deviates more than 20% from the guess {guess_period}",
            shot.period
        )));
    }
    check_primitive(sys, &shot, opts)?;
    finish(sys, shot, opts)
}

pub fn continue_family(
    sys: &HamiltonianSystem,
    seed: &PeriodicOrbit,
    e_min: f64,
    e_max: f64,
    steps: usize,
) -> Result<OrbitFamily> {
    continue_family_with(sys, seed, e_min, e_max, steps, &ShootingOptions::default())
}

struct Node {
    energy: f64,
    x: Vec<f64>,
    period: f64,
}

fn predict(sys: &HamiltonianSystem, prev: &[Node], e: f64) -> Result<(Vec<f64>, f64)> {
    let b = prev.last().expect("at least one node");
    if prev.len() >= 2 {
        let a = &prev[prev.len() - 2];
        let de = b.energy - a.energy;
        if de.abs() > 0.0 {
            let s = (e - b.energy) / de;
            let x = b.x.iter().zip(&a.x).map(|(xb, xa)| xb + s * (xb - xa)).collect();
            return Ok((x, b.period + s * (b.period - a.period)));
        }
    }
    let g = sys.gradient(&b.x)?;
    let g2 = g.norm_squared();
    let s = if g2 > 0.0 { (e - b.energy) / g2 } else { 0.0 };
    Ok((b.x.iter().zip(g.iter()).map(|(x, gi)| x + s * gi).collect(), b.period))
}

pub fn continue_family_with(
    sys: &HamiltonianSystem,
    seed: &PeriodicOrbit,
    e_min: f64,
    e_max: f64,
    steps: usize,
    opts: &ShootingOptions,
) -> Result<OrbitFamily> {
    if steps < 3 {
        return Err(Error::Arity(format!("continuation needs at least 3 steps, got {steps}")));
    }
    if !(e_min <= e_max) {
        return Err(Error::Domain(format!("empty energy range [{e_min}, {e_max}]")));
    }
    let slack = 1e-9 * (1.0 + e_min.abs().max(e_max.abs()));
    if seed.energy < e_min - slack || seed.energy > e_max + slack {
        return Err(Error::Precondition(format!(
            "seed energy {} outside [{e_min}, {e_max}]",
            seed.energy
        )));
    }
    check_dof(sys, &seed.x0)?;
    let targets: Vec<f64> = (0..steps)
        .map(|i| if steps == 1 { e_min } else { e_min + (e_max - e_min) * i as f64 / (steps - 1) as f64 })
        .collect();
    let i0 = targets
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - seed.energy).abs().total_cmp(&(b.1 - seed.energy).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let solve_at = |x: &[f64], period: f64, e: f64| -> Result<PeriodicOrbit> {
        let shot = shoot(sys, x, period, Some(e), opts)?;
        if (shot.period - period).abs() > 0.2 * period {
            return Err(Error::Period(format!("period jumped from {period} to {}", shot.period)));
        }
        finish(sys, shot, opts)
    };

    let seed_node = Node { energy: seed.energy, x: seed.x0.to_flat(), period: seed.period };
    let (xp, tp) = predict(sys, std::slice::from_ref(&seed_node), targets[i0])?;
    let first = solve_at(&xp, tp, targets[i0])?;
    let mut failure = None;
    let mut found: Vec<PeriodicOrbit> = vec![first.clone()];

    for dir in [1isize, -1] {
        let mut trail = vec![Node { energy: first.energy, x: first.x0.to_flat(), period: first.period }];
        let mut i = i0 as isize + dir;
        while i >= 0 && (i as usize) < targets.len() {
            let e = targets[i as usize];
            let (xp, tp) = predict(sys, &trail, e)?;
            match solve_at(&xp, tp, e) {
                Ok(orbit) => {
                    trail.push(Node { energy: orbit.energy, x: orbit.x0.to_flat(), period: orbit.period });
                    found.push(orbit);
                }
                Err(err) => {
                    log::warn!("continuation stopped at E = {e}: {err}");
                    failure.get_or_insert(format!("continuation failed at E = {e}: {err}"));
                    break;
                }
            }
            i += dir;
        }
    }
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let actions = found.iter().map(action_s0).collect::<Result<Vec<_>>>()?;
    Ok(OrbitFamily {
        energies: found.iter().map(|o| o.energy).collect(),
        periods: found.iter().map(|o| o.period).collect(),
        actions,
        orbits: found,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtins;

    fn pp(q: &[f64], p: &[f64]) -> PhasePoint {
        PhasePoint::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn hyp2_orbit() {
        let sys = builtins::hyp2();
        let o = find_periodic_orbit(&sys, &pp(&[1.1, 0.05], &[0.0, 0.0]), 6.3, 1e-10, 40).unwrap();
        assert!((o.period - 2.0 * PI).abs() < 1e-8, "{}", o.period);
        assert!(o.x0.q[1].abs() < 1e-9 && o.x0.p[1].abs() < 1e-9);
        assert!(o.residual <= 1e-10);
        assert_eq!(o.samples.len(), 257);
    }

    #[test]
    fn semihyp3_orbit() {
        let sys = builtins::semihyp3(std::f64::consts::SQRT_2);
        let o = find_periodic_orbit(&sys, &pp(&[1.1, 0.05, 0.02], &[0.0, 0.0, 0.01]), 6.3, 1e-10, 40).unwrap();
        assert!((o.period - 2.0 * PI).abs() < 1e-8);
        assert!(o.x0.q[2].abs() < 1e-9 && o.x0.p[2].abs() < 1e-9);
    }

    #[test]
    fn model_orbit() {
        let sys = builtins::model(1.0);
        let o = find_periodic_orbit(&sys, &pp(&[0.0, 0.01], &[-0.3, 0.01]), 2.0 * PI, 1e-10, 40).unwrap();
        // the guess sits at energy 0.3 + 1e-4
        assert!((o.x0.p[0] + 0.3001).abs() < 1e-12);
        assert!(o.x0.q[1].abs() < 1e-10 && o.x0.p[1].abs() < 1e-10);
        assert!((o.period - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_guess() {
        let sys = builtins::hyp2();
        let r = find_periodic_orbit(&sys, &pp(&[0.0, 0.0], &[0.0, 0.0]), 6.3, 1e-10, 10);
        assert!(matches!(r, Err(Error::FixedPoint { .. })));
    }

    #[test]
    fn period_multiple_is_rejected() {
        let sys = builtins::hyp2();
        let r = find_periodic_orbit(&sys, &pp(&[1.0, 0.0], &[0.0, 0.0]), 4.0 * PI, 1e-10, 40);
        assert!(matches!(r, Err(Error::Period(_))), "{r:?}");
    }

    #[test]
    fn hyp2_family() {
        let sys = builtins::hyp2();
        let seed = find_periodic_orbit(&sys, &pp(&[1.0, 0.0], &[0.0, 0.0]), 6.3, 1e-10, 40).unwrap();
        let fam = continue_family(&sys, &seed, 0.3, 0.7, 5).unwrap();
        assert!(fam.failure.is_none());
        assert_eq!(fam.orbits.len(), 5);
        for ((e, t), s) in fam.energies.iter().zip(&fam.periods).zip(&fam.actions) {
            assert!((t - 2.0 * PI).abs() < 1e-8);
            assert!((s - 2.0 * PI * e).abs() < 1e-7, "{s} vs {}", 2.0 * PI * e);
        }
        assert!((fam.energies[0] - 0.3).abs() < 1e-10 && (fam.energies[4] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn model_family() {
        let sys = builtins::model(1.0);
        let seed = find_periodic_orbit(&sys, &pp(&[0.0, 0.0], &[0.05, 0.0]), 2.0 * PI, 1e-10, 40).unwrap();
        let fam = continue_family(&sys, &seed, -0.1, 0.1, 5).unwrap();
        for o in &fam.orbits {
            assert!((o.x0.p[0] + o.energy).abs() < 1e-12);
            assert!((o.period - 2.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_continuation() {
        let sys = builtins::hyp2();
        let seed = find_periodic_orbit(&sys, &pp(&[1.0, 0.0], &[0.0, 0.0]), 6.3, 1e-10, 40).unwrap();
        let e = seed.energy;
        let fam = continue_family(&sys, &seed, e, e, 3).unwrap();
        assert_eq!(fam.orbits.len(), 3);
        for o in &fam.orbits[1..] {
            assert!((o.x0.to_vector() - fam.orbits[0].x0.to_vector()).amax() < 1e-12);
        }
    }

    #[test]
    fn too_few_steps() {
        let sys = builtins::hyp2();
        let seed = find_periodic_orbit(&sys, &pp(&[1.0, 0.0], &[0.0, 0.0]), 6.3, 1e-10, 40).unwrap();
        assert!(matches!(continue_family(&sys, &seed, 0.4, 0.6, 2), Err(Error::Arity(_))));
    }
}
