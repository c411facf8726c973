//! Hamiltonian systems, their flows and tangent flows.
//!
//! Phase-space vectors are stored flat as `(q_1..q_n, p_1..p_n)`. Evaluators
//! receive that flat slice.

pub mod builtins;
mod escape;
pub mod integrate;
pub mod polynomial;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use integrate::{Dopri5, StepControl};

pub use escape::{check_escape_function, BoundingBox, EscapeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let pt = PhasePoint { q, p };
        pt.validate()?;
        Ok(pt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.is_empty() || self.q.len() != self.p.len() {
            return Err(Error::Domain(format!(
                "phase point needs q and p of equal nonzero length (got {} and {})",
                self.q.len(),
                self.p.len()
            )));
        }
        if self.q.iter().chain(&self.p).any(|v| !v.is_finite()) {
            return Err(Error::Domain("phase point has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let n = x.len() / 2;
        PhasePoint { q: x[..n].to_vec(), p: x[n..].to_vec() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_flat())
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A Hamiltonian `H₀ + h H₁` on `R^{2n}`, with optional 2π-periodic
/// position coordinates (used for the `t` circle of the model system).
#[derive(Clone)]
pub struct HamiltonianSystem {
    pub n: usize,
    pub label: String,
    h0: ScalarFn,
    grad: GradFn,
    hess: HessFn,
    h1: Option<ScalarFn>,
    periodic: Vec<bool>,
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("n", &self.n)
            .field("label", &self.label)
            .field("has_h1", &self.h1.is_some())
            .field("periodic", &self.periodic)
            .finish()
    }
}

fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

fn fd_gradient(h0: &ScalarFn, x: &[f64]) -> DVector<f64> {
    let mut xs = x.to_vec();
    DVector::from_fn(x.len(), |i, _| {
        let s = fd_step(x[i]);
        xs[i] = x[i] + s;
        let fp = h0(&xs);
        xs[i] = x[i] - s;
        let fm = h0(&xs);
        xs[i] = x[i];
        (fp - fm) / (2.0 * s)
    })
}

fn fd_hessian(grad: &GradFn, x: &[f64]) -> DMatrix<f64> {
    let m = x.len();
    let mut xs = x.to_vec();
    let mut hess = DMatrix::zeros(m, m);
    for j in 0..m {
        let s = fd_step(x[j]);
        xs[j] = x[j] + s;
        let gp = grad(&xs);
        xs[j] = x[j] - s;
        let gm = grad(&xs);
        xs[j] = x[j];
        hess.set_column(j, &((gp - gm) / (2.0 * s)));
    }
    (&hess + hess.transpose()) * 0.5
}

impl HamiltonianSystem {
    /// A system given by `h0` alone; gradient and Hessian fall back to
    /// central differences.
    pub fn new(label: impl Into<String>, n: usize, h0: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let h0: ScalarFn = Arc::new(h0);
        let h0g = h0.clone();
        let grad: GradFn = Arc::new(move |x: &[f64]| fd_gradient(&h0g, x));
        let gh = grad.clone();
        let hess: HessFn = Arc::new(move |x: &[f64]| fd_hessian(&gh, x));
        HamiltonianSystem { n, label: label.into(), h0, grad, hess, h1: None, periodic: vec![false; n] }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.grad = Arc::new(grad);
        let gh = self.grad.clone();
        self.hess = Arc::new(move |x: &[f64]| fd_hessian(&gh, x));
        self
    }

    pub fn with_hessian(mut self, hess: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hess = Arc::new(hess);
        self
    }

    pub fn with_h1(mut self, h1: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.h1 = Some(Arc::new(h1));
        self
    }

    /// Mark position coordinate `i` as an angle defined modulo 2π.
    pub fn with_periodic(mut self, i: usize) -> Self {
        self.periodic[i] = true;
        self
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn has_h1(&self) -> bool {
        self.h1.is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != 2 * self.n {
            return Err(Error::Arity(format!("expected phase vector of length {}, got {}", 2 * self.n, x.len())));
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let e = (self.h0)(x);
        if !e.is_finite() {
            return Err(Error::Domain(format!("{}: H0 not finite at {x:?}", self.label)));
        }
        Ok(e)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let g = (self.grad)(x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{}: gradient not finite at {x:?}", self.label)));
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let h = (self.hess)(x);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("{}: Hessian not finite at {x:?}", self.label)));
        }
        Ok(h)
    }

    pub fn h1(&self, x: &[f64]) -> Result<f64> {
        let h1 = self
            .h1
            .as_ref()
            .ok_or_else(|| Error::Config(format!("system '{}' has no subprincipal symbol", self.label)))?;
        let v = h1(x);
        if !v.is_finite() {
            return Err(Error::Domain(format!("{}: H1 not finite at {x:?}", self.label)));
        }
        Ok(v)
    }

    /// `X_H = (∂H/∂p, −∂H/∂q)`.
    pub fn vector_field(&self, x: &[f64]) -> Result<DVector<f64>> {
        let g = self.gradient(x)?;
        Ok(apply_omega(&g))
    }
}

/// Multiply by the standard symplectic matrix `Ω = [[0, I], [−I, 0]]`.
pub fn apply_omega(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { v[n + i] } else { -v[i - n] })
}

pub fn omega(n: usize) -> DMatrix<f64> {
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        o[(i, n + i)] = 1.0;
        o[(n + i, i)] = -1.0;
    }
    o
}

/// `‖MᵀΩM − Ω‖_∞` (max entry).
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let o = omega(m.nrows() / 2);
    (m.transpose() * &o * m - o).amax()
}

pub fn hamiltonian_vector_field(sys: &HamiltonianSystem, x: &PhasePoint) -> Result<DVector<f64>> {
    x.validate()?;
    sys.vector_field(&x.to_flat())
}

fn integrator_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

pub(crate) fn flow_rhs(sys: &HamiltonianSystem) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> + '_ {
    let n = sys.n;
    move |y: &[f64], dy: &mut [f64]| {
        let g = sys.gradient(y)?;
        for i in 0..n {
            dy[i] = g[n + i];
            dy[n + i] = -g[i];
        }
        Ok(())
    }
}

/// Right-hand side of the flow together with `J̇ = Ω Hess(H₀) J`; the
/// jacobian is stored column-major after the `2n` state entries.
pub(crate) fn variational_rhs(sys: &HamiltonianSystem) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> + '_ {
    let n = sys.n;
    let m = 2 * n;
    move |y: &[f64], dy: &mut [f64]| {
        let x = &y[..m];
        let g = sys.gradient(x)?;
        for i in 0..n {
            dy[i] = g[n + i];
            dy[n + i] = -g[i];
        }
        let hs = sys.hessian(x)?;
        for c in 0..m {
            let col = &y[m + c * m..m + (c + 1) * m];
            let out = &mut dy[m + c * m..m + (c + 1) * m];
            for r in 0..m {
                // row r of Ω·Hess: rows of Hess shifted with sign
                let (hr, sign) = if r < n { (n + r, 1.0) } else { (r - n, -1.0) };
                let mut acc = 0.0;
                for k in 0..m {
                    acc += hs[(hr, k)] * col[k];
                }
                out[r] = sign * acc;
            }
        }
        Ok(())
    }
}

pub fn flow(sys: &HamiltonianSystem, x0: &PhasePoint, t: f64, tol: f64) -> Result<PhasePoint> {
    integrator_tol(tol)?;
    x0.validate()?;
    if x0.dof() != sys.n {
        return Err(Error::Arity(format!("system has {} degrees of freedom, point has {}", sys.n, x0.dof())));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let mut rhs = flow_rhs(sys);
    let y = integrate::integrate(&mut rhs, &x0.to_flat(), t, tol)?;
    Ok(PhasePoint::from_flat(&y))
}

/// Sample the flow at the given monotone times (starting from time 0).
pub fn flow_samples(sys: &HamiltonianSystem, x0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    integrator_tol(tol)?;
    let mut rhs = flow_rhs(sys);
    integrate::integrate_samples(&mut rhs, x0, times, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub point: PhasePoint,
    pub jacobian: DMatrix<f64>,
}

pub fn flow_with_variations(sys: &HamiltonianSystem, x0: &PhasePoint, t: f64, tol: f64) -> Result<VariationalState> {
    integrator_tol(tol)?;
    x0.validate()?;
    if x0.dof() != sys.n {
        return Err(Error::Arity(format!("system has {} degrees of freedom, point has {}", sys.n, x0.dof())));
    }
    let m = 2 * sys.n;
    if t == 0.0 {
        return Ok(VariationalState { point: x0.clone(), jacobian: DMatrix::identity(m, m) });
    }
    let mut samples = variational_samples(sys, &x0.to_flat(), &[t], tol)?;
    Ok(samples.pop().expect("one sample requested"))
}

/// Tangent flow sampled at monotone times.
pub fn variational_samples(sys: &HamiltonianSystem, x0: &[f64], times: &[f64], tol: f64) -> Result<Vec<VariationalState>> {
    integrator_tol(tol)?;
    let m = 2 * sys.n;
    let mut y0 = x0.to_vec();
    let id = DMatrix::<f64>::identity(m, m);
    y0.extend_from_slice(id.as_slice());
    let mut rhs = variational_rhs(sys);
    let mut stepper = Dopri5::new(&y0, StepControl::new(tol))?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        stepper.advance(&mut rhs, t)?;
        let y = &stepper.y;
        out.push(VariationalState {
            point: PhasePoint::from_flat(&y[..m]),
            jacobian: DMatrix::from_column_slice(m, m, &y[m..]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::builtins;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vector_field_examples() {
        let ho = builtins::harmonic_oscillator();
        let v = hamiltonian_vector_field(&ho, &PhasePoint::new(vec![1.0], vec![0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], -1.0);

        let inv = builtins::inverted_square();
        let v = hamiltonian_vector_field(&inv, &PhasePoint::new(vec![1.0], vec![2.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(v[0], 4.0);
        assert_abs_diff_eq!(v[1], 2.0);

        let d = builtins::diabolo2();
        let v = hamiltonian_vector_field(&d, &PhasePoint::new(vec![0.0; 2], vec![0.0; 2]).unwrap()).unwrap();
        assert!(v.amax() < 1e-15);
    }

    #[test]
    fn non_finite_evaluator_is_domain_error() {
        let sys = HamiltonianSystem::new("bad", 1, |x: &[f64]| 1.0 / x[0]);
        let r = hamiltonian_vector_field(&sys, &PhasePoint { q: vec![0.0], p: vec![0.0] });
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn flow_examples() {
        let ho = builtins::harmonic_oscillator();
        let x0 = PhasePoint::new(vec![1.0], vec![0.0]).unwrap();
        let x = flow(&ho, &x0, 2.0 * std::f64::consts::PI, 1e-11).unwrap();
        assert_abs_diff_eq!(x.q[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(x.p[0], 0.0, epsilon = 1e-8);

        let inv = builtins::inverted_square();
        let x0 = PhasePoint::new(vec![0.0], vec![1.0]).unwrap();
        let x = flow(&inv, &x0, 1.0, 1e-12).unwrap();
        assert_abs_diff_eq!(x.q[0], 2f64.sinh(), epsilon = 1e-9);
        assert_abs_diff_eq!(x.p[0], 2f64.cosh(), epsilon = 1e-9);

        assert_eq!(flow(&inv, &x0, 0.0, 1e-10).unwrap(), x0);
    }

    #[test]
    fn variational_examples() {
        let ho = builtins::harmonic_oscillator();
        let x0 = PhasePoint::new(vec![0.3], vec![-0.2]).unwrap();
        let vs = flow_with_variations(&ho, &x0, 2.0 * std::f64::consts::PI, 1e-11).unwrap();
        assert!((vs.jacobian - DMatrix::identity(2, 2)).amax() < 1e-7);

        let inv = builtins::inverted_square();
        let vs = flow_with_variations(&inv, &x0, 1.0, 1e-12).unwrap();
        let (c, s) = (2f64.cosh(), 2f64.sinh());
        let expect = DMatrix::from_row_slice(2, 2, &[c, s, s, c]);
        assert!((vs.jacobian - expect).amax() < 1e-9);
    }

    #[test]
    fn decoupled_jacobian_is_block_diagonal() {
        let sys = builtins::hyp2();
        let x0 = PhasePoint::new(vec![0.5, 0.1], vec![0.2, -0.1]).unwrap();
        let t = 1.3;
        let j = flow_with_variations(&sys, &x0, t, 1e-12).unwrap().jacobian;
        // x block rotates, y block is hyperbolic
        let (c, s) = (t.cos(), t.sin());
        let (ch, sh) = (t.cosh(), t.sinh());
        let expect = DMatrix::from_row_slice(4, 4, &[c, 0.0, s, 0.0, 0.0, ch, 0.0, sh, -s, 0.0, c, 0.0, 0.0, sh, 0.0, ch]);
        assert!((j - expect).amax() < 1e-9);
    }
}
