//! Adaptive Dormand–Prince 5(4) integrator with local extrapolation.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// difference between the 5th order weights and the embedded 4th order ones
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - (-92097.0 / 339200.0);
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side `f(y, dy)` of an autonomous system.
pub trait Rhs {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(y, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub tol: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn new(tol: f64) -> Self {
        StepControl { tol, max_steps: 5_000_000 }
    }
}

/// Integrator state carried across consecutive calls so that dense sampling
/// does not restart the step-size controller.
pub struct Dopri5 {
    ctrl: StepControl,
    n: usize,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    ynew: Vec<f64>,
    fsal_valid: bool,
    h_next: f64,
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
}

impl Dopri5 {
    pub fn new(y0: &[f64], ctrl: StepControl) -> Result<Self> {
        if !(ctrl.tol > 0.0 && ctrl.tol.is_finite()) {
            return Err(Error::Domain(format!("integrator tolerance must be positive, got {}", ctrl.tol)));
        }
        let n = y0.len();
        Ok(Dopri5 {
            ctrl,
            n,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            ynew: vec![0.0; n],
            fsal_valid: false,
            h_next: 0.0,
            t: 0.0,
            y: y0.to_vec(),
            steps: 0,
        })
    }

    fn error_norm(&self, h: f64) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.n {
            let e = E1 * self.k[0][i]
                + E3 * self.k[2][i]
                + E4 * self.k[3][i]
                + E5 * self.k[4][i]
                + E6 * self.k[5][i]
                + E7 * self.k[6][i];
            let scale = self.ctrl.tol * 1f64.max(self.y[i].abs()).max(self.ynew[i].abs());
            err = err.max((e.abs() * h.abs()) / scale);
        }
        err
    }

    /// Advance the state to `t_end` (which may lie before the current time).
    pub fn advance<F: Rhs>(&mut self, f: &mut F, t_end: f64) -> Result<()> {
        let span = t_end - self.t;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        if !self.fsal_valid {
            f.eval(&self.y, &mut self.k[0])?;
            self.fsal_valid = true;
        }
        if self.h_next == 0.0 || self.h_next.signum() != dir {
            // crude initial guess; the controller corrects it within a few steps
            let ynorm = self.y.iter().fold(1f64, |m, v| m.max(v.abs()));
            let fnorm = self.k[0].iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            let h0 = (0.01 * ynorm / fnorm).min(span.abs()).min(0.1);
            self.h_next = dir * h0.max(1e-6 * span.abs().min(1.0));
        }

        loop {
            let remaining = t_end - self.t;
            if remaining == 0.0 || remaining.signum() != dir {
                self.t = t_end;
                return Ok(());
            }
            let mut h = self.h_next;
            let mut clipped = false;
            if h.abs() >= remaining.abs() {
                h = remaining;
                clipped = true;
            }
            let hmin = 1e-14 * self.t.abs().max(1.0);
            if h.abs() < hmin {
                return Err(Error::Integration {
                    t_last: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            if self.steps >= self.ctrl.max_steps {
                return Err(Error::Integration {
                    t_last: self.t,
                    reason: "maximum number of steps exceeded".into(),
                });
            }
            self.steps += 1;

            let saved_h = self.h_next;
            self.stages(f, h)?;
            let err = self.error_norm(h);
            if !err.is_finite() {
                self.h_next = h * 0.2;
                continue;
            }
            if err <= 1.0 {
                self.t = if clipped { t_end } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                let (first, rest) = self.k.split_at_mut(6);
                first[0].copy_from_slice(&rest[0]);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let proposed = h * fac;
                // a clipped final step should not shrink the step carried forward
                self.h_next = if clipped && proposed.abs() < saved_h.abs() { saved_h } else { proposed };
                if clipped {
                    return Ok(());
                }
            } else {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                self.h_next = h * fac;
            }
        }
    }

    fn stages<F: Rhs>(&mut self, f: &mut F, h: f64) -> Result<()> {
        let n = self.n;
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f.eval(tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f.eval(tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f.eval(tmp, k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f.eval(tmp, k5)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f.eval(tmp, k6)?;
        let ynew = &mut self.ynew;
        for i in 0..n {
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f.eval(ynew, k7)?;
        Ok(())
    }
}

/// Integrate `y' = f(y)` from `y0` over a time span `t` (negative allowed).
pub fn integrate<F: Rhs>(f: &mut F, y0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    let mut s = Dopri5::new(y0, StepControl::new(tol))?;
    s.advance(f, t)?;
    Ok(s.y)
}

/// Integrate and record the state at each of the (monotone) `times`.
pub fn integrate_samples<F: Rhs>(f: &mut F, y0: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut s = Dopri5::new(y0, StepControl::new(tol))?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        s.advance(f, t)?;
        out.push(s.y.clone());
    }
    Ok(out)
}
