//! Built-in systems addressed by label.

use nalgebra::{DMatrix, DVector};

use super::HamiltonianSystem;
use crate::error::{Error, Result};

pub const BUILTIN_LABELS: &[&str] = &["hyp2", "semihyp3", "diabolo2", "model", "harmonic", "inverted"];

/// `½(p² + q²)`.
pub fn harmonic_oscillator() -> HamiltonianSystem {
    HamiltonianSystem::new("harmonic", 1, |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]))
        .with_gradient(|x: &[f64]| DVector::from_vec(vec![x[0], x[1]]))
        .with_hessian(|_: &[f64]| DMatrix::identity(2, 2))
}

/// `η² − y²`.
pub fn inverted_square() -> HamiltonianSystem {
    HamiltonianSystem::new("inverted", 1, |x: &[f64]| x[1] * x[1] - x[0] * x[0])
        .with_gradient(|x: &[f64]| DVector::from_vec(vec![-2.0 * x[0], 2.0 * x[1]]))
        .with_hessian(|_: &[f64]| DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 2.0]))
}

/// `η²`.
pub fn free_square() -> HamiltonianSystem {
    HamiltonianSystem::new("free", 1, |x: &[f64]| x[1] * x[1])
        .with_gradient(|x: &[f64]| DVector::from_vec(vec![0.0, 2.0 * x[1]]))
        .with_hessian(|_: &[f64]| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]))
}

/// `½(p_x² + p_y²) + ½x² − ½y²` on `q = (x, y)`.
pub fn hyp2() -> HamiltonianSystem {
    HamiltonianSystem::new("hyp2", 2, |x: &[f64]| 0.5 * (x[2] * x[2] + x[3] * x[3] + x[0] * x[0] - x[1] * x[1]))
        .with_gradient(|x: &[f64]| DVector::from_vec(vec![x[0], -x[1], x[2], x[3]]))
        .with_hessian(|_: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0])))
}

/// hyp2 plus a transverse oscillator `½p_z² + ½ω²z²`, `q = (x, y, z)`.
pub fn semihyp3(omega: f64) -> HamiltonianSystem {
    let w2 = omega * omega;
    HamiltonianSystem::new("semihyp3", 3, move |x: &[f64]| {
        0.5 * (x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[0] * x[0] - x[1] * x[1] + w2 * x[2] * x[2])
    })
    .with_gradient(move |x: &[f64]| DVector::from_vec(vec![x[0], -x[1], w2 * x[2], x[3], x[4], x[5]]))
    .with_hessian(move |_: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, w2, 1.0, 1.0, 1.0])))
}

/// `η² + ζ² + ((2z⁴ − z² + 1) cosh y)^{−2} − 1` on `q = (y, z)`, `p = (η, ζ)`.
///
/// The plane `y = η = 0` is invariant; the periodic orbits used here are the
/// oscillations in `z` inside it, hyperbolic in the `y` direction.
pub fn diabolo2() -> HamiltonianSystem {
    fn parts(x: &[f64]) -> (f64, f64, f64, f64, f64, f64) {
        let (y, z) = (x[0], x[1]);
        let r = 2.0 * z.powi(4) - z * z + 1.0;
        let r1 = 8.0 * z.powi(3) - 2.0 * z;
        let r2 = 24.0 * z * z - 2.0;
        let c = y.cosh();
        let th = y.tanh();
        let v = 1.0 / (r * r * c * c);
        (r, r1, r2, th, v, 1.0 / (c * c))
    }
    HamiltonianSystem::new("diabolo2", 2, |x: &[f64]| {
        let (.., v, _) = parts(x);
        x[2] * x[2] + x[3] * x[3] + v - 1.0
    })
    .with_gradient(|x: &[f64]| {
        let (r, r1, _, th, v, _) = parts(x);
        DVector::from_vec(vec![-2.0 * v * th, -2.0 * v * r1 / r, 2.0 * x[2], 2.0 * x[3]])
    })
    .with_hessian(|x: &[f64]| {
        let (r, r1, r2, th, v, sech2) = parts(x);
        let vyy = -2.0 * v * (sech2 - 2.0 * th * th);
        let vzz = v * (6.0 * r1 * r1 / (r * r) - 2.0 * r2 / r);
        let vyz = 4.0 * v * r1 / r * th;
        DMatrix::from_row_slice(
            4,
            4,
            &[vyy, vyz, 0.0, 0.0, vyz, vzz, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 2.0],
        )
    })
}

/// `−τ + μ x ξ` on `q = (t, x)`, `p = (τ, ξ)`, with `t` an angle.
pub fn model(mu: f64) -> HamiltonianSystem {
    HamiltonianSystem::new("model", 2, move |x: &[f64]| -x[2] + mu * x[1] * x[3])
        .with_gradient(move |x: &[f64]| DVector::from_vec(vec![0.0, mu * x[3], -1.0, mu * x[1]]))
        .with_hessian(move |_: &[f64]| {
            let mut h = DMatrix::zeros(4, 4);
            h[(1, 3)] = mu;
            h[(3, 1)] = mu;
            h
        })
        .with_periodic(0)
}

/// Parameters accepted by [`by_label`].
#[derive(Debug, Clone, Copy)]
pub struct BuiltinParams {
    pub omega: f64,
    pub mu: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams { omega: std::f64::consts::SQRT_2, mu: 1.0 }
    }
}

pub fn by_label(label: &str, params: BuiltinParams) -> Result<HamiltonianSystem> {
    Ok(match label {
        "hyp2" => hyp2(),
        "semihyp3" => semihyp3(params.omega),
        "diabolo2" => diabolo2(),
        "model" => model(params.mu),
        "harmonic" => harmonic_oscillator(),
        "inverted" => inverted_square(),
        other => return Err(Error::Config(format!("unknown built-in system '{other}' (known: {BUILTIN_LABELS:?})"))),
    })
}
