use num_complex::Complex64;

use crate::error::{Error, Result};

/// Natural cubic spline with complex values, evaluated at complex arguments
/// through its polynomial pieces (the piece is chosen by `Re z`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    knots: Vec<f64>,
    // per piece: a + b s + c s² + d s³, s = z − knots[i]
    coef: Vec<[Complex64; 4]>,
}

impl Spline {
    pub fn new(knots: &[f64], values: &[Complex64]) -> Result<Self> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(Error::Arity(format!("spline needs at least two aligned nodes, got {n} knots and {} values", values.len())));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let zero = Complex64::new(0.0, 0.0);
        // second derivatives, natural ends; Thomas algorithm on the interior
        let mut m2 = vec![zero; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![zero; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                let prev = rhs[i - 1];
                rhs[i] -= prev * w;
            }
            m2[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m2[i + 1] = (rhs[i] - m2[i + 2] * h[i + 1]) / diag[i];
            }
        }
        let coef = (0..n - 1)
            .map(|i| {
                let a = values[i];
                let b = (values[i + 1] - values[i]) / h[i] - (m2[i] * 2.0 + m2[i + 1]) * (h[i] / 6.0);
                let c = m2[i] / 2.0;
                let d = (m2[i + 1] - m2[i]) / (6.0 * h[i]);
                [a, b, c, d]
            })
            .collect();
        Ok(Spline { knots: knots.to_vec(), coef })
    }

    pub fn from_real(knots: &[f64], values: &[f64]) -> Result<Self> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Spline::new(knots, &v)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().expect("nonempty"))
    }

    fn piece(&self, x: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.coef.len() - 1)
    }

    /// Value and derivative at `z`.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let i = self.piece(z.re);
        let s = z - self.knots[i];
        let [a, b, c, d] = self.coef[i];
        (a + s * (b + s * (c + s * d)), b + s * (c * 2.0 + s * d * 3.0))
    }

    pub fn value(&self, z: Complex64) -> Complex64 {
        self.eval(z).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data() {
        let x = [0.0, 0.3, 0.5, 1.0];
        let s = Spline::from_real(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap();
        let z = Complex64::new(0.4, -0.05);
        let (v, dv) = s.eval(z);
        assert!((v - (z * 2.0 + 1.0)).norm() < 1e-14);
        assert!((dv - 2.0).norm() < 1e-14);
    }

    #[test]
    fn interpolates_nodes() {
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.125).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = Spline::from_real(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.value(Complex64::new(*xi, 0.0)).re - yi).abs() < 1e-14);
        }
        let mid = s.value(Complex64::new(0.51, 0.0)).re;
        assert!((mid - 0.51f64.sin()).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Spline::from_real(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(Spline::from_real(&[0.0], &[1.0]).is_err());
    }
}
