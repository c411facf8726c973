use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HamiltonianSystem;
use crate::error::{Error, Result};

/// `coeff · Π x_i^{powers[i]}` on the flat phase vector `(q, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialHamiltonian {
    pub dof: usize,
    pub terms: Vec<Monomial>,
    #[serde(default)]
    pub h1_terms: Vec<Monomial>,
}

fn powi(x: f64, k: u32) -> f64 {
    x.powi(k as i32)
}

fn eval_terms(terms: &[Monomial], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.coeff * t.powers.iter().zip(x).map(|(&k, &v)| powi(v, k)).product::<f64>())
        .sum()
}

fn grad_terms(terms: &[Monomial], x: &[f64]) -> DVector<f64> {
    let m = x.len();
    let mut g = DVector::zeros(m);
    for t in terms {
        for i in 0..m {
            let ki = t.powers[i];
            if ki == 0 {
                continue;
            }
            let mut v = t.coeff * ki as f64 * powi(x[i], ki - 1);
            for j in (0..m).filter(|&j| j != i) {
                v *= powi(x[j], t.powers[j]);
            }
            g[i] += v;
        }
    }
    g
}

fn hess_terms(terms: &[Monomial], x: &[f64]) -> DMatrix<f64> {
    let m = x.len();
    let mut h = DMatrix::zeros(m, m);
    for t in terms {
        for i in 0..m {
            for j in i..m {
                let mut pw = t.powers.clone();
                let mut c = t.coeff;
                if pw[i] == 0 {
                    continue;
                }
                c *= pw[i] as f64;
                pw[i] -= 1;
                if pw[j] == 0 {
                    continue;
                }
                c *= pw[j] as f64;
                pw[j] -= 1;
                let v = c * pw.iter().zip(x).map(|(&k, &xv)| powi(xv, k)).product::<f64>();
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
    }
    h
}

impl PolynomialHamiltonian {
    pub fn validate(&self) -> Result<()> {
        if self.dof == 0 {
            return Err(Error::Config("polynomial Hamiltonian needs dof >= 1".into()));
        }
        if self.terms.is_empty() {
            return Err(Error::Config("polynomial Hamiltonian has no terms".into()));
        }
        for t in self.terms.iter().chain(&self.h1_terms) {
            if t.powers.len() != 2 * self.dof {
                return Err(Error::Config(format!(
                    "monomial exponent vector has length {}, expected {}",
                    t.powers.len(),
                    2 * self.dof
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::Config("non-finite monomial coefficient".into()));
            }
        }
        Ok(())
    }

    pub fn into_system(self, label: impl Into<String>) -> Result<HamiltonianSystem> {
        self.validate()?;
        let t0 = self.terms.clone();
        let t1 = self.terms.clone();
        let t2 = self.terms;
        let mut sys = HamiltonianSystem::new(label, self.dof, move |x: &[f64]| eval_terms(&t0, x))
            .with_gradient(move |x: &[f64]| grad_terms(&t1, x))
            .with_hessian(move |x: &[f64]| hess_terms(&t2, x));
        if !self.h1_terms.is_empty() {
            let h1 = self.h1_terms;
            sys = sys.with_h1(move |x: &[f64]| eval_terms(&h1, x));
        }
        Ok(sys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverted_square_from_monomials() {
        let poly = PolynomialHamiltonian {
            dof: 1,
            terms: vec![Monomial { coeff: 1.0, powers: vec![0, 2] }, Monomial { coeff: -1.0, powers: vec![2, 0] }],
            h1_terms: vec![],
        };
        let sys = poly.into_system("poly").unwrap();
        let x = [1.0, 2.0];
        assert_eq!(sys.energy(&x).unwrap(), 3.0);
        let v = sys.vector_field(&x).unwrap();
        assert_eq!((v[0], v[1]), (4.0, 2.0));
        let h = sys.hessian(&x).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn mixed_term_hessian() {
        let poly = PolynomialHamiltonian {
            dof: 1,
            terms: vec![Monomial { coeff: 3.0, powers: vec![2, 1] }],
            h1_terms: vec![],
        };
        let sys = poly.into_system("p").unwrap();
        let h = sys.hessian(&[2.0, 5.0]).unwrap();
        // 3 x² p: ∂xx = 6p, ∂xp = 6x, ∂pp = 0
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[30.0, 12.0, 12.0, 0.0]));
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let poly = PolynomialHamiltonian { dof: 2, terms: vec![Monomial { coeff: 1.0, powers: vec![1, 0] }], h1_terms: vec![] };
        assert!(poly.into_system("p").is_err());
    }
}
