//! Quantum model `−hD_t + Σ μ_j Q_j^w`: its monodromy operator acts
//! diagonally on monomials, which gives the resonance lattice in closed form.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bs::{k_bound, LatticeEntry, ResonanceLattice, SpectralWindow};
use crate::circle_model::Cutoff;
use crate::error::{Error, Result};
use crate::floquet::FloquetTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mu_rates: Vec<Complex64>,
    pub types: Vec<FloquetTag>,
    pub h: f64,
}

impl ModelSpec {
    pub fn new(mu_rates: Vec<Complex64>, types: Vec<FloquetTag>, h: f64) -> Result<Self> {
        let s = ModelSpec { mu_rates, types, h };
        s.validate()?;
        Ok(s)
    }

    /// One hyperbolic block with real rate `mu`.
    pub fn hyperbolic(mu: f64, h: f64) -> Result<Self> {
        ModelSpec::new(vec![Complex64::new(mu, 0.0)], vec![FloquetTag::Hr], h)
    }

    pub fn d(&self) -> usize {
        self.mu_rates.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_rates.is_empty() || self.mu_rates.len() != self.types.len() {
            return Err(Error::Arity(format!("{} rates for {} types", self.mu_rates.len(), self.types.len())));
        }
        if !(self.h > 0.0) {
            return Err(Error::Domain(format!("h must be positive, got {}", self.h)));
        }
        for (mu, t) in self.mu_rates.iter().zip(&self.types) {
            check_tag(*t, *mu)?;
        }
        // loxodromic rates must come with their conjugates
        let mut hc: Vec<Complex64> = self.hc_rates();
        while let Some(mu) = hc.pop() {
            match hc.iter().position(|o| (o - mu.conj()).norm() <= 1e-12 * mu.norm()) {
                Some(i) => {
                    hc.swap_remove(i);
                }
                None => return Err(Error::Contract(format!("hc rate {mu} has no conjugate partner"))),
            }
        }
        Ok(())
    }

    fn hc_rates(&self) -> Vec<Complex64> {
        self.mu_rates.iter().zip(&self.types).filter(|(_, t)| **t == FloquetTag::Hc).map(|(m, _)| *m).collect()
    }
}

fn check_tag(tag: FloquetTag, mu: Complex64) -> Result<()> {
    let scale = mu.norm().max(1.0);
    let ok = match tag {
        FloquetTag::Hr => mu.re > 0.0 && mu.im.abs() <= 1e-14 * scale,
        FloquetTag::Ee => mu.im > 0.0 && mu.re.abs() <= 1e-14 * scale,
        FloquetTag::Hc => mu.re.abs() > 0.0 && mu.im.abs() > 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!("rate {mu} is inconsistent with tag {tag}")))
    }
}

/// Quadratic block of the model symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuadraticSymbol {
    /// `μ·x·ξ`
    Hyperbolic { mu: f64 },
    /// `(ω/2)(ξ² + x²)`, from `−(iμ/2)(ξ² + x²)` with `μ = iω`
    Elliptic { omega: f64 },
    /// `c(x₁ξ₁ + x₂ξ₂) − d(x₁ξ₂ − x₂ξ₁)` for `μ = c + id`
    Loxodromic { c: f64, d: f64 },
}

impl QuadraticSymbol {
    /// Value at `(x, ξ)`; one coordinate pair, two for the loxodromic block.
    pub fn evaluate(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let need = if matches!(self, QuadraticSymbol::Loxodromic { .. }) { 2 } else { 1 };
        if x.len() != need || xi.len() != need {
            return Err(Error::Arity(format!("block needs {need} coordinate pairs")));
        }
        Ok(match *self {
            QuadraticSymbol::Hyperbolic { mu } => mu * x[0] * xi[0],
            QuadraticSymbol::Elliptic { omega } => 0.5 * omega * (xi[0] * xi[0] + x[0] * x[0]),
            QuadraticSymbol::Loxodromic { c, d } => c * (x[0] * xi[0] + x[1] * xi[1]) - d * (x[0] * xi[1] - x[1] * xi[0]),
        })
    }
}

impl fmt::Display for QuadraticSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadraticSymbol::Hyperbolic { mu } => write!(f, "{mu}·x·ξ"),
            QuadraticSymbol::Elliptic { omega } => write!(f, "{}·(ξ²+x²)", omega / 2.0),
            QuadraticSymbol::Loxodromic { c, d } => write!(f, "{c}·(x₁ξ₁+x₂ξ₂) − {d}·(x₁ξ₂−x₂ξ₁)"),
        }
    }
}

pub fn quadratic_symbol(tag: FloquetTag, mu: Complex64) -> Result<QuadraticSymbol> {
    check_tag(tag, mu)?;
    Ok(match tag {
        FloquetTag::Hr => QuadraticSymbol::Hyperbolic { mu: mu.re },
        FloquetTag::Ee => QuadraticSymbol::Elliptic { omega: mu.im },
        FloquetTag::Hc => QuadraticSymbol::Loxodromic { c: mu.re, d: mu.im },
    })
}

/// Finite combination of monomials `x^k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonomialState {
    pub coefficients: BTreeMap<Vec<u32>, Complex64>,
}

impl MonomialState {
    pub fn monomial(k: Vec<u32>) -> Self {
        MonomialState { coefficients: BTreeMap::from([(k, Complex64::new(1.0, 0.0))]) }
    }
}

/// Eigenvalue of the model monodromy on `x^k`:
/// `e^{−2iπE/h} Π_j e^{(2k_j+1)πμ_j}`.
pub fn amplitude(spec: &ModelSpec, e: Complex64, k: &[u32]) -> Complex64 {
    let mut expo = -Complex64::i() * 2.0 * PI * e / spec.h;
    for (mu, kj) in spec.mu_rates.iter().zip(k) {
        expo += mu * (PI * (2 * kj + 1) as f64);
    }
    expo.exp()
}

pub fn monodromy_apply(spec: &ModelSpec, e: Complex64, state: &MonomialState) -> Result<MonomialState> {
    monodromy_apply_weighted(spec, e, state, 1.0)
}

/// Monodromy built from an explicit cutoff: the only trace of χ is the
/// weight `∫χ′` over the rising arc, which is exactly `χ(end) − χ(start) = 1`.
pub fn monodromy_apply_with_cutoff(spec: &ModelSpec, e: Complex64, state: &MonomialState, chi: &Cutoff) -> Result<MonomialState> {
    monodromy_apply_weighted(spec, e, state, cutoff_weight(chi))
}

/// `∫χ′` across the rising arc, from the endpoint values of χ.
pub fn cutoff_weight(chi: &Cutoff) -> f64 {
    let n = chi.values.len();
    chi.values[n - 1] - chi.values[n / 2]
}

fn monodromy_apply_weighted(spec: &ModelSpec, e: Complex64, state: &MonomialState, weight: f64) -> Result<MonomialState> {
    let d = spec.d();
    let mut out = MonomialState::default();
    for (k, c) in &state.coefficients {
        if k.len() != d {
            return Err(Error::Arity(format!("monomial index {k:?} has length {}, expected {d}", k.len())));
        }
        out.coefficients.insert(k.clone(), c * amplitude(spec, e, k) * weight);
    }
    Ok(out)
}

/// All `k ∈ ℕ^d` with `|k|₁ ≤ kmax`.
fn indices_l1(d: usize, kmax: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<u32>| {
                let used: u32 = p.iter().sum();
                (0..=kmax - used).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// All `k ∈ {0..kmax}^d`.
fn indices_box(d: usize, kmax: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<u32>| {
                (0..=kmax).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// `z = mh − ih Σ_j μ_j (k_j + ½)` inside the window, with `|k|₁ ≤ c·ln(1/h)`;
/// coincident points are merged and counted.
pub fn model_resonances(spec: &ModelSpec, window: &SpectralWindow) -> Result<ResonanceLattice> {
    spec.validate()?;
    window.validate()?;
    let h = spec.h;
    let kmax = k_bound(window.c_const, h);
    let mut entries = Vec::new();
    for k in indices_l1(spec.d(), kmax) {
        let shift: Complex64 = spec
            .mu_rates
            .iter()
            .zip(&k)
            .map(|(mu, kj)| -Complex64::i() * h * mu * (*kj as f64 + 0.5))
            .sum();
        let m_lo = ((window.e0 - window.eps0 - shift.re) / h).floor() as i64 - 1;
        let m_hi = ((window.e0 + window.eps0 - shift.re) / h).ceil() as i64 + 1;
        for m in m_lo..=m_hi {
            let z = shift + h * m as f64;
            if window.contains(z) {
                entries.push(LatticeEntry { m, k: k.clone(), z, newton_residual: 0.0, multiplicity: 1 });
            }
        }
    }
    Ok(ResonanceLattice::new(entries).merge_coincident(1e-9 * h))
}

/// `det(Id − M(z))` on monomials with `|k|_∞ ≤ k_max`.
pub fn truncated_monodromy_determinant(spec: &ModelSpec, z: Complex64, k_max: u32) -> Complex64 {
    indices_box(spec.d(), k_max)
        .iter()
        .map(|k| Complex64::new(1.0, 0.0) - amplitude(spec, z, k))
        .product()
}

/// Newton on `D′/D` for a zero of the truncated determinant near `z0`.
pub fn locate_determinant_zero(spec: &ModelSpec, z0: Complex64, k_max: u32, tol: f64) -> Result<Complex64> {
    let ks = indices_box(spec.d(), k_max);
    let da = -Complex64::i() * 2.0 * PI / spec.h;
    let mut z = z0;
    for it in 0..100 {
        // D′/D = Σ −a′/(1 − a), a′ = a·(−2iπ/h). Factors with |a| > 1 are
        // written −a(1 − 1/a); the zero-free −a is dropped so that it cannot
        // swamp the step.
        let mut logd = Complex64::new(0.0, 0.0);
        for k in &ks {
            let a = amplitude(spec, z, k);
            let (b, sign) = if a.norm() <= 1.0 { (a, -1.0) } else { (1.0 / a, 1.0) };
            let one_minus = Complex64::new(1.0, 0.0) - b;
            if one_minus.norm() == 0.0 {
                return Ok(z);
            }
            logd += b * da * sign / one_minus;
        }
        if !logd.is_finite() || logd.norm() == 0.0 {
            return Err(Error::NoConvergence { iterations: it, residual: f64::NAN });
        }
        let dz = Complex64::new(1.0, 0.0) / logd;
        z -= dz;
        if dz.norm() <= tol {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence {
        iterations: 100,
        residual: truncated_monodromy_determinant(spec, z, k_max).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn symbols() {
        assert_eq!(quadratic_symbol(FloquetTag::Hr, c(2.0, 0.0)).unwrap(), QuadraticSymbol::Hyperbolic { mu: 2.0 });
        let e = quadratic_symbol(FloquetTag::Ee, c(0.0, 1.0)).unwrap();
        assert_eq!(e.evaluate(&[1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(quadratic_symbol(FloquetTag::Hc, c(1.0, 1.0)).unwrap(), QuadraticSymbol::Loxodromic { c: 1.0, d: 1.0 });
        assert!(matches!(quadratic_symbol(FloquetTag::Ee, c(1.0, 0.0)), Err(Error::Contract(_))));
    }

    #[test]
    fn ground_amplitude() {
        let s = ModelSpec::hyperbolic(1.0, 0.37).unwrap();
        assert!((amplitude(&s, c(0.0, 0.0), &[0]) - PI.exp()).norm() < 1e-12);
    }

    #[test]
    fn diagonal_action() {
        let s = ModelSpec::hyperbolic(1.0, 0.1).unwrap();
        let mut st = MonomialState::monomial(vec![0]);
        st.coefficients.insert(vec![3], c(2.0, -1.0));
        let out = monodromy_apply(&s, c(0.02, -0.01), &st).unwrap();
        assert_eq!(out.coefficients.len(), 2);
        for (k, v) in &out.coefficients {
            assert_eq!(*v, st.coefficients[k] * amplitude(&s, c(0.02, -0.01), k));
        }
    }

    #[test]
    fn lattice_examples() {
        let s = ModelSpec::hyperbolic(1.0, 0.01).unwrap();
        let w = SpectralWindow::new(0.0, 0.05, 0.05, 1.0).unwrap();
        let lat = model_resonances(&s, &w).unwrap();
        assert_eq!(lat.len(), 55);
        for e in &lat.entries {
            assert!((amplitude(&s, e.z, &e.k) - 1.0).norm() < 1e-10);
        }

        let ee = ModelSpec::new(vec![c(0.0, 2f64.sqrt())], vec![FloquetTag::Ee], 0.01).unwrap();
        let w = SpectralWindow::new(0.0, 0.05, 1e-12, 1.0).unwrap();
        let lat = model_resonances(&ee, &w).unwrap();
        assert!(!lat.is_empty());
        assert!(lat.entries.iter().all(|e| e.z.im == 0.0));
    }

    #[test]
    fn hc_needs_partner() {
        assert!(ModelSpec::new(vec![c(1.0, 0.5)], vec![FloquetTag::Hc], 0.1).is_err());
        assert!(ModelSpec::new(vec![c(1.0, 0.5), c(1.0, -0.5)], vec![FloquetTag::Hc; 2], 0.1).is_ok());
    }

    #[test]
    fn single_factor_determinant() {
        let s = ModelSpec::hyperbolic(1.0, 0.1).unwrap();
        let z = c(0.013, -0.02);
        let expect = 1.0 - (-Complex64::i() * 2.0 * PI * z / 0.1).exp() * PI.exp();
        assert!((truncated_monodromy_determinant(&s, z, 0) - expect).norm() < 1e-12 * expect.norm());
    }
}
