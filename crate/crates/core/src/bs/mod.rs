//! Semiclassical action along an orbit family and the complex
//! Bohr–Sommerfeld lattice it generates.

mod lattice;
mod solve;
pub mod spline;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use lattice::{diff_points, lattice_diff, LatticeDiff, LatticeEntry, ResonanceLattice};
pub use solve::{k_bound, solve_bs};
use spline::Spline;

use crate::dynamics::HamiltonianSystem;
use crate::error::{Error, Result};
use rayon::prelude::*;

use crate::floquet::{self, FloquetData, FloquetTag};
use crate::orbits::{subprincipal_integral, OrbitFamily};

/// Discrete convention choices left open by the quantization condition.
///
/// `ee_sign` multiplies every elliptic exponent, `g_ell_offset` is added to
/// the elliptic index, and `m_offset` is added to the reported `m` label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conventions {
    pub ee_sign: i32,
    pub g_ell_offset: i64,
    pub m_offset: i64,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions { ee_sign: 1, g_ell_offset: 0, m_offset: 0 }
    }
}

impl Conventions {
    pub fn validate(&self) -> Result<()> {
        if self.ee_sign != 1 && self.ee_sign != -1 {
            return Err(Error::Config(format!("ee_sign must be ±1, got {}", self.ee_sign)));
        }
        Ok(())
    }
}

/// `[e0 − eps0, e0 + eps0] − i[0, depth]`, with `|k|₁ ≤ c_const·ln(1/h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralWindow {
    pub e0: f64,
    pub eps0: f64,
    pub depth: f64,
    pub c_const: f64,
}

impl SpectralWindow {
    pub fn new(e0: f64, eps0: f64, depth: f64, c_const: f64) -> Result<Self> {
        let w = SpectralWindow { e0, eps0, depth, c_const };
        w.validate()?;
        Ok(w)
    }

    /// Window with the default depth `c·h·ln(1/h)`.
    pub fn with_default_depth(e0: f64, eps0: f64, h: f64, c_const: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Domain(format!("default depth needs 0 < h < 1, got {h}")));
        }
        SpectralWindow::new(e0, eps0, c_const.max(1.0) * h * (1.0 / h).ln(), c_const)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.e0.is_finite() || !(self.eps0 > 0.0) || !(self.depth > 0.0) || !(self.c_const >= 0.0) {
            return Err(Error::Domain(format!(
                "window needs finite e0, eps0 > 0, depth > 0, c_const ≥ 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    fn slack(&self) -> f64 {
        1e-12 * (self.eps0 + self.e0.abs() + self.depth)
    }

    /// Closed-window membership, with a rounding allowance.
    pub fn contains(&self, z: Complex64) -> bool {
        let s = self.slack();
        (z.re - self.e0).abs() <= self.eps0 + s && z.im <= s && z.im >= -self.depth - s
    }
}

/// Serialized form of [`SemiclassicalAction`]: node data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionData {
    pub energies: Vec<f64>,
    pub s0: Vec<f64>,
    pub subprincipal: Vec<f64>,
    /// `exponents[j][i]`: exponent `j` at node `i`.
    pub exponents: Vec<Vec<Complex64>>,
    pub tags: Vec<FloquetTag>,
    pub g_ell: i64,
    pub h: f64,
    #[serde(default)]
    pub conventions: Conventions,
}

/// `S(E;h) = S₀(E) + h·S₁(E)` as spline interpolants over the family energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionData", into = "ActionData")]
pub struct SemiclassicalAction {
    data: ActionData,
    s0: Spline,
    sub: Spline,
    mu: Vec<Spline>,
}

impl TryFrom<ActionData> for SemiclassicalAction {
    type Error = Error;

    fn try_from(data: ActionData) -> Result<Self> {
        let n = data.energies.len();
        if data.s0.len() != n || data.subprincipal.len() != n {
            return Err(Error::Arity(format!(
                "{n} energies but {} actions and {} subprincipal values",
                data.s0.len(),
                data.subprincipal.len()
            )));
        }
        if data.exponents.len() != data.tags.len() {
            return Err(Error::Arity(format!("{} exponent series but {} tags", data.exponents.len(), data.tags.len())));
        }
        if let Some(bad) = data.exponents.iter().find(|e| e.len() != n) {
            return Err(Error::Arity(format!("exponent series of length {} for {n} energies", bad.len())));
        }
        if !(data.h > 0.0) {
            return Err(Error::Domain(format!("h must be positive, got {}", data.h)));
        }
        data.conventions.validate()?;
        let s0 = Spline::from_real(&data.energies, &data.s0)?;
        let sub = Spline::from_real(&data.energies, &data.subprincipal)?;
        let mu = data.exponents.iter().map(|e| Spline::new(&data.energies, e)).collect::<Result<Vec<_>>>()?;
        Ok(SemiclassicalAction { data, s0, sub, mu })
    }
}

impl From<SemiclassicalAction> for ActionData {
    fn from(a: SemiclassicalAction) -> Self {
        a.data
    }
}

impl SemiclassicalAction {
    /// Action of the model `−τ + Σ μ_j Q_j` (period 2π), tabulated over `e_range`.
    ///
    /// `rates` are the per-unit-time coefficients; loxodromic blocks are
    /// expected as conjugate pairs.
    pub fn from_model(rates: &[Complex64], tags: &[FloquetTag], h: f64, e_range: (f64, f64)) -> Result<Self> {
        if rates.len() != tags.len() || rates.is_empty() {
            return Err(Error::Arity(format!("{} rates for {} tags", rates.len(), tags.len())));
        }
        let (a, b) = e_range;
        if !(b > a) {
            return Err(Error::Domain(format!("empty energy range [{a}, {b}]")));
        }
        let energies = vec![a, b];
        ActionData {
            s0: energies.iter().map(|e| 2.0 * PI * e).collect(),
            subprincipal: vec![0.0; 2],
            exponents: rates.iter().map(|r| vec![r * 2.0 * PI; 2]).collect(),
            energies,
            tags: tags.to_vec(),
            g_ell: 0,
            h,
            conventions: Conventions::default(),
        }
        .try_into()
    }

    pub fn data(&self) -> &ActionData {
        &self.data
    }

    pub fn h(&self) -> f64 {
        self.data.h
    }

    pub fn d(&self) -> usize {
        self.data.tags.len()
    }

    pub fn tags(&self) -> &[FloquetTag] {
        &self.data.tags
    }

    pub fn g_ell(&self) -> i64 {
        self.data.g_ell
    }

    pub fn conventions(&self) -> Conventions {
        self.data.conventions
    }

    pub fn with_conventions(mut self, c: Conventions) -> Result<Self> {
        c.validate()?;
        self.data.conventions = c;
        Ok(self)
    }

    /// Same tabulated data at a different `h`.
    pub fn with_h(mut self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("h must be positive, got {h}")));
        }
        self.data.h = h;
        Ok(self)
    }

    pub fn energy_range(&self) -> (f64, f64) {
        self.s0.range()
    }

    /// `S₀` and its derivative at complex energy.
    pub fn s0(&self, z: Complex64) -> (Complex64, Complex64) {
        self.s0.eval(z)
    }

    /// Exponents `μ_j` and their derivatives at complex energy.
    pub fn exponents(&self, z: Complex64) -> Vec<(Complex64, Complex64)> {
        self.mu.iter().map(|s| s.eval(z)).collect()
    }

    fn sign(&self, j: usize) -> f64 {
        match self.data.tags[j] {
            FloquetTag::Ee => self.data.conventions.ee_sign as f64,
            _ => 1.0,
        }
    }

    /// `S₁(E) = −∫H₁ − (1/2i)Σσ_jμ_j(E) + π(g_ℓ + offset)/2` and its derivative.
    ///
    /// The half-sum enters with the sign that puts hyperbolic resonances in
    /// the lower half plane.
    pub fn s1(&self, z: Complex64) -> (Complex64, Complex64) {
        let half_over_i = Complex64::new(0.0, -0.5);
        let (mut v, mut dv) = self.sub.eval(z);
        for (j, (mu, dmu)) in self.exponents(z).into_iter().enumerate() {
            let s = self.sign(j);
            v -= half_over_i * mu * s;
            dv -= half_over_i * dmu * s;
        }
        v += PI * (self.data.g_ell + self.data.conventions.g_ell_offset) as f64 / 2.0;
        (v, dv)
    }

    /// `F(z) = S₀ + hS₁ − (h/i)Σσ_j k_j μ_j − 2πmh` and `F′(z)`; zeros are
    /// the lattice points with label `(m, k)` before the `m` offset.
    pub fn condition(&self, z: Complex64, m: i64, k: &[u32]) -> (Complex64, Complex64) {
        let h = self.data.h;
        let (s0, ds0) = self.s0(z);
        let (s1, ds1) = self.s1(z);
        let mut f = s0 + s1 * h - 2.0 * PI * m as f64 * h;
        let mut df = ds0 + ds1 * h;
        let minus_h_over_i = Complex64::new(0.0, h);
        for (j, (mu, dmu)) in self.exponents(z).into_iter().enumerate() {
            let c = minus_h_over_i * (k[j] as f64 * self.sign(j));
            f += c * mu;
            df += c * dmu;
        }
        (f, df)
    }

    /// True when `S₀` is strictly monotone across the tabulated nodes.
    pub fn s0_monotone(&self) -> bool {
        let s = &self.data.s0;
        s.windows(2).all(|w| w[1] > w[0]) || s.windows(2).all(|w| w[1] < w[0])
    }
}

/// Tabulate `S₀`, `−∫H₁` and the Floquet exponents along a family.
pub fn assemble_action(
    family: &OrbitFamily,
    floquet_family: &[FloquetData],
    sys: &HamiltonianSystem,
    g_ell: i64,
    h: f64,
) -> Result<SemiclassicalAction> {
    let n = family.orbits.len();
    if floquet_family.len() != n || family.energies.len() != n || family.actions.len() != n {
        return Err(Error::Arity(format!(
            "family has {n} orbits, {} energies, {} actions; {} Floquet records",
            family.energies.len(),
            family.actions.len(),
            floquet_family.len()
        )));
    }
    if n < 2 {
        return Err(Error::Arity(format!("need at least two family nodes, got {n}")));
    }
    let tags = floquet_family[0].tags.clone();
    let d = tags.len();
    for (i, f) in floquet_family.iter().enumerate() {
        if f.tags != tags || f.exponents.len() != d {
            return Err(Error::Arity(format!("Floquet record {i} has tags {:?}, expected {tags:?}", f.tags)));
        }
    }
    let subprincipal = if sys.has_h1() {
        family.orbits.iter().map(|o| subprincipal_integral(o, sys)).collect::<Result<Vec<_>>>()?
    } else {
        vec![0.0; n]
    };
    // sort by energy so the splines see increasing knots
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| family.energies[a].total_cmp(&family.energies[b]));
    ActionData {
        energies: order.iter().map(|&i| family.energies[i]).collect(),
        s0: order.iter().map(|&i| family.actions[i]).collect(),
        subprincipal: order.iter().map(|&i| subprincipal[i]).collect(),
        exponents: (0..d).map(|j| order.iter().map(|&i| floquet_family[i].exponents[j]).collect()).collect(),
        tags,
        g_ell,
        h,
        conventions: Conventions::default(),
    }
    .try_into()
}

/// Floquet data for every orbit of the family; the elliptic index is
/// computed on the middle node and copied to all.
pub fn family_floquet(sys: &HamiltonianSystem, family: &OrbitFamily, tol: f64) -> Result<Vec<FloquetData>> {
    if family.orbits.is_empty() {
        return Err(Error::Arity("empty orbit family".into()));
    }
    let mut floq = family
        .orbits
        .par_iter()
        .map(|o| floquet::classify(&floquet::monodromy_matrix(sys, o, tol)?, floquet::DEFAULT_CLASSIFY_TOL))
        .collect::<Result<Vec<_>>>()?;
    let mid = family.orbits.len() / 2;
    let g = floquet::elliptic_index(sys, &family.orbits[mid], &floq[mid])?;
    for f in &mut floq {
        f.g_ell = g;
    }
    Ok(floq)
}

/// [`family_floquet`] followed by [`assemble_action`].
pub fn family_action(
    sys: &HamiltonianSystem,
    family: &OrbitFamily,
    h: f64,
    tol: f64,
) -> Result<(SemiclassicalAction, Vec<FloquetData>)> {
    let floq = family_floquet(sys, family, tol)?;
    let action = assemble_action(family, &floq, sys, floq[0].g_ell, h)?;
    Ok((action, floq))
}
