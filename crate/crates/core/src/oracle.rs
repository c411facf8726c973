//! Brute-force checks: complex-scaled finite-difference operators, their
//! eigenvalues, exact separable spectra, and the convention search that
//! pins the Bohr–Sommerfeld lattice against them.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bs::{solve_bs, Conventions, LatticeEntry, ResonanceLattice, SemiclassicalAction, SpectralWindow};
use crate::error::{Error, Result};
use crate::floquet::FloquetTag;

const MAX_DENSE_DIM: usize = 20_000;

/// Uniform grid of `n` interior points on `[−l, l]` (Dirichlet ends) for the
/// dilation `y ↦ e^{iθ}y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec1D {
    pub l: f64,
    pub n: usize,
    pub theta: f64,
    pub h: f64,
}

impl GridSpec1D {
    pub fn new(l: f64, n: usize, theta: f64, h: f64) -> Result<Self> {
        let g = GridSpec1D { l, n, theta, h };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) || self.n < 128 || !(self.h > 0.0) {
            return Err(Error::Domain(format!("grid needs l > 0, n ≥ 128, h > 0 (got {self:?})")));
        }
        if !(0.0..FRAC_PI_2).contains(&self.theta) {
            return Err(Error::Domain(format!("theta must lie in [0, π/2), got {}", self.theta)));
        }
        let per_wavelength = self.h * self.n as f64 / (2.0 * self.l);
        if per_wavelength < 8.0 {
            return Err(Error::Domain(format!(
                "resolution h·n/(2l) = {per_wavelength:.2} is below 8 points per wavelength"
            )));
        }
        Ok(())
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.l / (self.n + 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (1..=self.n).map(|i| -self.l + i as f64 * self.dy()).collect()
    }
}

/// Second-order central differences for `−e^{−2iθ}h²∂²_y − e^{2iθ}y²`.
pub fn scaled_inverted_oscillator(spec: &GridSpec1D) -> Result<Mat<Complex64>> {
    spec.validate()?;
    let kin = Complex64::from_polar(1.0, -2.0 * spec.theta) * (spec.h * spec.h / (spec.dy() * spec.dy()));
    let pot = Complex64::from_polar(1.0, 2.0 * spec.theta);
    let y = spec.points();
    Ok(Mat::from_fn(spec.n, spec.n, |i, j| {
        if i == j {
            kin * 2.0 - pot * (y[i] * y[i])
        } else if i.abs_diff(j) == 1 {
            -kin
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// The inverted-oscillator matrix restricted to even and odd grid functions
/// (`v(−y) = ±v(y)`); the union of the block spectra is the full spectrum.
pub fn scaled_inverted_oscillator_parity(spec: &GridSpec1D) -> Result<ComplexOperator> {
    let a = scaled_inverted_oscillator(spec)?;
    let n = spec.n;
    let p = n / 2;
    let off = a[(0, 1)];
    let block = |size: usize, last: Complex64, corner: Option<Complex64>| {
        Mat::from_fn(size, size, |i, j| {
            if i == j {
                if i == size - 1 {
                    last
                } else {
                    a[(i, i)]
                }
            } else if i.abs_diff(j) == 1 {
                match corner {
                    Some(c) if i == size - 1 => c,
                    _ => off,
                }
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    };
    let (even, odd) = if n % 2 == 0 {
        (block(p, a[(p - 1, p - 1)] + off, None), block(p, a[(p - 1, p - 1)] - off, None))
    } else {
        // the centre point couples to both neighbours
        (block(p + 1, a[(p, p)], Some(off * 2.0)), block(p, a[(p - 1, p - 1)], None))
    };
    Ok(ComplexOperator::Parity { even, odd, grid: *spec })
}

/// Complex-scaled operator: dense, block diagonal over Fourier modes, or
/// split by parity.
#[derive(Debug, Clone)]
pub enum ComplexOperator {
    Dense { matrix: Mat<Complex64>, grid: Option<GridSpec1D> },
    /// `⊕_m (shifts[m]·Id + block)`
    FourierBlocks { shifts: Vec<f64>, block: Mat<Complex64>, grid: GridSpec1D, mu: f64 },
    Parity { even: Mat<Complex64>, odd: Mat<Complex64>, grid: GridSpec1D },
}

impl ComplexOperator {
    pub fn dense(matrix: Mat<Complex64>) -> Self {
        ComplexOperator::Dense { matrix, grid: None }
    }

    pub fn dim(&self) -> usize {
        match self {
            ComplexOperator::Dense { matrix, .. } => matrix.nrows(),
            ComplexOperator::FourierBlocks { shifts, block, .. } => shifts.len() * block.nrows(),
            ComplexOperator::Parity { even, odd, .. } => even.nrows() + odd.nrows(),
        }
    }

    /// The full matrix; block operators are expanded mode by mode, parity
    /// blocks in the even/odd basis (similar to the grid matrix).
    pub fn to_dense(&self) -> Mat<Complex64> {
        match self {
            ComplexOperator::Dense { matrix, .. } => matrix.clone(),
            ComplexOperator::FourierBlocks { shifts, block, .. } => {
                let b = block.nrows();
                Mat::from_fn(self.dim(), self.dim(), |i, j| {
                    let (bi, bj) = (i / b, j / b);
                    if bi != bj {
                        return Complex64::new(0.0, 0.0);
                    }
                    let v = block[(i % b, j % b)];
                    if i == j {
                        v + shifts[bi]
                    } else {
                        v
                    }
                })
            }
            ComplexOperator::Parity { even, odd, .. } => {
                let b = even.nrows();
                Mat::from_fn(self.dim(), self.dim(), |i, j| match (i < b, j < b) {
                    (true, true) => even[(i, j)],
                    (false, false) => odd[(i - b, j - b)],
                    _ => Complex64::new(0.0, 0.0),
                })
            }
        }
    }
}

/// `−hD_t ⊗ Id + Id ⊗ (μ/2)(ξ² − x²)` (scaled) on the modes `e^{imt}`,
/// `|m| ≤ n_fourier`. On `e^{imt}` the first term is `−mh`.
pub fn scaled_model_operator(mu: f64, spec: &GridSpec1D, n_fourier: usize) -> Result<ComplexOperator> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    let a = scaled_inverted_oscillator(spec)?;
    let block = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (mu / 2.0));
    let nf = n_fourier as i64;
    let shifts = (-nf..=nf).map(|m| -(m as f64) * spec.h).collect();
    Ok(ComplexOperator::FourierBlocks { shifts, block, grid: *spec, mu })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenParams {
    Matrix { dim: usize },
    Grid(GridSpec1D),
    Product { grid: GridSpec1D, n_fourier: usize, mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<Complex64>,
    pub theta: f64,
    pub params: EigenParams,
}

impl EigenResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["re_z", "im_z"])?;
        for z in &self.eigenvalues {
            wr.write_record([z.re.to_string(), z.im.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// The `re_z`, `im_z` columns of any CSV with those headers (point or lattice files).
    pub fn read_csv_points<R: Read>(r: R) -> Result<Vec<Complex64>> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Config(format!("CSV has no '{name}' column")))
        };
        let (ir, ii) = (col("re_z")?, col("im_z")?);
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let p = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("bad number '{s}': {e}")));
            out.push(Complex64::new(p(&rec[ir])?, p(&rec[ii])?));
        }
        Ok(out)
    }
}

fn dense_eigenvalues(m: &Mat<Complex64>) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Arity(format!("operator is {}×{}", m.nrows(), m.ncols())));
    }
    if m.nrows() > MAX_DENSE_DIM {
        return Err(Error::Precondition(format!("dense solve limited to dimension {MAX_DENSE_DIM}, got {}", m.nrows())));
    }
    let ev = m
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigensolver failed on a {}×{} operator: {e:?}", m.nrows(), m.ncols())))?;
    if ev.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("eigensolver returned non-finite eigenvalues".into()));
    }
    Ok(ev)
}

/// All eigenvalues inside the closed window, sorted by real part.
pub fn eigenvalues_in_window(op: &ComplexOperator, window: &SpectralWindow) -> Result<EigenResult> {
    window.validate()?;
    let (all, theta, params) = match op {
        ComplexOperator::Dense { matrix, grid } => {
            let ev = dense_eigenvalues(matrix)?;
            match grid {
                Some(g) => (ev, g.theta, EigenParams::Grid(*g)),
                None => (ev, 0.0, EigenParams::Matrix { dim: matrix.nrows() }),
            }
        }
        ComplexOperator::FourierBlocks { shifts, block, grid, mu } => {
            let base = dense_eigenvalues(block)?;
            let ev = shifts.iter().flat_map(|s| base.iter().map(move |z| z + s)).collect();
            (ev, grid.theta, EigenParams::Product { grid: *grid, n_fourier: shifts.len() / 2, mu: *mu })
        }
        ComplexOperator::Parity { even, odd, grid } => {
            let mut ev = dense_eigenvalues(even)?;
            ev.extend(dense_eigenvalues(odd)?);
            (ev, grid.theta, EigenParams::Grid(*grid))
        }
    };
    let mut eigenvalues: Vec<Complex64> = all.into_iter().filter(|z| window.contains(*z)).collect();
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(EigenResult { eigenvalues, theta, params })
}

/// Richardson step for a second-order scheme: each `fine` eigenvalue (grid
/// spacing `dy/2`) is paired with the nearest `coarse` one (spacing `dy`) and
/// replaced by `(4·fine − coarse)/3`. Pairs further apart than `max_shift`
/// are dropped.
pub fn richardson_extrapolate(coarse: &[Complex64], fine: &[Complex64], max_shift: f64) -> Vec<Complex64> {
    fine.iter()
        .filter_map(|f| {
            let c = coarse.iter().min_by(|a, b| (*a - f).norm().total_cmp(&(*b - f).norm()))?;
            ((c - f).norm() <= max_shift).then(|| (f * 4.0 - c) / 3.0)
        })
        .collect()
}

/// Exact resonances `h(n+½) + hω(l+½) − ih(k+½)` of
/// `½(p_x²+x²) + ½(p_z²+ω²z²) + ½(p_y²−y²)`, labelled `m = n+l`, `k = (k, l)`.
pub fn separable_reference(h: f64, omega: f64, k_max: u32, n_max: u32, l_max: u32) -> Result<ResonanceLattice> {
    if !(h > 0.0 && omega > 0.0) {
        return Err(Error::Domain(format!("need h > 0 and ω > 0, got h={h}, ω={omega}")));
    }
    let mut entries = Vec::new();
    for n in 0..=n_max {
        for l in 0..=l_max {
            for k in 0..=k_max {
                let z = Complex64::new(h * (n as f64 + 0.5) + h * omega * (l as f64 + 0.5), -h * (k as f64 + 0.5));
                entries.push(LatticeEntry { m: (n + l) as i64, k: vec![k, l], z, newton_residual: 0.0, multiplicity: 1 });
            }
        }
    }
    let mut entries = ResonanceLattice { entries }.merge_coincident(1e-9 * h).entries;
    entries.sort_by(|a, b| a.m.cmp(&b.m).then_with(|| a.k.cmp(&b.k)));
    Ok(ResonanceLattice { entries })
}

/// Exact resonances `h(n+½) − ih(k+½)` of `½(p_x²+x²) + ½(p_y²−y²)`, labelled `m = n`.
pub fn separable_reference_hyp2(h: f64, k_max: u32, n_max: u32) -> Result<ResonanceLattice> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("need h > 0, got {h}")));
    }
    let entries = (0..=n_max)
        .flat_map(|n| {
            (0..=k_max).map(move |k| LatticeEntry {
                m: n as i64,
                k: vec![k],
                z: Complex64::new(h * (n as f64 + 0.5), -h * (k as f64 + 0.5)),
                newton_residual: 0.0,
                multiplicity: 1,
            })
        })
        .collect();
    Ok(ResonanceLattice::new(entries))
}

/// Largest distance between entries with equal `(m, k)`; `None` when some
/// entry of `a` has no counterpart in `b`.
pub fn labelled_max_err(a: &ResonanceLattice, b: &ResonanceLattice) -> Option<f64> {
    let index: HashMap<(i64, &[u32]), Complex64> = b.entries.iter().map(|e| ((e.m, e.k.as_slice()), e.z)).collect();
    let mut worst: f64 = 0.0;
    for e in &a.entries {
        let z = index.get(&(e.m, e.k.as_slice()))?;
        worst = worst.max((e.z - z).norm());
    }
    Some(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub offset_m: i64,
    pub ee_sign: i32,
    pub g_ell_offset: i64,
    pub max_err: f64,
    pub matched: usize,
    /// Number of convention tuples with `max_err ≤ tol`.
    pub n_passing: usize,
    pub unique: bool,
}

impl CalibrationReport {
    pub fn conventions(&self) -> Conventions {
        Conventions { ee_sign: self.ee_sign, g_ell_offset: self.g_ell_offset, m_offset: self.offset_m }
    }
}

/// Search `ee_sign ∈ {±1}`, `g_ℓ` offset and `m` offset in `{−2..2}`: re-solve
/// the lattice for each choice and compare label by label with `reference`.
pub fn calibrate_conventions(
    action: &SemiclassicalAction,
    window: &SpectralWindow,
    reference: &ResonanceLattice,
    tol: f64,
) -> Result<CalibrationReport> {
    if reference.is_empty() {
        return Err(Error::Calibration("reference lattice is empty".into()));
    }
    let has_ee = action.tags().contains(&FloquetTag::Ee);
    let signs: &[i32] = if has_ee { &[1, -1] } else { &[1] };
    let mut candidates = Vec::new();
    for &ee_sign in signs {
        for g_ell_offset in -2..=2 {
            let base = action.clone().with_conventions(Conventions { ee_sign, g_ell_offset, m_offset: 0 })?;
            let lattice = solve_bs(&base, window)?;
            if lattice.is_empty() {
                continue;
            }
            for m_offset in -2..=2 {
                let shifted = ResonanceLattice {
                    entries: lattice.entries.iter().map(|e| LatticeEntry { m: e.m + m_offset, ..e.clone() }).collect(),
                };
                if let Some(err) = labelled_max_err(&shifted, reference) {
                    candidates.push((err, ee_sign, g_ell_offset, m_offset, shifted.len()));
                }
            }
        }
    }
    let n_passing = candidates.iter().filter(|c| c.0 <= tol).count();
    let best = candidates
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Calibration("no convention choice produced a lattice whose labels all occur in the reference".into()))?;
    if n_passing == 0 {
        return Err(Error::Calibration(format!(
            "best convention (ee_sign={}, g_ell_offset={}, m_offset={}) has max_err {:.3e} > {tol:.3e}",
            best.1, best.2, best.3, best.0
        )));
    }
    Ok(CalibrationReport {
        offset_m: best.3,
        ee_sign: best.1,
        g_ell_offset: best.2,
        max_err: best.0,
        matched: best.4,
        n_passing,
        unique: n_passing == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(GridSpec1D::new(1.6, 1024, 0.5, 0.05).is_ok());
        assert!(GridSpec1D::new(12.0, 1024, 0.5, 0.05).is_err());
        assert!(GridSpec1D::new(1.0, 64, 0.5, 0.05).is_err());
        assert!(GridSpec1D::new(1.0, 1024, FRAC_PI_2, 0.05).is_err());
    }

    #[test]
    fn diagonal_operator() {
        let d = [Complex64::new(0.01, -0.02), Complex64::new(-0.03, -0.01), Complex64::new(0.5, -0.01)];
        let m = Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { Complex64::new(0.0, 0.0) });
        let w = SpectralWindow::new(0.0, 0.1, 0.1, 1.0).unwrap();
        let r = eigenvalues_in_window(&ComplexOperator::dense(m), &w).unwrap();
        assert_eq!(r.eigenvalues.len(), 2);
        assert!((r.eigenvalues[0] - d[1]).norm() < 1e-14 && (r.eigenvalues[1] - d[0]).norm() < 1e-14);
    }

    #[test]
    fn separable_examples() {
        let s = separable_reference(0.1, 2f64.sqrt(), 2, 2, 2).unwrap();
        let e = s.entries.iter().find(|e| e.m == 0 && e.k == vec![0, 0]).unwrap();
        assert!((e.z - Complex64::new(0.05 + 0.05 * 2f64.sqrt(), -0.05)).norm() < 1e-15);
        let one = separable_reference(0.1, 2f64.sqrt(), 0, 3, 3).unwrap();
        assert!(one.entries.iter().all(|e| (e.z.im + 0.05).abs() < 1e-15));
        let deg = separable_reference(0.1, 1.0, 0, 3, 3).unwrap();
        assert!(deg.entries.iter().any(|e| e.multiplicity > 1));
        assert_eq!(deg.entries.iter().map(|e| e.multiplicity).sum::<u32>(), 16);
    }

    #[test]
    fn parity_split_keeps_spectrum() {
        for n in [128, 129] {
            let g = GridSpec1D::new(1.0, n, 0.6, 0.2).unwrap();
            let w = SpectralWindow::new(0.0, 1.0, 2.0, 1.0).unwrap();
            let full = eigenvalues_in_window(&ComplexOperator::dense(scaled_inverted_oscillator(&g).unwrap()), &w).unwrap();
            let split = eigenvalues_in_window(&scaled_inverted_oscillator_parity(&g).unwrap(), &w).unwrap();
            assert_eq!(full.eigenvalues.len(), split.eigenvalues.len());
            for z in &full.eigenvalues {
                let d = split.eigenvalues.iter().map(|s| (s - z).norm()).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9, "n={n}: {z} missing ({d:e})");
            }
        }
    }

    #[test]
    fn richardson_cancels_quadratic_error() {
        let exact = [Complex64::new(0.0, -1.0), Complex64::new(0.0, -3.0)];
        let err = Complex64::new(0.3, 0.2);
        let coarse: Vec<_> = exact.iter().map(|z| z + err * 0.01).collect();
        let fine: Vec<_> = exact.iter().map(|z| z + err * 0.0025).collect();
        let r = richardson_extrapolate(&coarse, &fine, 0.1);
        assert!(r.iter().zip(&exact).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn block_operator_expands() {
        let g = GridSpec1D::new(1.0, 128, 0.6, 0.2).unwrap();
        let op = scaled_model_operator(1.0, &g, 1).unwrap();
        let dense = op.to_dense();
        assert_eq!(dense.nrows(), 3 * 128);
        let w = SpectralWindow::new(0.0, 0.3, 0.5, 1.0).unwrap();
        let a = eigenvalues_in_window(&op, &w).unwrap();
        let b = eigenvalues_in_window(&ComplexOperator::dense(dense), &w).unwrap();
        assert_eq!(a.eigenvalues.len(), b.eigenvalues.len());
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).norm() < 1e-9);
        }
    }
}
