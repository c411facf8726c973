use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{LatticeEntry, ResonanceLattice, SemiclassicalAction, SpectralWindow};
use crate::error::{Error, Result};

const MAX_NEWTON: usize = 60;

/// `⌊c·ln(1/h)⌋` for `h < 1`, else 0.
pub fn k_bound(c_const: f64, h: f64) -> u32 {
    if h >= 1.0 || c_const <= 0.0 {
        0
    } else {
        (c_const * (1.0 / h).ln()).floor() as u32
    }
}

/// All `k ∈ ℕ^d` with `|k|₁ ≤ kmax`, lexicographic.
fn multi_indices(d: usize, kmax: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(d, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, kmax, &mut Vec::with_capacity(d), &mut out);
    out
}

fn newton(action: &SemiclassicalAction, m: i64, k: &[u32], z0: Complex64, step_cap: f64) -> Option<(Complex64, f64)> {
    let tol = 1e-12 * 2.0 * PI * action.h();
    let mut z = z0;
    let mut converged_at = None;
    for it in 0..MAX_NEWTON {
        let (f, df) = action.condition(z, m, k);
        if !f.is_finite() || df.norm() == 0.0 || !df.is_finite() {
            return None;
        }
        if f.norm() <= tol {
            // one polishing step past the first accepted iterate
            if converged_at.is_some_and(|c| it > c) {
                return Some((z, f.norm()));
            }
            converged_at.get_or_insert(it);
        }
        let mut dz = f / df;
        if dz.norm() > step_cap {
            dz *= step_cap / dz.norm();
        }
        z -= dz;
    }
    let (f, _) = action.condition(z, m, k);
    (f.norm() <= tol).then_some((z, f.norm()))
}

/// Solve the quantization condition for every admissible `(m, k)` and keep
/// the roots inside `window`.
///
/// The `m` range is read off `S₀` over the window (widened by the size of
/// the `O(h)` terms); pairs whose Newton iteration fails are skipped.
pub fn solve_bs(action: &SemiclassicalAction, window: &SpectralWindow) -> Result<ResonanceLattice> {
    window.validate()?;
    let (a, b) = action.energy_range();
    let (lo, hi) = (window.e0 - window.eps0, window.e0 + window.eps0);
    let pad = 1e-9 * (b - a).max(1.0);
    if hi < a - pad || lo > b + pad {
        return Err(Error::Precondition(format!(
            "window [{lo}, {hi}] does not overlap the family energy range [{a}, {b}]"
        )));
    }
    let h = action.h();
    let kmax = k_bound(window.c_const, h);
    let ks = multi_indices(action.d(), kmax);

    let e0 = Complex64::new(window.e0, 0.0);
    let s_lo = action.s0(Complex64::new(lo, 0.0)).0.re;
    let s_hi = action.s0(Complex64::new(hi, 0.0)).0.re;
    let shift = action.s1(e0).0.norm() + kmax as f64 * action.exponents(e0).iter().map(|(m, _)| m.norm()).sum::<f64>();
    let margin = (shift / (2.0 * PI)).ceil() as i64 + 2;
    let m_lo = (s_lo.min(s_hi) / (2.0 * PI * h)).floor() as i64 - margin;
    let m_hi = (s_lo.max(s_hi) / (2.0 * PI * h)).ceil() as i64 + margin;

    let pairs: Vec<(i64, &Vec<u32>)> = (m_lo..=m_hi).flat_map(|m| ks.iter().map(move |k| (m, k))).collect();
    let step_cap = (b - a).max(window.eps0);
    let m_offset = action.conventions().m_offset;
    let entries: Vec<LatticeEntry> = pairs
        .par_iter()
        .filter_map(|&(m, k)| {
            // linearized start: S₀ ≈ S₀(e0) + T(e0)(z − e0)
            let (f0, df0) = action.condition(e0, m, k);
            let z0 = if df0.norm() > 0.0 { e0 - f0 / df0 } else { e0 };
            match newton(action, m, k, z0, step_cap) {
                Some((z, res)) if window.contains(z) => Some(LatticeEntry {
                    m: m + m_offset,
                    k: k.clone(),
                    z,
                    newton_residual: res,
                    multiplicity: 1,
                }),
                Some(_) => None,
                None => {
                    log::debug!("Newton failed for m={m}, k={k:?}");
                    None
                }
            }
        })
        .collect();
    if entries.is_empty() {
        log::warn!("no Bohr–Sommerfeld roots inside the window");
    }
    Ok(ResonanceLattice::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::FloquetTag;

    fn model(mu: f64, h: f64) -> SemiclassicalAction {
        SemiclassicalAction::from_model(&[Complex64::new(mu, 0.0)], &[FloquetTag::Hr], h, (-0.2, 0.2)).unwrap()
    }

    #[test]
    fn model_lattice_closed_form() {
        let h = 0.01;
        let w = SpectralWindow::new(0.0, 0.05, 0.05, 1.0).unwrap();
        let lat = solve_bs(&model(1.0, h), &w).unwrap();
        assert_eq!(lat.len(), 11 * 5);
        for e in &lat.entries {
            let expect = Complex64::new(h * e.m as f64, -h * (e.k[0] as f64 + 0.5));
            assert!((e.z - expect).norm() <= 1e-12 * h, "{e:?}");
            assert!(w.contains(e.z));
        }
        let ms: Vec<i64> = lat.entries.iter().map(|e| e.m).collect();
        assert_eq!((ms[0], ms[ms.len() - 1]), (-5, 5));
    }

    #[test]
    fn zero_c_const_keeps_only_ground_string() {
        let w = SpectralWindow::new(0.0, 0.05, 0.05, 0.0).unwrap();
        let lat = solve_bs(&model(1.0, 0.01), &w).unwrap();
        assert!(!lat.is_empty());
        assert!(lat.entries.iter().all(|e| e.k == vec![0]));
    }

    #[test]
    fn window_outside_family_is_rejected() {
        let w = SpectralWindow::new(5.0, 0.05, 0.05, 1.0).unwrap();
        assert!(matches!(solve_bs(&model(1.0, 0.01), &w), Err(Error::Precondition(_))));
    }

    #[test]
    fn multi_index_count() {
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(3, 0), vec![vec![0, 0, 0]]);
        assert_eq!(k_bound(1.0, 0.01), 4);
        assert_eq!(k_bound(0.0, 0.01), 0);
    }
}
