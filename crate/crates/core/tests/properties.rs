use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use resonance_core::bs::{solve_bs, LatticeEntry, ResonanceLattice, SemiclassicalAction, SpectralWindow};
use resonance_core::circle_model::{verify_grushin_identity, CircleGrid, Cutoff};
use resonance_core::dynamics::builtins;
use resonance_core::dynamics::{flow, flow_with_variations, symplectic_defect, PhasePoint};
use resonance_core::floquet::{classify, monodromy_at, FloquetTag, DEFAULT_CLASSIFY_TOL};
use resonance_core::model_quantum::{model_resonances, truncated_monodromy_determinant, ModelSpec};
use resonance_core::oracle::{eigenvalues_in_window, scaled_inverted_oscillator_parity, GridSpec1D};
use resonance_core::orbits::find_periodic_orbit;

fn point(v: &[f64]) -> PhasePoint {
    let n = v.len() / 2;
    PhasePoint::new(v[..n].to_vec(), v[n..].to_vec()).unwrap()
}

fn symplectic(d: usize, diag: &[f64], s1: &[f64], s2: &[f64]) -> DMatrix<f64> {
    let sym = |s: &[f64]| DMatrix::from_fn(d, d, |i, j| s[i.min(j) * d + i.max(j)]);
    let (a, b) = (sym(s1), sym(s2));
    let mut upper = DMatrix::identity(2 * d, 2 * d);
    let mut lower = DMatrix::identity(2 * d, 2 * d);
    let mut scale = DMatrix::identity(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            upper[(i, d + j)] = a[(i, j)];
            lower[(d + i, j)] = b[(i, j)];
        }
        scale[(i, i)] = diag[i];
        scale[(d + i, d + i)] = 1.0 / diag[i];
    }
    scale * upper * lower
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_conserved(x in prop::collection::vec(-1.0f64..1.0, 6), t in 0.1f64..5.0) {
        let sys = builtins::semihyp3(SQRT_2);
        let x0 = point(&x);
        let xt = flow(&sys, &x0, t, 1e-12).unwrap();
        let (e0, e1) = (sys.energy(&x0.to_flat()).unwrap(), sys.energy(&xt.to_flat()).unwrap());
        prop_assert!((e1 - e0).abs() <= 1e-9 * (1.0 + e0.abs()), "{e0} → {e1}");
    }

    #[test]
    fn flow_is_symplectic(z in -0.4f64..0.4, p in prop::collection::vec(-0.3f64..0.3, 2), t in 0.1f64..3.0) {
        let sys = builtins::diabolo2();
        let v = flow_with_variations(&sys, &point(&[0.1, z, p[0], p[1]]), t, 1e-12).unwrap();
        let scale = v.jacobian.amax().max(1.0);
        prop_assert!(symplectic_defect(&v.jacobian) / (scale * scale) <= 1e-8);
    }

    #[test]
    fn flow_group_law(x in prop::collection::vec(-1.0f64..1.0, 4), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0) {
        let sys = builtins::hyp2();
        let x0 = point(&x);
        let direct = flow(&sys, &x0, t1 + t2, 1e-12).unwrap().to_flat();
        let split = flow(&sys, &flow(&sys, &x0, t1, 1e-12).unwrap(), t2, 1e-12).unwrap().to_flat();
        let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in direct.iter().zip(&split) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn gradient_matches_differences(x in prop::collection::vec(-0.8f64..0.8, 4)) {
        for sys in [builtins::diabolo2(), builtins::hyp2(), builtins::model(1.3)] {
            let g = sys.gradient(&x).unwrap();
            for i in 0..4 {
                let step = 1e-6;
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += step;
                b[i] -= step;
                let fd = (sys.energy(&a).unwrap() - sys.energy(&b).unwrap()) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{} ∂{i}: {fd} vs {}", sys.label, g[i]);
            }
        }
    }

    #[test]
    fn multipliers_come_in_symmetric_quadruples(
        diag in prop::collection::vec(0.4f64..3.0, 2),
        s1 in prop::collection::vec(-1.0f64..1.0, 4),
        s2 in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let m = symplectic(2, &diag, &s1, &s2);
        if let Ok(f) = classify(&m, DEFAULT_CLASSIFY_TOL) {
            prop_assert_eq!(f.multipliers.len(), 4);
            prop_assert_eq!(f.exponents.len(), 2);
            for lam in &f.multipliers {
                for target in [lam.conj(), 1.0 / lam] {
                    let d = f.multipliers.iter().map(|m| (m - target).norm()).fold(f64::INFINITY, f64::min);
                    prop_assert!(d <= 1e-6 * target.norm().max(1.0), "{lam} lacks partner {target}");
                }
            }
        }
    }

    #[test]
    fn multipliers_do_not_depend_on_the_section(frac in 0.05f64..0.95) {
        let sys = builtins::semihyp3(SQRT_2);
        let o = find_periodic_orbit(&sys, &point(&[1.2, 0.0, 0.0, 0.0, 0.0, 0.0]), 2.0 * PI, 1e-11, 40).unwrap();
        let at = ((o.samples.len() - 1) as f64 * frac) as usize;
        let base = classify(&monodromy_at(&sys, &o.x0.to_flat(), o.period, 1e-12).unwrap(), DEFAULT_CLASSIFY_TOL).unwrap();
        let moved = classify(&monodromy_at(&sys, &o.samples[at].1.to_flat(), o.period, 1e-12).unwrap(), DEFAULT_CLASSIFY_TOL).unwrap();
        for (a, b) in base.multipliers.iter().zip(&moved.multipliers) {
            prop_assert!((a - b).norm() <= 1e-6 * a.norm().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn model_lattice_is_ordered_and_inside(mu in 0.3f64..2.5, e0 in -0.05f64..0.05, eps0 in 0.005f64..0.05) {
        let h = 0.01;
        let w = SpectralWindow::with_default_depth(e0, eps0, h, 1.0).unwrap();
        let action = SemiclassicalAction::from_model(&[Complex64::new(mu, 0.0)], &[FloquetTag::Hr], h, (-0.2, 0.2)).unwrap();
        let bs = solve_bs(&action, &w).unwrap();
        let exact = model_resonances(&ModelSpec::hyperbolic(mu, h).unwrap(), &w).unwrap();
        prop_assert_eq!(bs.len(), exact.len());
        for pair in bs.entries.windows(2) {
            prop_assert!((pair[0].m, &pair[0].k) < (pair[1].m, &pair[1].k));
        }
        for (a, b) in bs.entries.iter().zip(&exact.entries) {
            prop_assert!(w.contains(a.z));
            prop_assert!((a.z - b.z).norm() <= 1e-12 * h);
        }
    }

    #[test]
    fn determinant_vanishes_exactly_on_the_lattice(m in -20i64..20, k in 0u32..4, off in 0.05f64..0.45) {
        let (h, mu) = (0.02, 0.8);
        let spec = ModelSpec::hyperbolic(mu, h).unwrap();
        let z = Complex64::new(m as f64 * h, -mu * h * (k as f64 + 0.5));
        // factors with k' < k are exponentially large, so compare with a nearby point
        let away = z + Complex64::new(off * h, 0.0);
        let (at, near) = (truncated_monodromy_determinant(&spec, z, 4).norm(), truncated_monodromy_determinant(&spec, away, 4).norm());
        prop_assert!(near > 0.0 && at <= 1e-12 * near, "|D(z)| = {at:e}, |D(z + δ)| = {near:e}");
    }

    #[test]
    fn lattice_csv_round_trip(
        rows in prop::collection::btree_map((-50i64..50, 0u32..6, 0u32..6), (-1.0f64..1.0, -1.0f64..0.0, 0.0f64..1e-10), 0..30)
    ) {
        let entries: Vec<LatticeEntry> = rows
            .iter()
            .map(|(&(m, a, b), &(re, im, r))| LatticeEntry {
                m,
                k: vec![a, b],
                z: Complex64::new(re, im),
                newton_residual: r,
                multiplicity: 1,
            })
            .collect();
        let lattice = ResonanceLattice::new(entries);
        let mut buf = Vec::new();
        lattice.write_csv(&mut buf, 2).unwrap();
        prop_assert_eq!(ResonanceLattice::read_csv(buf.as_slice()).unwrap(), lattice);
    }
}

#[test]
fn grushin_residual_converges_under_refinement() {
    // real z, residual well above the floor at the coarse grids
    let h = 0.1;
    for z in [0.023, 0.061] {
        let z = Complex64::new(z, 0.0);
        let residual = |n: usize| {
            let grid = CircleGrid::new(n, h).unwrap();
            let chi = Cutoff::centered(&grid, 0.6).unwrap();
            verify_grushin_identity(&grid, z, &chi).unwrap()
        };
        let (r1, r2) = (residual(128), residual(256));
        assert!(r1 >= 4.0 * r2, "z={z}: {r1:e} → {r2:e}");
    }
}

#[test]
fn finite_difference_eigenvalues_converge_at_second_order() {
    let h = 0.1;
    let w = SpectralWindow::new(0.0, 0.1 * h, 6.0 * h, 1.0).unwrap();
    let target = |k: usize| Complex64::new(0.0, -h * (2 * k + 1) as f64);
    let string = |n: usize| {
        let ev = eigenvalues_in_window(
            &scaled_inverted_oscillator_parity(&GridSpec1D::new(1.5, n, PI / 4.0, h).unwrap()).unwrap(),
            &w,
        )
        .unwrap()
        .eigenvalues;
        (0..3)
            .map(|k| *ev.iter().min_by(|a, b| (*a - target(k)).norm().total_cmp(&(*b - target(k)).norm())).unwrap())
            .collect::<Vec<_>>()
    };
    // spacing 2l/(n+1) halves from n=255 to 511 to 1023
    let (a, b, c) = (string(255), string(511), string(1023));
    for k in 0..3 {
        let (d1, d2) = ((b[k] - a[k]).norm(), (c[k] - b[k]).norm());
        assert!(d1 <= 4.5 * d2 && d1 >= 3.5 * d2, "k={k}: successive changes {d1:e}, {d2:e}");
    }
}
