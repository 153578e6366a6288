//! Closed-form and independently computed reference values.

use locstat_core::corrector::*;
use locstat_core::effective::*;
use locstat_core::galerkin::{GalerkinBasis, ModeKind};
use locstat_core::linalg::Mat;
use locstat_core::medium::{sec4_sigma_tilde, MediumSpec, Preset};

const LADDER: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

fn sine1d() -> MediumSpec {
    MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap()
}

fn sec4(c: f64, delta: f64) -> MediumSpec {
    MediumSpec::new(Preset::Sec4 { c, delta }, 4.0, 10.0).unwrap()
}

fn unit_1d() -> MediumSpec {
    MediumSpec::new(Preset::Constant { dim: 1, sigma: vec![1.0], h: None, sigma_tilde: None }, 1.0, 10.0).unwrap()
}

// Composite midpoint rule on a periodic integrand converges geometrically.
fn periodic_mean(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| f((k as f64 + 0.5) * h)).sum::<f64>() / n as f64
}

#[test]
fn sine1d_matches_harmonic_mean() {
    let harmonic = 1.0 / periodic_mean(|x| 1.0 / (2.0 + x.sin()), 4096);
    assert!((harmonic - 3f64.sqrt()).abs() < 1e-14);
    let b = GalerkinBasis::new(1, 64);
    let p = effective_point(&sine1d(), &b, &[0.0], &LADDER).unwrap();
    assert!((p.a_bar.m[0][0] - harmonic).abs() < 1e-4, "{}", p.a_bar.m[0][0]);
    // Unextrapolated rungs approach the limit from above.
    let errs: Vec<f64> = p.a_ladder.iter().map(|a| a.m[0][0] - harmonic).collect();
    assert!(errs.windows(2).all(|w| w[1].abs() < w[0].abs()));
}

#[test]
fn sine1d_general_coefficients() {
    for (alpha, beta) in [(3.0, 1.0), (1.5, 1.0)] {
        let m = MediumSpec::new(Preset::Sine1d { alpha, beta }, 1.0, 10.0).unwrap();
        let harmonic = 1.0 / periodic_mean(|x| 1.0 / (alpha + beta * x.sin()), 4096);
        let p = effective_point(&m, &GalerkinBasis::new(1, 64), &[0.7], &LADDER).unwrap();
        assert!((p.a_bar.m[0][0] - harmonic).abs() < 1e-4, "alpha {alpha}: {} vs {harmonic}", p.a_bar.m[0][0]);
    }
}

#[test]
fn sine1d_variational_is_harmonic_mean() {
    let v = variational_a_tilde(&sine1d(), &GalerkinBasis::new(1, 64)).unwrap();
    assert!((v.a_tilde[0] - 3f64.sqrt()).abs() < 1e-10);
}

#[test]
fn sec4_identity_factor_gives_control_matrix() {
    let st = sec4_sigma_tilde(2.0);
    let exact = st.mul(&st.transpose());
    assert_eq!(exact.to_row_major(), vec![1.25, 2.5, 2.5, 5.0]);
    let b = GalerkinBasis::new(2, 6);
    for y in [[0.0, 0.0], [0.3, -0.1], [-2.0, 1.5]] {
        let p = effective_point(&sec4(2.0, 0.0), &b, &y, &LADDER).unwrap();
        assert!(p.a_bar.sub(&exact).max_abs() < 1e-8);
        assert!(p.h_bar.max_abs() < 1e-12);
    }
    let v = variational_a_tilde(&sec4(2.0, 0.0), &b).unwrap();
    assert!(v.matrix(2).sub(&exact).max_abs() < 1e-8);
    assert!(v.minimizer_norm < 1e-8);
}

// With σ = σ̃ u(x₁ + y₁) the cell problem reduces to one dimension along the
// first coordinate and Ā = σ̃σ̃* / M[u⁻²].
#[test]
fn sec4_modulated_reduces_to_harmonic_mean() {
    let delta = 1.0;
    let inv_mean = periodic_mean(|s| (1.0 + 0.5 * delta * s.sin()).powi(-2), 4096);
    assert!((inv_mean - (1.0f64 - 0.25).powf(-1.5)).abs() < 1e-12);
    let st = sec4_sigma_tilde(2.0);
    let expect = st.mul(&st.transpose()).scale(1.0 / inv_mean);
    let b = GalerkinBasis::new(2, 8);
    let p = effective_point(&sec4(2.0, delta), &b, &[0.3, -0.1], &LADDER).unwrap();
    assert!(p.a_bar.sub(&expect).max_abs() < 1e-5, "{:e}", p.a_bar.sub(&expect).max_abs());
}

#[test]
fn single_cosine_mode_resolvent() {
    let b = GalerkinBasis::new(1, 4);
    let rhs = RhsKind::SingleMode { k: vec![1], mode: ModeKind::Cos };
    let s = solve_resolvent(&unit_1d(), &ResolventProblem::new(&[0.0], 1.0, OperatorKind::Full, rhs), &b).unwrap();
    let idx = b.index_of(&[1], ModeKind::Cos).unwrap();
    for (i, c) in s.coefficients.iter().enumerate() {
        let want = if i == idx { 2.0 / 3.0 } else { 0.0 };
        assert!((c - want).abs() < 1e-10);
    }
}

#[test]
fn single_mode_viscous_factor() {
    let b = GalerkinBasis::new(2, 3);
    let m = MediumSpec::new(
        Preset::Constant { dim: 2, sigma: vec![1.0, 0.0, 0.0, 1.0], h: None, sigma_tilde: None },
        1.0,
        10.0,
    )
    .unwrap();
    for n in [1.0, 10.0, 1e3] {
        for (k, kind) in [(vec![1, 0], ModeKind::Cos), (vec![1, 2], ModeKind::Sin)] {
            let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            let lambda = 0.5;
            let rhs = RhsKind::SingleMode { k: k.clone(), mode: kind };
            let p = ResolventProblem::new(&[0.0, 0.0], lambda, OperatorKind::FullViscous { n }, rhs);
            let s = solve_resolvent(&m, &p, &b).unwrap();
            let want = 1.0 / (lambda + 0.5 * (1.0 + 1.0 / n) * k2);
            let idx = b.index_of(&k, kind).unwrap();
            assert!((s.coefficients[idx] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn richardson_removes_linear_term() {
    let f = |l: f64| 2.0 + 3.0 * l;
    assert!((richardson(1e-2, f(1e-2), 1e-3, f(1e-3)) - 2.0).abs() < 1e-14);
}

#[test]
fn constant_medium_effective_is_itself() {
    let m = MediumSpec::new(
        Preset::Constant {
            dim: 2,
            sigma: vec![1.0, 0.2, 0.0, 0.7],
            h: Some(vec![0.0, 0.3, -0.3, 0.0]),
            sigma_tilde: None,
        },
        2.0,
        10.0,
    )
    .unwrap();
    let p = effective_point(&m, &GalerkinBasis::new(2, 3), &[0.1, 0.2], &LADDER).unwrap();
    let s = Mat::from_row_major(2, &[1.0, 0.2, 0.0, 0.7]);
    assert!(p.a_bar.sub(&s.mul(&s.transpose())).max_abs() < 1e-12);
    assert!(p.h_bar.sub(&Mat::from_row_major(2, &[0.0, 0.3, -0.3, 0.0])).max_abs() < 1e-12);
}
