use locstat_core::corrector::*;
use locstat_core::diagnostics::regularity_suite;
use locstat_core::galerkin::{GalerkinBasis, ModeKind};
use locstat_core::linalg::SVec;
use locstat_core::medium::{MediumSpec, Preset};
use nalgebra::DVector;
use proptest::prelude::*;

fn separable2() -> MediumSpec {
    MediumSpec::new(Preset::Separable { dim: 2, alpha: 2.0, beta: 1.0, gamma: 0.5, eta: 0.3 }, 4.0, 10.0).unwrap()
}

fn sec4_mod() -> MediumSpec {
    MediumSpec::new(Preset::Sec4 { c: 2.0, delta: 1.0 }, 4.0, 10.0).unwrap()
}

fn sine1d() -> MediumSpec {
    MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    // B(φ, φ) ≥ M⁻¹ ‖φ‖₁²: H drops out of the quadratic form.
    #[test]
    fn bilinear_form_is_coercive(seed in proptest::collection::vec(-1.0f64..1.0, 25)) {
        for m in [separable2(), sec4_mod()] {
            let basis = GalerkinBasis::new(2, 2);
            let op = Operator::prepare(&m, &basis, &[0.4, -0.2], OperatorKind::Full).unwrap();
            let n = basis.len();
            let c: Vec<f64> = (0..n).map(|i| seed[i % seed.len()] * (1.0 + i as f64).sqrt().recip()).collect();
            let v = DVector::from_column_slice(&c);
            let form = (v.transpose() * op.system(0.0) * &v)[(0, 0)];
            let h1 = op.h1_sq(&c);
            prop_assert!(form >= h1 / m.control_constant - 1e-12 * h1.abs().max(1.0));
        }
    }
}

#[test]
fn symmetric_operator_matrix_is_symmetric() {
    for m in [separable2(), sec4_mod()] {
        let basis = GalerkinBasis::new(2, 4);
        for kind in [OperatorKind::Symmetric, OperatorKind::SymmetricViscous { n: 10.0 }] {
            let a = Operator::prepare(&m, &basis, &[0.3, 0.1], kind).unwrap().system(1e-2);
            let scale = a.amax();
            assert!((&a - a.transpose()).amax() <= 1e-12 * scale);
        }
    }
}

#[test]
fn constant_shift_changes_no_gradient() {
    let m = separable2();
    let basis = GalerkinBasis::new(2, 4);
    let p = ResolventProblem::new(&[0.2, 0.5], 1e-2, OperatorKind::Full, RhsKind::Drift { i: 0 });
    let s = solve_resolvent(&m, &p, &basis).unwrap();
    let mut shifted = s.clone();
    let k0 = basis.index_of(&[0, 0], ModeKind::Const).unwrap();
    shifted.coefficients[k0] += 3.7;
    for x in [[0.1, 0.2], [2.0, 5.0], [4.4, 1.3]] {
        let x = SVec::from_slice(&x);
        let a = s.directional_gradient(&m, &basis, &x);
        let b = shifted.directional_gradient(&m, &basis, &x);
        assert!(a.sub(&b).norm() <= 1e-12);
    }
}

#[test]
fn residual_and_energy_identity_are_small() {
    for m in [separable2(), sec4_mod()] {
        let basis = GalerkinBasis::new(2, 6);
        for kind in [OperatorKind::Full, OperatorKind::Symmetric, OperatorKind::FullViscous { n: 100.0 }] {
            let p = ResolventProblem::new(&[0.0, 0.3], 1e-3, kind, RhsKind::Drift { i: 1 });
            let s = solve_resolvent(&m, &p, &basis).unwrap();
            assert!(s.residual <= 1e-12, "{kind:?} {:e}", s.residual);
            assert!(s.energy_defect <= 1e-10, "{kind:?} {:e}", s.energy_defect);
        }
    }
}

#[test]
fn energy_stays_bounded_along_lambda_ladder() {
    for m in [separable2(), sec4_mod(), sine1d()] {
        let basis = GalerkinBasis::new(m.dim(), if m.dim() == 1 { 32 } else { 6 });
        let y = vec![0.3; m.dim()];
        for kind in [OperatorKind::Full, OperatorKind::Symmetric] {
            let op = Operator::prepare(&m, &basis, &y, kind).unwrap();
            let e: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&l| {
                    let s = op.solve(&basis, l, &RhsKind::Drift { i: 0 }).unwrap();
                    s.energy.lambda_l2 + s.energy.h1
                })
                .collect();
            // Bounded by the small-λ value; the energies increase towards it.
            let last = *e.last().unwrap();
            assert!(e.iter().all(|v| *v > 0.0 && *v <= 1.1 * last), "{} {kind:?} {e:?}", m.preset_name());
        }
    }
}

#[test]
fn regularity_suite_passes_on_separable_media() {
    for m in [
        separable2(),
        MediumSpec::new(Preset::Separable { dim: 1, alpha: 2.0, beta: 1.0, gamma: 0.5, eta: 0.0 }, 4.0, 10.0).unwrap(),
    ] {
        let basis = GalerkinBasis::new(m.dim(), if m.dim() == 1 { 32 } else { 6 });
        let t = regularity_suite(
            &m,
            &basis,
            &vec![0.3; m.dim()],
            &[1e-1, 1e-2, 1e-3],
            &[1e-2, 1e-3],
            &[1e1, 1e2, 1e3, 1e4],
        )
        .unwrap();
        assert!(t.pass, "{}: {t:?}", m.preset_name());
        if m.dim() == 1 {
            assert_eq!(t.symmetric_match, Some(true));
        }
    }
}

#[test]
fn y_derivatives_agree_across_steps() {
    let m = separable2();
    let basis = GalerkinBasis::new(2, 4);
    let p = ResolventProblem::new(&[0.3, -0.4], 1e-2, OperatorKind::Full, RhsKind::Drift { i: 0 });
    let a = corrector_y_derivatives(&m, &p, &basis, 1e-3).unwrap();
    let b = corrector_y_derivatives(&m, &p, &basis, 1e-4).unwrap();
    for (da, db) in a.iter().zip(&b) {
        let gap = da.first.iter().zip(&db.first).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let size = da.first.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
        assert!(gap / size < 1e-5, "direction {} gap {gap:e}", da.direction);
    }
    assert!(corrector_y_derivatives(&m, &p, &basis, 0.1).is_err());
}

#[test]
fn viscous_correctors_converge() {
    let m = separable2();
    let basis = GalerkinBasis::new(2, 4);
    let p = ResolventProblem::new(&[0.3, -0.4], 1e-2, OperatorKind::Full, RhsKind::Drift { i: 1 });
    let v = viscosity_consistency(&m, &p, &basis, &[1e1, 1e2, 1e3, 1e4]).unwrap();
    assert!(v.h1_gap.windows(2).all(|w| w[1] < w[0]));
    assert!(v.viscous_energy.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn bad_inputs_are_rejected() {
    let m = sine1d();
    let basis = GalerkinBasis::new(1, 8);
    let p = ResolventProblem::new(&[0.0], 0.0, OperatorKind::Full, RhsKind::Drift { i: 0 });
    assert!(solve_resolvent(&m, &p, &basis).is_err());
    assert!(check_ladder(&[1e-1, 1e-2]).is_err());
    assert!(check_ladder(&[1e-1, 5e-2, 1e-3]).is_err());
    assert!(check_ladder(&[1e-1, 1e-2, 1e-3]).is_ok());
    assert!(check_decay(&[1.0, 2.0, 0.5]).is_err());
}
