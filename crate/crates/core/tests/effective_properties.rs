use locstat_core::effective::*;
use locstat_core::galerkin::GalerkinBasis;
use locstat_core::linalg::{Mat, SVec};
use locstat_core::medium::{MediumSpec, Potential, Preset};

const LADDER: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

fn sec4(delta: f64) -> MediumSpec {
    MediumSpec::new(Preset::Sec4 { c: 2.0, delta }, 4.0, 10.0).unwrap()
}

fn separable2() -> MediumSpec {
    MediumSpec::new(Preset::Separable { dim: 2, alpha: 2.0, beta: 1.0, gamma: 0.5, eta: 0.3 }, 4.0, 10.0).unwrap()
}

#[test]
fn homogenized_matrix_is_sandwiched() {
    for m in [separable2(), sec4(1.0)] {
        let basis = GalerkinBasis::new(2, 6);
        let (t, geo) = tabulate(&m, &basis, &YGrid::cube(2, -2.0, 2.0, 5), &LADDER).unwrap();
        assert!(geo.pass, "{} {geo:?}", m.preset_name());
        let v = variational_a_tilde(&m, &basis).unwrap();
        let r = sandwich_check(&t, &v.matrix(2), m.control_constant, 50, 11);
        assert!(r.pass, "{} {r:?}", m.preset_name());
    }
}

#[test]
fn y_independent_symmetric_media_match_variational() {
    let sine = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let b1 = GalerkinBasis::new(1, 64);
    let a = effective_a(&sine, &b1, &[0.0], &LADDER).unwrap();
    let v = variational_a_tilde(&sine, &b1).unwrap();
    assert!((a.m[0][0] - v.a_tilde[0]).abs() < 1e-6);

    let s = sec4(0.0);
    let b2 = GalerkinBasis::new(2, 6);
    let a = effective_a(&s, &b2, &[0.5, 0.5], &LADDER).unwrap();
    let v = variational_a_tilde(&s, &b2).unwrap();
    assert!(a.sub(&v.matrix(2)).max_abs() < 1e-6);
}

#[test]
fn kernel_is_shared_by_antisymmetric_part() {
    let (t, geo) = tabulate(&sec4(1.0), &GalerkinBasis::new(2, 8), &YGrid::cube(2, -2.0, 2.0, 5), &LADDER).unwrap();
    assert_eq!(geo.kernel_dim, 1);
    assert!(geo.worst_h_kernel <= 1e-8);
    assert!(geo.worst_angle <= ANGLE_TOL);
    let k = SVec::from_slice(&t.kernel_basis[0]);
    let v = SVec::from_slice(&[2.0, -1.0]);
    assert!((k.dot(&v).abs() / v.norm() - 1.0).abs() < 1e-12);
    // B̄ lies in the orthogonal complement of the kernel.
    for p in 0..t.b_bar.len() {
        assert!(t.b_at(p).dot(&k).abs() <= 1e-8 * t.b_at(p).norm().max(1.0));
    }
}

#[test]
fn slow_drift_of_constant_table_is_linear() {
    let grid = YGrid::cube(2, -2.0, 2.0, 6);
    let a0 = Mat::from_row_major(2, &[2.0, 0.5, 0.5, 1.0]);
    let h0 = Mat::from_row_major(2, &[0.0, 0.3, -0.3, 0.0]);
    let n = grid.len();
    let (t, geo) = EffectiveTensors::from_points(&grid, &vec![a0; n], &vec![h0; n], Potential::Gaussian).unwrap();
    assert!(geo.pass);
    for (p, y) in grid.points().iter().enumerate() {
        // B̄ = -(Ā + H̄)ᵀ y for ∇V = y.
        let want = a0.add(&h0).transpose().mul_vec(y).scale(-1.0);
        assert!(t.b_at(p).sub(&want).norm() < 1e-12);
    }
}

#[test]
fn interpolation_reproduces_cubics() {
    let grid = YGrid::cube(1, -1.0, 1.0, 9);
    let f = |y: f64| 3.0 + y + 0.5 * y * y * y;
    let pts = grid.points();
    let a: Vec<Mat> = pts.iter().map(|y| Mat::scalar(1, f(y.v[0]))).collect();
    let h = vec![Mat::zeros(1); pts.len()];
    let (t, _) = EffectiveTensors::from_points(&grid, &a, &h, Potential::Flat).unwrap();
    let it = TensorInterpolator::new(&t);
    for y in [-1.0, -0.93, -0.3, 0.0, 0.41, 0.999, 1.0] {
        let v = it.at(&SVec::from_slice(&[y])).unwrap();
        assert!((v.a_bar.m[0][0] - f(y)).abs() < 1e-12, "{y}");
    }
    assert!(it.at(&SVec::from_slice(&[1.01])).is_none());
}

#[test]
fn second_differences_stay_bounded() {
    let m = separable2();
    let basis = GalerkinBasis::new(2, 6);
    let coarse = tabulate(&m, &basis, &YGrid::cube(2, -1.0, 1.0, 5), &LADDER).unwrap().1;
    let fine = tabulate(&m, &basis, &YGrid::cube(2, -1.0, 1.0, 9), &LADDER).unwrap().1;
    assert!(coarse.second_difference_bound.is_finite());
    assert!(fine.second_difference_bound <= 2.0 * coarse.second_difference_bound + 1e-9);
}

#[test]
fn mismatched_grid_is_rejected() {
    let r = tabulate(&sec4(0.0), &GalerkinBasis::new(2, 4), &YGrid::cube(1, -1.0, 1.0, 5), &LADDER);
    assert!(r.is_err());
    let r = tabulate(&sec4(0.0), &GalerkinBasis::new(2, 4), &YGrid::cube(2, -1.0, 1.0, 2), &LADDER);
    assert!(r.is_err());
}
