use locstat_core::diagnostics::*;
use locstat_core::linalg::SVec;
use locstat_core::medium::{MediumSpec, Preset};
use locstat_core::sde::{simulate_xeps, InitialLaw, SimConfig, Simulator};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn normal_sample(n: usize, mean: f64, seed: u64) -> Vec<SVec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            SVec::from_slice(&[mean + z])
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_distance_is_exactly_symmetric(
        a in proptest::collection::vec(-5.0f64..5.0, 40..120),
        b in proptest::collection::vec(-5.0f64..5.0, 40..120),
        seed in 0u64..1000,
    ) {
        let a: Vec<SVec> = a.chunks(2).filter(|c| c.len() == 2).map(SVec::from_slice).collect();
        let b: Vec<SVec> = b.chunks(2).filter(|c| c.len() == 2).map(SVec::from_slice).collect();
        let ab = energy_distance(&a, &b, seed);
        let ba = energy_distance(&b, &a, seed);
        prop_assert_eq!(ab.value.to_bits(), ba.value.to_bits());
        prop_assert_eq!(ab.se.to_bits(), ba.se.to_bits());
        let aa = energy_distance(&a, &a, seed);
        prop_assert_eq!(aa.value, 0.0);
    }
}

#[test]
fn separated_laws_stand_out_from_null() {
    let x = normal_sample(10_000, 0.0, 1);
    let y = normal_sample(10_000, 1.0, 2);
    let d = energy_distance(&x, &y, 3);
    let null = split_half(&x, 3);
    assert!(d.value > 0.0);
    assert!(d.value > 10.0 * null.value.abs());
    assert!(null.value.abs() <= 3.0 * null.se);
    // 2E|X - Y| - E|X - X'| - E|Y - Y'| with X - Y ~ N(-1, 2) and X - X' ~ N(0, 2).
    let root_pi = std::f64::consts::PI.sqrt();
    let exact = 2.0 * (2.0 / root_pi * (-0.25f64).exp() + erf_half()) - 4.0 / root_pi;
    assert!((d.value - exact).abs() <= 4.0 * d.se, "{} vs {exact}", d.value);
}

// E|N(1, 2)| = 2/√π e^{-1/4} + erf(1/2).
fn erf_half() -> f64 {
    0.520_499_877_813_046_5
}

#[test]
fn trend_needs_two_standard_errors() {
    let a = Estimate { value: 1.0, se: 0.1 };
    assert!(trend(a, Estimate { value: 0.6, se: 0.1 }).pass);
    assert!(!trend(a, Estimate { value: 0.8, se: 0.1 }).pass);
    assert!(!trend(Estimate { value: 0.5, se: 0.0 }, Estimate { value: 0.5, se: 0.0 }).pass);
}

#[test]
fn slow_observable_has_no_ergodic_error() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let cfg = SimConfig::new(0.3, 0.5, 0.05, 50, 3, InitialLaw::Point { x0: vec![0.2] });
    let sim = Simulator::two_scale(&cfg, &m).unwrap();
    let e = ergodic_sup_error(&sim, Observable::Slow).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.se, 0.0);
    let e = ergodic_sup_error(&sim, Observable::SinWeighted).unwrap();
    assert!(e.value > 0.0);
}

#[test]
fn invariant_check_requires_density_start() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let cfg = SimConfig::new(0.3, 0.5, 0.05, 200, 3, InitialLaw::Point { x0: vec![0.2] });
    let ens = simulate_xeps(&cfg, &m).unwrap();
    assert!(invariant_measure_check(&ens, &[0.5]).is_err());
    let ens = simulate_xeps(&SimConfig { initial: InitialLaw::Density, ..cfg }, &m).unwrap();
    assert!(invariant_measure_check(&ens, &[0.33]).is_err());
    assert!(invariant_measure_check(&ens, &[0.5]).is_ok());
}

#[test]
fn weak_distance_checks_inputs() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let cfg = SimConfig::new(0.3, 0.5, 0.05, 150, 3, InitialLaw::Point { x0: vec![0.2] });
    let a = simulate_xeps(&cfg, &m).unwrap();
    let b = simulate_xeps(&SimConfig { horizon: 0.6, ..cfg.clone() }, &m).unwrap();
    assert!(weak_distance(&a, &b, 1).is_err());
    let c = simulate_xeps(&SimConfig { paths: 50, ..cfg }, &m).unwrap();
    assert!(weak_distance(&a, &c, 1).is_err());
}

#[test]
fn regularity_table_for_sine_medium() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let basis = locstat_core::galerkin::GalerkinBasis::new(1, 32);
    let t = regularity_suite(&m, &basis, &[0.3], &[1e-1, 1e-2, 1e-3], &[1e-2, 1e-3], &[1e1, 1e2, 1e3, 1e4]).unwrap();
    assert!(t.pass, "{t:?}");
    assert_eq!(t.symmetric_match, Some(true));
}
