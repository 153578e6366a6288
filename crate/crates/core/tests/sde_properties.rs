use locstat_core::diagnostics::{energy_distance, split_half, Estimate};
use locstat_core::effective::{EffectiveTensors, YGrid};
use locstat_core::linalg::Mat;
use locstat_core::medium::{MediumSpec, Potential, Preset};
use locstat_core::sde::*;
use locstat_core::Error;

fn constant(dim: usize, sigma: Vec<f64>, h: Option<Vec<f64>>) -> MediumSpec {
    MediumSpec::new(Preset::Constant { dim, sigma, h, sigma_tilde: None }, 2.0, 10.0).unwrap()
}

fn coord(ens: &TrajectoryEnsemble, c: usize) -> Vec<f64> {
    (0..ens.paths()).map(|p| ens.state(p, ens.times.len() - 1)[c]).collect()
}

fn within(e: Estimate, target: f64, k: f64) -> bool {
    (e.value - target).abs() <= k * e.se
}

#[test]
fn reruns_are_bit_identical() {
    let m = MediumSpec::new(Preset::Sec4 { c: 2.0, delta: 1.0 }, 4.0, 10.0).unwrap();
    let cfg = SimConfig::new(0.3, 0.2, 0.05, 64, 9, InitialLaw::Point { x0: vec![0.1, -0.2] });
    let a = simulate_xeps(&cfg, &m).unwrap();
    let b = simulate_xeps(&cfg, &m).unwrap();
    assert_eq!(a, b);
    let c = simulate_xeps(&SimConfig { seed: 10, ..cfg.clone() }, &m).unwrap();
    assert_ne!(a.states, c.states);
}

#[test]
fn unit_scale_equals_inviscid_run() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let cfg = SimConfig::new(1.0, 0.5, 0.01, 32, 4, InitialLaw::Point { x0: vec![0.3] });
    let a = simulate_xeps(&cfg, &m).unwrap();
    let b = simulate_xn(&cfg, &m).unwrap();
    assert_eq!(a.states, b.states);
}

#[test]
fn paths_do_not_depend_on_ensemble_size() {
    let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
    let cfg = SimConfig::new(0.5, 0.3, 0.02, 40, 4, InitialLaw::Density);
    let big = simulate_xeps(&cfg, &m).unwrap();
    let small = simulate_xeps(&SimConfig { paths: 10, ..cfg.clone() }, &m).unwrap();
    assert_eq!(&big.states[..small.states.len()], &small.states[..]);
}

// dX = -s² X dt + s dW: mean x₀e^{-s²T}, variance (1 - e^{-2s²T})/2.
#[test]
fn constant_medium_is_ornstein_uhlenbeck() {
    let s: f64 = 1.3;
    let m = constant(1, vec![s], None);
    let (x0, t) = (1.5, 0.4);
    let cfg = SimConfig::new(0.2, t, 0.02, 20_000, 5, InitialLaw::Point { x0: vec![x0] });
    let ens = simulate_xeps(&cfg, &m).unwrap();
    let xs = coord(&ens, 0);
    let rate = s * s;
    let mean = x0 * (-rate * t).exp();
    let var = (1.0 - (-2.0 * rate * t).exp()) / 2.0;
    assert!(within(Estimate::from_samples(&xs), mean, 4.0));
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    assert!(within(Estimate::from_samples(&sq), var, 4.0));
}

// With σ = 0 only the viscous noise is left: dX = -X/n dt + n^{-1/2} dW.
#[test]
fn viscous_noise_has_variance_over_n() {
    let m = constant(1, vec![0.0], None);
    let n = 20.0;
    let t = 1.0;
    let cfg = SimConfig {
        viscosity: Some(n),
        ..SimConfig::new(0.5, t, 0.05, 20_000, 6, InitialLaw::Point { x0: vec![0.0] })
    };
    let xs = coord(&simulate_xn(&cfg, &m).unwrap(), 0);
    let var = (1.0 - (-2.0 * t / n).exp()) / 2.0;
    assert!((var - t / n).abs() < 0.06 * var);
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    assert!(within(Estimate::from_samples(&sq), var, 4.0));
}

#[test]
fn zero_noise_matches_euler_ode() {
    let hm = [0.0, 0.4, -0.4, 0.0];
    let m = constant(2, vec![0.0; 4], Some(hm.to_vec()));
    let cfg = SimConfig::new(0.5, 1.0, 0.1, 3, 1, InitialLaw::Point { x0: vec![1.0, -0.5] });
    let ens = simulate_xeps(&cfg, &m).unwrap();
    let h = Mat::from_row_major(2, &hm);
    // c = -(H)ᵀ y.
    let dt = ens.meta.dt;
    let per = ens.meta.steps / (ens.times.len() - 1);
    let mut y = [1.0f64, -0.5];
    for k in 0..ens.times.len() {
        for p in 0..3 {
            let s = ens.state(p, k);
            assert!((s[0] - y[0]).abs() < 1e-14 && (s[1] - y[1]).abs() < 1e-14);
        }
        for _ in 0..per {
            let c = [-(h.m[0][0] * y[0] + h.m[1][0] * y[1]), -(h.m[0][1] * y[0] + h.m[1][1] * y[1])];
            y = [y[0] + dt * c[0], y[1] + dt * c[1]];
        }
    }
}

#[test]
fn density_sampler_has_gaussian_moments() {
    let xs = sample_initial(Potential::Gaussian, 2, 50_000, 3).unwrap();
    for c in 0..2 {
        let v: Vec<f64> = xs.iter().map(|x| x.v[c]).collect();
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let q: Vec<f64> = v.iter().map(|x| x.powi(4)).collect();
        assert!(within(Estimate::from_samples(&v), 0.0, 4.0));
        assert!(within(Estimate::from_samples(&sq), 0.5, 4.0));
        assert!(within(Estimate::from_samples(&q), 0.75, 4.0));
    }
    assert!(sample_initial(Potential::Flat, 1, 10, 3).is_err());
}

#[test]
fn limit_of_constant_medium_has_same_law() {
    let m = constant(1, vec![1.0], None);
    let grid = YGrid::cube(1, -6.0, 6.0, 25);
    let n = grid.len();
    let (tab, _) = EffectiveTensors::from_points(
        &grid,
        &vec![Mat::scalar(1, 1.0); n],
        &vec![Mat::zeros(1); n],
        Potential::Gaussian,
    )
    .unwrap();
    let cfg = SimConfig::new(0.3, 0.5, 0.01, 4000, 12, InitialLaw::Point { x0: vec![0.5] });
    let a = simulate_xeps(&cfg, &m).unwrap();
    let b = simulate_limit(&cfg, &tab, m.potential).unwrap();
    let d = energy_distance(&a.final_states(), &b.final_states(), 1);
    let null = split_half(&b.final_states(), 1);
    assert!((d.value - null.value).abs() <= 3.0 * (d.se * d.se + null.se * null.se).sqrt());
}

#[test]
fn leaving_the_table_is_flagged() {
    let grid = YGrid::cube(1, -0.2, 0.2, 5);
    let n = grid.len();
    let (tab, _) = EffectiveTensors::from_points(
        &grid,
        &vec![Mat::scalar(1, 1.0); n],
        &vec![Mat::zeros(1); n],
        Potential::Gaussian,
    )
    .unwrap();
    let cfg = SimConfig::new(0.3, 1.0, 0.01, 200, 2, InitialLaw::Point { x0: vec![0.0] });
    match simulate_limit(&cfg, &tab, Potential::Gaussian) {
        Err(Error::SimulationFailure { flagged, total }) => assert!(flagged > 2 && total == 200),
        other => panic!("expected a failure, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let m = constant(1, vec![1.0], None);
    let bad = [
        SimConfig::new(0.0, 1.0, 0.01, 10, 1, InitialLaw::Density),
        SimConfig::new(0.1, -1.0, 0.01, 10, 1, InitialLaw::Density),
        SimConfig::new(0.1, 1.0, 0.01, 0, 1, InitialLaw::Density),
        SimConfig::new(0.1, 1.0, 0.01, 10, 1, InitialLaw::Point { x0: vec![0.0, 0.0] }),
    ];
    for cfg in bad {
        assert!(matches!(simulate_xeps(&cfg, &m), Err(Error::InputDomain(_))), "{cfg:?}");
    }
}
