//! Ensemble and table diagnostics: energy distance, SE-guarded trends,
//! kernel confinement, ergodic averages, invariant moments and the
//! corrector regularity table.

use crate::corrector::{
    check_ladder, corrector_y_derivatives, solve_resolvent, viscosity_consistency, Operator, OperatorKind,
    ResolventProblem, RhsKind, ViscosityDecay,
};
use crate::error::{Error, Result};
use crate::galerkin::GalerkinBasis;
use crate::linalg::SVec;
use crate::medium::MediumSpec;
use crate::sde::{PathObserver, Simulator, TrajectoryEnsemble};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Number of disjoint groups behind every energy-distance standard error.
pub const GROUPS: usize = 20;
/// Cap on the number of pair evaluations per distance.
pub const PAIR_CAP: usize = 1_000_000;
/// Trend separation (combined standard errors) required to pass.
pub const TREND_SE: f64 = 2.0;
/// Null band (standard errors) for agreement checks.
pub const NULL_SE: f64 = 3.0;

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate { value: 0.0, se: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate { value: mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Estimate { value: mean, se: libm::sqrt(var / n) }
    }

    /// `|value - target| <= k se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }
}

fn cmp_points(a: &[SVec], b: &[SVec]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        for i in 0..x.n {
            match x.v[i].to_bits().cmp(&y.v[i].to_bits()) {
                Ordering::Equal => {}
                o => return o,
            }
        }
    }
    a.len().cmp(&b.len())
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|` from grouped U-statistics.
///
/// Samples are dealt into [`GROUPS`] disjoint groups by index. Inside a group
/// of `n` points per side the symmetric kernel
/// `|a_i-b_j| + |a_j-b_i| - |a_i-a_j| - |b_i-b_j|` is averaged over all
/// index pairs `i < j`, or over `PAIR_CAP / GROUPS` seeded random pairs when
/// there are more. Unequal sample sizes are truncated to the shorter one.
/// Inputs are put in a canonical order first, which makes the estimate
/// exactly symmetric; identical inputs give exactly zero.
pub fn energy_distance(a: &[SVec], b: &[SVec], seed: u64) -> Estimate {
    let (a, b) = if cmp_points(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let budget = (PAIR_CAP / GROUPS).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(GROUPS);
    let n_all = a.len().min(b.len());
    for g in 0..GROUPS {
        let ga: Vec<&SVec> = a[..n_all].iter().skip(g).step_by(GROUPS).collect();
        let gb: Vec<&SVec> = b[..n_all].iter().skip(g).step_by(GROUPS).collect();
        let n = ga.len();
        if n < 2 {
            continue;
        }
        let kernel = |i: usize, j: usize| {
            ga[i].sub(gb[j]).norm() + ga[j].sub(gb[i]).norm() - ga[i].sub(ga[j]).norm() - gb[i].sub(gb[j]).norm()
        };
        let all = n * (n - 1) / 2;
        let mut sum = 0.0;
        let count = if all <= budget {
            for i in 0..n {
                for j in i + 1..n {
                    sum += kernel(i, j);
                }
            }
            all
        } else {
            for _ in 0..budget {
                let (i, j) = loop {
                    let i = uniform(&mut rng, n);
                    let j = uniform(&mut rng, n);
                    if i != j {
                        break (i, j);
                    }
                };
                sum += kernel(i, j);
            }
            budget
        };
        stats.push(sum / count as f64);
    }
    Estimate::from_samples(&stats)
}

/// Alias used by the CLI: distance between the marginals at save index `k`.
pub fn weak_distance(a: &TrajectoryEnsemble, b: &TrajectoryEnsemble, seed: u64) -> Result<Estimate> {
    if (a.horizon() - b.horizon()).abs() > 1e-12 * a.horizon().abs().max(1.0) {
        return Err(Error::Precondition("ensembles have different horizons".to_string()));
    }
    if a.paths() < 100 || b.paths() < 100 {
        return Err(Error::Precondition("energy distance needs at least 100 paths per ensemble".to_string()));
    }
    Ok(energy_distance(&a.final_states(), &b.final_states(), seed))
}

/// Distance between the even- and odd-indexed halves of one sample.
pub fn split_half(x: &[SVec], seed: u64) -> Estimate {
    let even: Vec<SVec> = x.iter().step_by(2).copied().collect();
    let odd: Vec<SVec> = x.iter().skip(1).step_by(2).copied().collect();
    energy_distance(&even, &odd, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trend {
    /// `(first - last) / sqrt(se_first² + se_last²)`.
    pub separation: f64,
    pub pass: bool,
}

pub fn trend(first: Estimate, last: Estimate) -> Trend {
    let se = libm::sqrt(first.se * first.se + last.se * last.se);
    let diff = first.value - last.value;
    let separation = if se > 0.0 {
        diff / se
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Trend { separation, pass: separation >= TREND_SE }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LadderEntry {
    pub parameter: f64,
    pub value: f64,
    pub se: f64,
}

/// A metric tabulated along a refinement ladder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub metric: String,
    pub entries: Vec<LadderEntry>,
    /// Split-half null of the reference ensemble, when relevant.
    pub null: Option<Estimate>,
    pub trend: Trend,
    /// Every entry within `NULL_SE` combined standard errors of the null.
    pub within_null: Option<bool>,
    pub pass: bool,
}

impl ConvergenceReport {
    /// `expect_trend` selects the trend test; otherwise the ladder must stay
    /// inside the null band.
    pub fn from_entries(metric: &str, entries: Vec<LadderEntry>, null: Option<Estimate>, expect_trend: bool) -> Self {
        let est = |e: &LadderEntry| Estimate { value: e.value, se: e.se };
        let t = match (entries.first(), entries.last()) {
            (Some(f), Some(l)) => trend(est(f), est(l)),
            _ => Trend { separation: 0.0, pass: false },
        };
        let within_null = null.map(|n| {
            entries.iter().all(|e| {
                let se = libm::sqrt(e.se * e.se + n.se * n.se);
                (e.value - n.value).abs() <= NULL_SE * se
            })
        });
        let pass = if expect_trend { t.pass } else { within_null.unwrap_or(false) };
        ConvergenceReport { metric: metric.to_string(), entries, null, trend: t, within_null, pass }
    }
}

/// Energy distances of two-scale ensembles (one per ε, same order) to a limit
/// ensemble.
pub fn convergence_report(
    eps: &[f64],
    ensembles: &[TrajectoryEnsemble],
    limit: &TrajectoryEnsemble,
    seed: u64,
    expect_trend: bool,
) -> Result<ConvergenceReport> {
    if eps.len() < 3 || eps.len() != ensembles.len() {
        return Err(Error::Precondition("need one ensemble per epsilon and at least 3 epsilons".to_string()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("epsilon ladder must decrease".to_string()));
    }
    let entries = eps
        .iter()
        .zip(ensembles)
        .map(|(&e, ens)| {
            let d = weak_distance(ens, limit, seed)?;
            Ok(LadderEntry { parameter: e, value: d.value, se: d.se })
        })
        .collect::<Result<Vec<_>>>()?;
    let null = split_half(&limit.final_states(), seed);
    Ok(ConvergenceReport::from_entries("energy_distance", entries, Some(null), expect_trend))
}

/// Sequential driver: simulates every ε and the limit, then compares.
pub fn convergence_ladder(
    medium: &MediumSpec,
    tensors: &crate::effective::EffectiveTensors,
    eps: &[f64],
    config: &crate::sde::SimConfig,
    expect_trend: bool,
) -> Result<ConvergenceReport> {
    let ens = eps
        .iter()
        .map(|&e| crate::sde::simulate_xeps(&crate::sde::SimConfig { epsilon: e, ..config.clone() }, medium))
        .collect::<Result<Vec<_>>>()?;
    let limit = crate::sde::simulate_limit(config, tensors, medium.potential)?;
    convergence_report(eps, &ens, &limit, config.seed, expect_trend)
}

/// `max |⟨X_t - x₀, k⟩|` over paths, saved times and kernel vectors.
pub fn kernel_confinement(ens: &TrajectoryEnsemble, kernel: &[Vec<f64>], x0: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 0..ens.paths() {
        for k in 0..ens.times.len() {
            let s = ens.state(p, k);
            for kv in kernel {
                let proj: f64 = s.iter().zip(x0).zip(kv).map(|((x, o), v)| (x - o) * v).sum();
                worst = worst.max(proj.abs());
            }
        }
    }
    worst
}

/// Sample variance of `⟨X_T, k⟩`.
pub fn kernel_variance(ens: &TrajectoryEnsemble, k: &[f64]) -> Estimate {
    let last = ens.times.len() - 1;
    let proj: Vec<f64> = (0..ens.paths()).map(|p| ens.state(p, last).iter().zip(k).map(|(x, v)| x * v).sum()).collect();
    let m = proj.iter().sum::<f64>() / proj.len() as f64;
    let sq: Vec<f64> = proj.iter().map(|v| (v - m) * (v - m)).collect();
    Estimate::from_samples(&sq)
}

/// Observables `Ψ(x, y)` with an exact torus average `Ψ̄(y)`; the slow
/// weight is `g(y) = 1 / (1 + |y|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Observable {
    /// `sin(x₁) g(y)`, average 0.
    SinWeighted,
    /// `(2 + sin x₁) g(y)`, average `2 g(y)`.
    ShiftedSinWeighted,
    /// `g(y)`, its own average.
    Slow,
}

impl Observable {
    fn weight(y: &SVec) -> f64 {
        1.0 / (1.0 + y.dot(y))
    }

    pub fn value(&self, x: &SVec, y: &SVec) -> f64 {
        let g = Self::weight(y);
        match self {
            Observable::SinWeighted => libm::sin(x.v[0]) * g,
            Observable::ShiftedSinWeighted => (2.0 + libm::sin(x.v[0])) * g,
            Observable::Slow => g,
        }
    }

    pub fn average(&self, y: &SVec) -> f64 {
        let g = Self::weight(y);
        match self {
            Observable::SinWeighted => 0.0,
            Observable::ShiftedSinWeighted => 2.0 * g,
            Observable::Slow => g,
        }
    }
}

/// Left-point accumulation of `∫ (Ψ - Ψ̄)` with the sup over save times.
#[derive(Debug, Clone)]
pub struct ErgodicObserver {
    pub observable: Observable,
    integral: f64,
    sup: f64,
}

impl ErgodicObserver {
    pub fn new(observable: Observable) -> Self {
        ErgodicObserver { observable, integral: 0.0, sup: 0.0 }
    }

    /// `sup_s |∫₀^s (Ψ - Ψ̄)|²` on the save grid.
    pub fn sup_squared(&self) -> f64 {
        self.sup * self.sup
    }
}

impl PathObserver for ErgodicObserver {
    fn step(&mut self, _t: f64, dt: f64, x: &SVec, fast: &SVec) {
        self.integral += (self.observable.value(fast, x) - self.observable.average(x)) * dt;
    }

    fn save(&mut self, _k: usize, _x: &SVec) {
        self.sup = self.sup.max(self.integral.abs());
    }
}

/// Monte Carlo estimate of `E[sup_s |∫₀^s Ψ(X/ε, X) - Ψ̄(X) dr|²]`.
pub fn ergodic_sup_error(sim: &Simulator<'_>, observable: Observable) -> Result<Estimate> {
    let samples = (0..sim.config().paths as u64)
        .map(|id| {
            let mut obs = ErgodicObserver::new(observable);
            sim.path_observed(id, &mut obs)?;
            Ok(obs.sup_squared())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&samples))
}

pub fn ergodic_average_check(
    medium: &MediumSpec,
    eps: &[f64],
    config: &crate::sde::SimConfig,
    observable: Observable,
) -> Result<ConvergenceReport> {
    let entries = eps
        .iter()
        .map(|&e| {
            let cfg = crate::sde::SimConfig { epsilon: e, ..config.clone() };
            let est = ergodic_sup_error(&Simulator::two_scale(&cfg, medium)?, observable)?;
            Ok(LadderEntry { parameter: e, value: est.value, se: est.se })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::from_entries("ergodic_sup_error", entries, None, true))
}

/// Empirical moments of one coordinate at one saved time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentGap {
    pub time: f64,
    pub coordinate: usize,
    pub first: Estimate,
    pub second: Estimate,
    /// Second moment within `NULL_SE` standard errors of the density's.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InvariantReport {
    pub target_second_moment: f64,
    pub gaps: Vec<MomentGap>,
    pub pass: bool,
}

/// Compares per-coordinate moments at `times` with those of the Gaussian
/// density (`0` and `½`).
pub fn invariant_measure_check(ens: &TrajectoryEnsemble, times: &[f64]) -> Result<InvariantReport> {
    if !ens.meta.from_density {
        return Err(Error::Precondition("initial law must be the invariant density".to_string()));
    }
    let target = 0.5;
    let mut gaps = Vec::new();
    for &t in times {
        let k =
            ens.time_index(t).ok_or_else(|| Error::Precondition("requested time is not a save time".to_string()))?;
        for c in 0..ens.dim {
            let xs: Vec<f64> = (0..ens.paths()).map(|p| ens.state(p, k)[c]).collect();
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let first = Estimate::from_samples(&xs);
            let second = Estimate::from_samples(&sq);
            gaps.push(MomentGap { time: t, coordinate: c, first, second, pass: second.within(target, NULL_SE) });
        }
    }
    let pass = gaps.iter().all(|g| g.pass);
    Ok(InvariantReport { target_second_moment: target, gaps, pass })
}

/// Boundedness of `λ|g|₂² + ‖g‖₁²` across λ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyRow {
    pub family: String,
    pub index: usize,
    pub lambdas: Vec<f64>,
    pub energies: Vec<f64>,
    /// `(max - min) / max`.
    pub spread: f64,
    /// Correctors must be flat within the tolerance; their y-derivatives,
    /// whose limit may vanish, must not grow past it.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LipschitzRow {
    pub index: usize,
    pub direction: usize,
    pub lambda: f64,
    pub h: Vec<f64>,
    /// `‖u(·, y + h e_j) - u(·, y)‖₁ / h`.
    pub ratios: Vec<f64>,
    /// Largest growth factor between consecutive refinements.
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityTable {
    pub energy: Vec<EnergyRow>,
    pub lipschitz: Vec<LipschitzRow>,
    pub viscosity: Vec<ViscosityDecay>,
    /// `max |w_λ - u_λ|` over coefficients, when `H ≡ 0`.
    pub symmetric_gap: Option<f64>,
    pub flat_tol: f64,
    pub energy_flat: bool,
    pub lipschitz_stable: bool,
    pub viscosity_monotone: bool,
    pub symmetric_match: Option<bool>,
    pub pass: bool,
}

pub const ENERGY_FLAT_TOL: f64 = 0.1;
pub const LIPSCHITZ_GROWTH: f64 = 2.0;
pub const SYMMETRIC_TOL: f64 = 1e-10;

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let min = v.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0]) || v.iter().all(|x| *x == 0.0)
}

/// Regularity table at one slow point `y`.
pub fn regularity_suite(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    y: &[f64],
    lambdas: &[f64],
    h_steps: &[f64],
    n_ladder: &[f64],
) -> Result<RegularityTable> {
    check_ladder(lambdas)?;
    let d = medium.dim();
    let mut energy = Vec::new();
    let mut lipschitz = Vec::new();
    let mut viscosity = Vec::new();
    let op_full = Operator::prepare(medium, basis, y, OperatorKind::Full)?;
    let op_sym = Operator::prepare(medium, basis, y, OperatorKind::Symmetric)?;
    let h_is_zero = op_full.fields.h_is_zero;
    let mut symmetric_gap: f64 = 0.0;
    for i in 0..d {
        let rhs = RhsKind::Drift { i };
        let mut eu = Vec::new();
        let mut ew = Vec::new();
        let mut ed = Vec::new();
        for &l in lambdas {
            let u = op_full.solve(basis, l, &rhs)?;
            let w = op_sym.solve(basis, l, &rhs)?;
            eu.push(u.energy.lambda_l2 + u.energy.h1);
            ew.push(w.energy.lambda_l2 + w.energy.h1);
            if h_is_zero {
                for (a, b) in u.coefficients.iter().zip(&w.coefficients) {
                    symmetric_gap = symmetric_gap.max((a - b).abs());
                }
            }
            let problem = ResolventProblem::new(y, l, OperatorKind::Full, rhs.clone());
            let dy = corrector_y_derivatives(medium, &problem, basis, 1e-3)?;
            ed.push(dy.iter().map(|g| g.first_lambda_l2 + g.first_h1 * g.first_h1).fold(0.0, f64::max));
            for j in 0..d {
                let mut ratios = Vec::new();
                for &h in h_steps {
                    let mut yp = y.to_vec();
                    yp[j] += h;
                    let up = solve_resolvent(medium, &problem.with_y(&yp), basis)?;
                    let diff: Vec<f64> = up.coefficients.iter().zip(&u.coefficients).map(|(a, b)| a - b).collect();
                    ratios.push(libm::sqrt(op_full.h1_sq(&diff).max(0.0)) / h);
                }
                let growth = ratios
                    .windows(2)
                    .map(|w| {
                        let (lo, hi) = (w[0].min(w[1]), w[0].max(w[1]));
                        if hi == 0.0 {
                            1.0
                        } else if lo == 0.0 {
                            f64::INFINITY
                        } else {
                            hi / lo
                        }
                    })
                    .fold(1.0, f64::max);
                lipschitz.push(LipschitzRow { index: i, direction: j, lambda: l, h: h_steps.to_vec(), ratios, growth });
            }
        }
        for (family, e) in [("u", eu), ("w", ew), ("dy_u", ed)] {
            let sp = spread(&e);
            let pass = if family == "dy_u" {
                e.iter().all(|v| *v <= (1.0 + ENERGY_FLAT_TOL) * e[0])
            } else {
                sp <= ENERGY_FLAT_TOL
            };
            energy.push(EnergyRow {
                family: family.to_string(),
                index: i,
                lambdas: lambdas.to_vec(),
                spread: sp,
                energies: e,
                pass,
            });
        }
        // Viscosity ladder at the second rung of the λ ladder.
        if n_ladder.len() >= 3 {
            let p = ResolventProblem::new(y, lambdas[1.min(lambdas.len() - 1)], OperatorKind::Full, rhs.clone());
            viscosity.push(viscosity_consistency(medium, &p, basis, n_ladder)?);
        }
    }
    let energy_flat = energy.iter().all(|r| r.pass);
    let lipschitz_stable = lipschitz.iter().all(|r| r.growth <= LIPSCHITZ_GROWTH);
    let viscosity_monotone =
        viscosity.iter().all(|v| strictly_decreasing(&v.h1_gap) && strictly_decreasing(&v.viscous_energy));
    let symmetric_match = if h_is_zero { Some(symmetric_gap <= SYMMETRIC_TOL) } else { None };
    let pass = energy_flat && lipschitz_stable && viscosity_monotone && symmetric_match.unwrap_or(true);
    Ok(RegularityTable {
        energy,
        lipschitz,
        viscosity,
        symmetric_gap: if h_is_zero { Some(symmetric_gap) } else { None },
        flat_tol: ENERGY_FLAT_TOL,
        energy_flat,
        lipschitz_stable,
        viscosity_monotone,
        symmetric_match,
        pass,
    })
}
