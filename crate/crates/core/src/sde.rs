//! Euler–Maruyama ensembles for the two-scale process `X^ε`, its viscous
//! regularisation `X^n`, and the homogenised limit diffusion.
//!
//! Each path owns a ChaCha8 generator seeded from the master seed with
//! stream `3 id` (driving noise), `3 id + 1` (viscous noise) and `3 id + 2`
//! (initial draw), so results do not depend on how paths are scheduled.

use crate::effective::{EffectiveTensors, TensorInterpolator};
use crate::error::{Error, Result};
use crate::linalg::{sqrt_psd, SVec};
use crate::medium::{reduce_torus, MediumSpec, Potential};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Largest fraction of flagged paths tolerated in one ensemble.
pub const FLAG_BUDGET: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum InitialLaw {
    /// Every path starts at `x0`.
    Point { x0: Vec<f64> },
    /// Draws from the invariant density `e^{-2V}`.
    Density,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SimConfig {
    /// Scale separation; ignored by the limit simulator.
    pub epsilon: f64,
    /// Viscosity index `n`; `None` is `n = ∞`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub viscosity: Option<f64>,
    pub horizon: f64,
    /// Base step; the two-scale step is `dt0 ε²`.
    pub dt0: f64,
    pub paths: usize,
    pub seed: u64,
    pub initial: InitialLaw,
    /// Number of equal save intervals on `[0, T]`.
    #[cfg_attr(feature = "serde", serde(default = "default_save_intervals"))]
    pub save_intervals: usize,
}

fn default_save_intervals() -> usize {
    10
}

impl SimConfig {
    pub fn new(epsilon: f64, horizon: f64, dt0: f64, paths: usize, seed: u64, initial: InitialLaw) -> Self {
        SimConfig {
            epsilon,
            viscosity: None,
            horizon,
            dt0,
            paths,
            seed,
            initial,
            save_intervals: default_save_intervals(),
        }
    }

    pub fn check(&self, d: usize, limit: bool) -> Result<()> {
        if !limit && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InputDomain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(n) = self.viscosity {
            if !(n >= 1.0) || n.is_nan() {
                return Err(Error::InputDomain(format!("viscosity must be >= 1, got {n}")));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return Err(Error::InputDomain("horizon and dt0 must be positive".to_string()));
        }
        if self.paths == 0 || self.save_intervals == 0 {
            return Err(Error::InputDomain("paths and save_intervals must be >= 1".to_string()));
        }
        if let InitialLaw::Point { x0 } = &self.initial {
            if x0.len() != d || x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InputDomain("initial point has wrong dimension or is not finite".to_string()));
            }
        }
        Ok(())
    }

    /// `(steps, dt, steps per save)` for a target step.
    pub fn schedule(&self, dt_target: f64) -> (usize, f64, usize) {
        let s = self.save_intervals;
        let per = libm::ceil(self.horizon / (s as f64 * dt_target)).max(1.0) as usize;
        let steps = per * s;
        (steps, self.horizon / steps as f64, per)
    }

    pub fn save_times(&self) -> Vec<f64> {
        (0..=self.save_intervals).map(|k| self.horizon * k as f64 / self.save_intervals as f64).collect()
    }
}

/// Exact draws from the shipped densities: `N(0, ½ Id)` for the Gaussian
/// potential.
pub fn sample_initial(potential: Potential, d: usize, count: usize, seed: u64) -> Result<Vec<SVec>> {
    (0..count as u64).map(|id| draw_initial(potential, d, seed, id)).collect()
}

fn draw_initial(potential: Potential, d: usize, seed: u64, id: u64) -> Result<SVec> {
    match potential {
        Potential::Gaussian => {
            let mut rng = stream(seed, id, 2);
            let mut x = SVec::zeros(d);
            for i in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                x.v[i] = z * core::f64::consts::FRAC_1_SQRT_2;
            }
            Ok(x)
        }
        Potential::Flat => Err(Error::UnsupportedPreset("flat potential has no sampler".to_string())),
    }
}

fn stream(seed: u64, id: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * id + offset);
    rng
}

fn normals(rng: &mut ChaCha8Rng, d: usize) -> SVec {
    let mut z = SVec::zeros(d);
    for i in 0..d {
        z.v[i] = StandardNormal.sample(rng);
    }
    z
}

/// Receives every step of one path.
pub trait PathObserver {
    /// Called before the step from `t` to `t + dt` at the left point.
    fn step(&mut self, t: f64, dt: f64, x: &SVec, fast: &SVec);
    /// Called at each save time (including `t = 0`).
    fn save(&mut self, _k: usize, _x: &SVec) {}
}

impl PathObserver for () {
    fn step(&mut self, _: f64, _: f64, _: &SVec, _: &SVec) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PathFlag {
    Ok,
    BlowUp,
    Escaped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutput {
    pub id: u64,
    /// `(save_intervals + 1) × d` states, row-major.
    pub states: Vec<f64>,
    pub flag: PathFlag,
}

enum Model<'a> {
    TwoScale { medium: &'a MediumSpec, eps: f64, viscosity: Option<f64> },
    Limit { table: TensorInterpolator },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SimMode {
    Eps,
    Viscous,
    Limit,
}

/// A configured simulation; paths are produced independently by id.
pub struct Simulator<'a> {
    model: Model<'a>,
    config: SimConfig,
    potential: Potential,
    mode: SimMode,
    dim: usize,
    steps: usize,
    dt: f64,
    per_save: usize,
}

impl<'a> Simulator<'a> {
    pub fn two_scale(config: &SimConfig, medium: &'a MediumSpec) -> Result<Self> {
        let d = medium.dim();
        config.check(d, false)?;
        let (steps, dt, per_save) = config.schedule(config.dt0 * config.epsilon * config.epsilon);
        let mode = if config.viscosity.is_some() { SimMode::Viscous } else { SimMode::Eps };
        Ok(Simulator {
            model: Model::TwoScale { medium, eps: config.epsilon, viscosity: config.viscosity },
            config: config.clone(),
            potential: medium.potential,
            mode,
            dim: d,
            steps,
            dt,
            per_save,
        })
    }

    pub fn limit(config: &SimConfig, tensors: &EffectiveTensors, potential: Potential) -> Result<Self> {
        let d = tensors.dim;
        config.check(d, true)?;
        let (steps, dt, per_save) = config.schedule(config.dt0);
        Ok(Simulator {
            model: Model::Limit { table: TensorInterpolator::new(tensors) },
            config: config.clone(),
            potential,
            mode: SimMode::Limit,
            dim: d,
            steps,
            dt,
            per_save,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn path(&self, id: u64) -> Result<PathOutput> {
        self.path_observed(id, &mut ())
    }

    pub fn path_observed<O: PathObserver>(&self, id: u64, obs: &mut O) -> Result<PathOutput> {
        let d = self.dim;
        let mut x = match &self.config.initial {
            InitialLaw::Point { x0 } => SVec::from_slice(x0),
            InitialLaw::Density => draw_initial(self.potential, d, self.config.seed, id)?,
        };
        let mut rng = stream(self.config.seed, id, 0);
        let mut rng_visc = stream(self.config.seed, id, 1);
        let sq = libm::sqrt(self.dt);
        let mut states = Vec::with_capacity((self.config.save_intervals + 1) * d);
        states.extend_from_slice(x.as_slice());
        obs.save(0, &x);
        let mut flag = PathFlag::Ok;
        for step in 0..self.steps {
            let t = step as f64 * self.dt;
            let xi = normals(&mut rng, d);
            match &self.model {
                Model::TwoScale { medium, eps, viscosity } => {
                    let fast = reduce_torus(&x.scale(1.0 / eps));
                    obs.step(t, self.dt, &x, &fast);
                    let (drift, sigma) = medium.dynamics_at(&fast, &x);
                    let mut dx = drift.b.scale(1.0 / eps).add(&drift.c).scale(self.dt);
                    dx = dx.add(&sigma.mul_vec(&xi).scale(sq));
                    if let Some(n) = viscosity {
                        let xi2 = normals(&mut rng_visc, d);
                        let (_, grad_v) = medium.potential(&x);
                        dx = dx.sub(&grad_v.scale(self.dt / n));
                        dx = dx.add(&xi2.scale(sq / libm::sqrt(*n)));
                    }
                    x = x.add(&dx);
                }
                Model::Limit { table } => {
                    obs.step(t, self.dt, &x, &x);
                    let Some(c) = table.at(&x) else {
                        flag = PathFlag::Escaped;
                        break;
                    };
                    let root = sqrt_psd(&c.a_bar)?;
                    x = x.add(&c.b_bar.scale(self.dt)).add(&root.mul_vec(&xi).scale(sq));
                }
            }
            if !x.is_finite() {
                flag = PathFlag::BlowUp;
                break;
            }
            if (step + 1) % self.per_save == 0 {
                let k = (step + 1) / self.per_save;
                states.extend_from_slice(x.as_slice());
                obs.save(k, &x);
            }
        }
        if flag != PathFlag::Ok {
            states.resize((self.config.save_intervals + 1) * d, f64::NAN);
        }
        Ok(PathOutput { id, states, flag })
    }

    /// Collects path outputs (in any order) into an ensemble, ordered by id.
    pub fn assemble(&self, mut outputs: Vec<PathOutput>) -> Result<TrajectoryEnsemble> {
        outputs.sort_by_key(|p| p.id);
        let total = outputs.len();
        let flagged: Vec<(u64, PathFlag)> =
            outputs.iter().filter(|p| p.flag != PathFlag::Ok).map(|p| (p.id, p.flag)).collect();
        if flagged.len() as f64 > FLAG_BUDGET * total as f64 {
            return Err(Error::SimulationFailure { flagged: flagged.len(), total });
        }
        let kept: Vec<&PathOutput> = outputs.iter().filter(|p| p.flag == PathFlag::Ok).collect();
        let mut states = Vec::with_capacity(kept.len() * (self.config.save_intervals + 1) * self.dim);
        for p in &kept {
            states.extend_from_slice(&p.states);
        }
        Ok(TrajectoryEnsemble {
            dim: self.dim,
            times: self.config.save_times(),
            path_ids: kept.iter().map(|p| p.id).collect(),
            states,
            flagged,
            meta: EnsembleMeta {
                mode: self.mode,
                epsilon: if self.mode == SimMode::Limit { None } else { Some(self.config.epsilon) },
                viscosity: self.config.viscosity,
                seed: self.config.seed,
                steps: self.steps,
                dt: self.dt,
                from_density: self.config.initial == InitialLaw::Density,
                config_hash: String::new(),
            },
        })
    }

    /// Runs every path sequentially.
    pub fn run(&self) -> Result<TrajectoryEnsemble> {
        let outputs = (0..self.config.paths as u64).map(|id| self.path(id)).collect::<Result<Vec<_>>>()?;
        self.assemble(outputs)
    }
}

pub fn simulate_xeps(config: &SimConfig, medium: &MediumSpec) -> Result<TrajectoryEnsemble> {
    let cfg = SimConfig { viscosity: None, ..config.clone() };
    Simulator::two_scale(&cfg, medium)?.run()
}

pub fn simulate_xn(config: &SimConfig, medium: &MediumSpec) -> Result<TrajectoryEnsemble> {
    Simulator::two_scale(config, medium)?.run()
}

pub fn simulate_limit(
    config: &SimConfig,
    tensors: &EffectiveTensors,
    potential: Potential,
) -> Result<TrajectoryEnsemble> {
    Simulator::limit(config, tensors, potential)?.run()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleMeta {
    pub mode: SimMode,
    pub epsilon: Option<f64>,
    pub viscosity: Option<f64>,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    /// Initial law was the invariant density.
    pub from_density: bool,
    pub config_hash: String,
}

/// Saved states of the retained paths, path-major then time then coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub dim: usize,
    pub times: Vec<f64>,
    pub path_ids: Vec<u64>,
    pub states: Vec<f64>,
    pub flagged: Vec<(u64, PathFlag)>,
    pub meta: EnsembleMeta,
}

impl TrajectoryEnsemble {
    pub fn paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let s = (path * self.times.len() + k) * self.dim;
        &self.states[s..s + self.dim]
    }

    /// All path states at save index `k`.
    pub fn marginal(&self, k: usize) -> Vec<SVec> {
        (0..self.paths()).map(|p| SVec::from_slice(self.state(p, k))).collect()
    }

    pub fn final_states(&self) -> Vec<SVec> {
        self.marginal(self.times.len() - 1)
    }

    /// Save index whose time is within rounding of `t`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        self.times.iter().position(|s| (s - t).abs() <= tol)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Preset;
    use alloc::vec;

    fn null_medium() -> MediumSpec {
        MediumSpec::new(Preset::Constant { dim: 1, sigma: vec![0.0], h: None, sigma_tilde: Some(vec![1.0]) }, 1.0, 1.0)
            .unwrap()
    }

    #[test]
    fn null_dynamics_stay_put() {
        let cfg = SimConfig::new(0.5, 1.0, 0.1, 3, 7, InitialLaw::Point { x0: vec![0.7] });
        let e = simulate_xeps(&cfg, &null_medium()).unwrap();
        assert!(e.states.iter().all(|&v| v == 0.7));
        assert_eq!(e.times.len(), 11);
    }

    #[test]
    fn schedule_divides_horizon() {
        let cfg = SimConfig::new(0.1, 1.0, 0.3, 1, 0, InitialLaw::Density);
        let (steps, dt, per) = cfg.schedule(cfg.dt0 * 0.01);
        assert_eq!(steps, 340);
        assert_eq!(per, 34);
        assert!((dt * steps as f64 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_viscosity_is_the_plain_process() {
        let m = MediumSpec::new(Preset::Sine1d { alpha: 2.0, beta: 1.0 }, 1.0, 10.0).unwrap();
        let cfg = SimConfig::new(0.3, 0.2, 0.05, 4, 11, InitialLaw::Density);
        let a = simulate_xeps(&cfg, &m).unwrap();
        let b = simulate_xn(&cfg, &m).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_initial(Potential::Gaussian, 2, 5, 3).unwrap();
        let b = sample_initial(Potential::Gaussian, 2, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(sample_initial(Potential::Flat, 1, 1, 0).is_err());
    }

    #[test]
    fn rejects_bad_epsilon() {
        let cfg = SimConfig::new(0.0, 1.0, 0.1, 1, 0, InitialLaw::Point { x0: vec![0.0] });
        assert!(simulate_xeps(&cfg, &null_medium()).is_err());
    }
}
