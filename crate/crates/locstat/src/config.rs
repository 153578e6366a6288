//! Experiment configuration. One JSON document drives every command; unknown
//! keys are rejected and the canonical re-serialization is hashed into every
//! output file.

use std::path::{Path, PathBuf};

use locstat_core::effective::YGrid;
use locstat_core::medium::MediumSpec;
use locstat_core::sde::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub medium: MediumSpec,
    #[serde(default)]
    pub basis: BasisConfig,
    /// λ ladder for correctors; at least three values, decreasing.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// ε ladder for `compare`.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Viscosity ladder for the regularity table.
    #[serde(default = "default_viscosities")]
    pub viscosities: Vec<f64>,
    /// y-steps of the Lipschitz ratios.
    #[serde(default = "default_h_steps")]
    pub h_steps: Vec<f64>,
    pub y_grid: YGrid,
    /// Points per axis for the assumption checks.
    #[serde(default = "default_validation_grid")]
    pub validation_grid: usize,
    /// Treat a non-ergodic control field as a failed assumption.
    #[serde(default)]
    pub strict_ergodicity: bool,
    pub simulation: SimConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub sec4: Sec4Config,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Tensor table for `simulate --mode limit`; defaults to
    /// `<out>/tensors.json`.
    #[serde(default)]
    pub tensors: Option<PathBuf>,
    /// Also write ensembles as CSV.
    #[serde(default)]
    pub write_csv: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub galerkin_cutoff: usize,
    /// Quadrature points per axis; `None` picks `max(4K, 8)`.
    pub quadrature: Option<usize>,
    pub ergodicity_cutoff: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { galerkin_cutoff: 8, quadrature: None, ergodicity_cutoff: 8 }
    }
}

/// Inputs of `compare`. Without ensemble files the ladder is simulated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// One two-scale ensemble per entry of `epsilons`.
    #[serde(default)]
    pub ensembles: Vec<PathBuf>,
    #[serde(default)]
    pub limit: Option<PathBuf>,
    /// Expect the homogeneous null instead of a decreasing trend.
    #[serde(default)]
    pub expect_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sec4Config {
    /// Modulation amplitude of the medium used for the ε ladder.
    pub ladder_delta: f64,
    /// Horizon of the ε ladder.
    pub ladder_horizon: f64,
    /// Horizon and path count of the kernel-confinement run.
    pub confinement_horizon: f64,
    pub confinement_paths: usize,
    /// ε and save times of the invariant-measure run.
    pub invariant_epsilon: f64,
    pub invariant_times: Vec<f64>,
}

impl Default for Sec4Config {
    fn default() -> Self {
        Sec4Config {
            ladder_delta: 1.0,
            ladder_horizon: 0.25,
            confinement_horizon: 1.0,
            confinement_paths: 1000,
            invariant_epsilon: 0.25,
            invariant_times: vec![0.5, 1.0, 2.0],
        }
    }
}

/// Pass thresholds; every field can be overridden from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Entrywise match of `Ā` against an exact value.
    pub tensor: f64,
    /// `‖φ‖₁` of the variational minimizer.
    pub minimizer: f64,
    /// Principal angle to the exact kernel, radians.
    pub kernel_angle: f64,
    /// `|⟨X_t - x₀, k⟩|` along limit paths.
    pub confinement: f64,
    /// Combined standard errors required for a trend.
    pub trend_se: f64,
    /// Standard errors allowed around a null value.
    pub null_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tensor: 1e-8, minimizer: 1e-8, kernel_angle: 1e-6, confinement: 1e-8, trend_se: 2.0, null_se: 3.0 }
    }
}

fn default_lambdas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.2, 0.1]
}

fn default_viscosities() -> Vec<f64> {
    vec![1e1, 1e2, 1e3, 1e4]
}

fn default_h_steps() -> Vec<f64> {
    vec![1e-2, 1e-3]
}

fn default_validation_grid() -> usize {
    12
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks that need no numerics.
    pub fn check(&self) -> Result<(), CliError> {
        self.medium.check()?;
        if self.y_grid.dim() != self.medium.dim() {
            return Err(CliError::Usage("y_grid dimension differs from the medium".into()));
        }
        self.y_grid.check()?;
        if self.basis.galerkin_cutoff == 0 || self.basis.ergodicity_cutoff == 0 {
            return Err(CliError::Usage("basis cutoffs must be >= 1".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(CliError::Usage("epsilons must be positive".into()));
        }
        Ok(())
    }

    /// Hex sha256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn basis(&self) -> locstat_core::galerkin::GalerkinBasis {
        use locstat_core::galerkin::GalerkinBasis;
        match self.basis.quadrature {
            Some(nq) => GalerkinBasis::with_quadrature(self.medium.dim(), self.basis.galerkin_cutoff, nq),
            None => GalerkinBasis::new(self.medium.dim(), self.basis.galerkin_cutoff),
        }
    }

    /// The built-in worked example: `c = 2`, `U = Id`.
    pub fn sec4_default() -> Self {
        use locstat_core::medium::Preset;
        use locstat_core::sde::InitialLaw;
        let medium = MediumSpec::new(Preset::Sec4 { c: 2.0, delta: 0.0 }, 4.0, 10.0).expect("valid preset");
        ExperimentConfig {
            medium,
            basis: BasisConfig::default(),
            lambdas: default_lambdas(),
            epsilons: default_epsilons(),
            viscosities: default_viscosities(),
            h_steps: default_h_steps(),
            y_grid: YGrid::cube(2, -4.0, 4.0, 9),
            validation_grid: default_validation_grid(),
            strict_ergodicity: false,
            simulation: SimConfig::new(0.1, 1.0, 0.01, 10_000, 7, InitialLaw::Point { x0: vec![0.0, 0.0] }),
            compare: CompareConfig::default(),
            sec4: Sec4Config::default(),
            tolerances: Tolerances::default(),
            tensors: None,
            write_csv: false,
            output_dir: None,
        }
    }
}
