//! Periodic surrogate of the random medium: the torus `[0, 2π)^d` with the
//! translation action. Every coefficient field comes from a closed preset
//! catalogue with analytic first derivatives in both variables.

use crate::error::{Error, Result};
use crate::galerkin::{FourierField, GalerkinBasis, MatrixField};
use crate::linalg::{Mat, SVec, MAX_DIM};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

/// The analytic coefficient families.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum Preset {
    /// Constant `σ`, `H` and control field `σ̃` (row-major `d × d`).
    Constant {
        dim: usize,
        sigma: Vec<f64>,
        #[cfg_attr(feature = "serde", serde(default))]
        h: Option<Vec<f64>>,
        #[cfg_attr(feature = "serde", serde(default))]
        sigma_tilde: Option<Vec<f64>>,
    },
    /// `d = 1`, `a(x) = alpha + beta sin x`, `σ̃ = σ = sqrt(a)`.
    Sine1d { alpha: f64, beta: f64 },
    /// `d = 2`, `σ̃ = [[1, 1/c], [c, 1]]` and `σ = σ̃ U` with the scalar
    /// factor `U = 1 + (delta/2) sin(x₁ + y₁)`.
    Sec4 {
        c: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        delta: f64,
    },
    /// `a(x, y) = p(x) q(y) Id` with `p = alpha + beta sin x₁`,
    /// `q = 1 + gamma sin y₁`, `σ̃ = sqrt(p) Id` and, for `d ≥ 2`,
    /// `H = eta p q J` with `J` the unit rotation generator in the first plane.
    Separable {
        dim: usize,
        alpha: f64,
        beta: f64,
        gamma: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        eta: f64,
    },
}

/// Choice of the invariant density `e^{-2V}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Potential {
    /// `e^{-2V(y)} = π^{-d/2} e^{-|y|²}`, so `∇V(y) = y`.
    #[default]
    Gaussian,
    /// `V ≡ 0`; not a probability density on `ℝ^d`, used on bounded test boxes.
    Flat,
}

/// Value and first derivatives of a matrix field at one `(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct MatJet {
    pub val: Mat,
    pub dx: [Mat; MAX_DIM],
    pub dy: [Mat; MAX_DIM],
}

impl MatJet {
    fn constant(val: Mat) -> Self {
        let z = Mat::zeros(val.n);
        MatJet { val, dx: [z; MAX_DIM], dy: [z; MAX_DIM] }
    }
}

/// All coefficient values at one `(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Coeffs {
    pub a: Mat,
    pub sigma: Mat,
    pub sigma_tilde: Mat,
    pub a_tilde: Mat,
    pub h: Mat,
    pub v: f64,
    pub grad_v: SVec,
}

/// The oscillating drift `b` and the slow drift `c`.
#[derive(Debug, Clone, Copy)]
pub struct Drifts {
    pub b: SVec,
    pub c: SVec,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MediumSpec {
    pub preset: Preset,
    #[cfg_attr(feature = "serde", serde(default))]
    pub potential: Potential,
    /// The constant `M` of the control sandwich.
    pub control_constant: f64,
    /// The bound `Λ` on coefficients and their derivatives.
    pub regularity_constant: f64,
    /// Half-width of the box used for density normalization and y-sampling.
    #[cfg_attr(feature = "serde", serde(default = "default_truncation"))]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    6.0
}

/// Reduces every coordinate into `[0, 2π)`.
pub fn reduce_torus(x: &SVec) -> SVec {
    let mut out = *x;
    for i in 0..x.n {
        let r = x.v[i] % TAU;
        out.v[i] = if r < 0.0 { r + TAU } else { r };
        if out.v[i] >= TAU {
            out.v[i] = 0.0;
        }
    }
    out
}

impl MediumSpec {
    pub fn new(preset: Preset, control_constant: f64, regularity_constant: f64) -> Result<Self> {
        let spec = MediumSpec {
            preset,
            potential: Potential::Gaussian,
            control_constant,
            regularity_constant,
            truncation: default_truncation(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.preset {
            Preset::Constant { dim, .. } | Preset::Separable { dim, .. } => *dim,
            Preset::Sine1d { .. } => 1,
            Preset::Sec4 { .. } => 2,
        }
    }

    pub fn preset_name(&self) -> &'static str {
        match self.preset {
            Preset::Constant { .. } => "constant",
            Preset::Sine1d { .. } => "sine1d",
            Preset::Sec4 { .. } => "sec4",
            Preset::Separable { .. } => "separable",
        }
    }

    /// Structural checks on the parameters (not the analytic assumptions).
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InputDomain(m));
        if !(self.control_constant > 0.0) || !(self.regularity_constant > 0.0) {
            return bad("control and regularity constants must be positive".to_string());
        }
        if !(self.truncation > 0.0) {
            return bad("truncation must be positive".to_string());
        }
        match &self.preset {
            Preset::Constant { dim, sigma, h, sigma_tilde } => {
                if *dim < 1 || *dim > MAX_DIM {
                    return bad(format!("dimension {dim} unsupported"));
                }
                let nn = dim * dim;
                let lens_ok = sigma.len() == nn
                    && h.as_ref().is_none_or(|h| h.len() == nn)
                    && sigma_tilde.as_ref().is_none_or(|s| s.len() == nn);
                if !lens_ok {
                    return bad(format!("constant preset matrices must have {nn} entries"));
                }
            }
            Preset::Sine1d { alpha, beta } => {
                if !(alpha.abs() > beta.abs()) || !(*alpha > 0.0) {
                    return bad("sine1d needs alpha > |beta|".to_string());
                }
            }
            Preset::Sec4 { c, delta } => {
                if !(c.abs() > 0.0) || !c.is_finite() {
                    return bad("sec4 needs a finite nonzero c".to_string());
                }
                if !(*delta >= 0.0 && *delta < 2.0) {
                    return bad("sec4 needs 0 <= delta < 2".to_string());
                }
            }
            Preset::Separable { dim, alpha, beta, gamma, eta } => {
                if *dim < 1 || *dim > MAX_DIM {
                    return bad(format!("dimension {dim} unsupported"));
                }
                if !(*alpha > beta.abs()) || !(gamma.abs() < 1.0) || !eta.is_finite() {
                    return bad("separable needs alpha > |beta| and |gamma| < 1".to_string());
                }
            }
        }
        Ok(())
    }

    fn sigma_tilde_jet(&self, x: &SVec) -> MatJet {
        let d = self.dim();
        match &self.preset {
            Preset::Constant { sigma, sigma_tilde, .. } => {
                let st = sigma_tilde.as_ref().unwrap_or(sigma);
                MatJet::constant(Mat::from_row_major(d, st))
            }
            Preset::Sine1d { alpha, beta } => {
                let p = alpha + beta * libm::sin(x.v[0]);
                let s = libm::sqrt(p);
                let mut jet = MatJet::constant(Mat::scalar(1, s));
                jet.dx[0] = Mat::scalar(1, beta * libm::cos(x.v[0]) / (2.0 * s));
                jet
            }
            Preset::Sec4 { c, .. } => MatJet::constant(sec4_sigma_tilde(*c)),
            Preset::Separable { alpha, beta, .. } => {
                let p = alpha + beta * libm::sin(x.v[0]);
                let s = libm::sqrt(p);
                let mut jet = MatJet::constant(Mat::scalar(d, s));
                jet.dx[0] = Mat::scalar(d, beta * libm::cos(x.v[0]) / (2.0 * s));
                jet
            }
        }
    }

    fn sigma_jet(&self, x: &SVec, y: &SVec) -> MatJet {
        let d = self.dim();
        match &self.preset {
            Preset::Constant { sigma, .. } => MatJet::constant(Mat::from_row_major(d, sigma)),
            Preset::Sine1d { .. } => self.sigma_tilde_jet(x),
            Preset::Sec4 { c, delta } => {
                let st = sec4_sigma_tilde(*c);
                let phase = x.v[0] + y.v[0];
                let u = 1.0 + 0.5 * delta * libm::sin(phase);
                let du = 0.5 * delta * libm::cos(phase);
                let mut jet = MatJet::constant(st.scale(u));
                jet.dx[0] = st.scale(du);
                jet.dy[0] = st.scale(du);
                jet
            }
            Preset::Separable { alpha, beta, gamma, .. } => {
                let p = alpha + beta * libm::sin(x.v[0]);
                let q = 1.0 + gamma * libm::sin(y.v[0]);
                let s = libm::sqrt(p * q);
                let mut jet = MatJet::constant(Mat::scalar(d, s));
                jet.dx[0] = Mat::scalar(d, beta * libm::cos(x.v[0]) * q / (2.0 * s));
                jet.dy[0] = Mat::scalar(d, gamma * libm::cos(y.v[0]) * p / (2.0 * s));
                jet
            }
        }
    }

    fn h_jet(&self, x: &SVec, y: &SVec) -> MatJet {
        let d = self.dim();
        match &self.preset {
            Preset::Constant { h: Some(h), .. } => MatJet::constant(Mat::from_row_major(d, h)),
            Preset::Constant { h: None, .. } => MatJet::constant(Mat::zeros(d)),
            Preset::Separable { alpha, beta, gamma, eta, .. } if d >= 2 && *eta != 0.0 => {
                let mut j = Mat::zeros(d);
                j.m[0][1] = 1.0;
                j.m[1][0] = -1.0;
                let p = alpha + beta * libm::sin(x.v[0]);
                let q = 1.0 + gamma * libm::sin(y.v[0]);
                let mut jet = MatJet::constant(j.scale(eta * p * q));
                jet.dx[0] = j.scale(eta * beta * libm::cos(x.v[0]) * q);
                jet.dy[0] = j.scale(eta * p * gamma * libm::cos(y.v[0]));
                jet
            }
            _ => MatJet::constant(Mat::zeros(d)),
        }
    }

    /// `V(y)` and `∇V(y)`.
    pub fn potential(&self, y: &SVec) -> (f64, SVec) {
        match self.potential {
            Potential::Gaussian => {
                let d = y.n as f64;
                (0.5 * y.dot(y) + 0.25 * d * libm::log(PI), *y)
            }
            Potential::Flat => (0.0, SVec::zeros(y.n)),
        }
    }

    /// Density `e^{-2V(y)}`.
    pub fn density(&self, y: &SVec) -> f64 {
        libm::exp(-2.0 * self.potential(y).0)
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<(SVec, SVec)> {
        let d = self.dim();
        if x.len() != d || y.len() != d {
            return Err(Error::InputDomain(format!("expected points of dimension {d}")));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite coordinate".to_string()));
        }
        Ok((reduce_torus(&SVec::from_slice(x)), SVec::from_slice(y)))
    }

    /// All coefficient fields at `(x mod 2π, y)`.
    pub fn eval_coeffs(&self, x: &[f64], y: &[f64]) -> Result<Coeffs> {
        let (x, y) = self.check_point(x, y)?;
        Ok(self.coeffs_at(&x, &y))
    }

    /// Unchecked evaluation; `x` must already be reduced to the torus.
    pub fn coeffs_at(&self, x: &SVec, y: &SVec) -> Coeffs {
        let sigma = self.sigma_jet(x, y).val;
        let sigma_tilde = self.sigma_tilde_jet(x).val;
        let (v, grad_v) = self.potential(y);
        Coeffs {
            a: sigma.mul(&sigma.transpose()),
            sigma,
            sigma_tilde,
            a_tilde: sigma_tilde.mul(&sigma_tilde.transpose()),
            h: self.h_jet(x, y).val,
            v,
            grad_v,
        }
    }

    /// Jet of `a + H`.
    fn a_plus_h_jet(&self, x: &SVec, y: &SVec) -> (MatJet, MatJet) {
        self.a_h_from_sigma(&self.sigma_jet(x, y), x, y)
    }

    fn a_h_from_sigma(&self, s: &MatJet, x: &SVec, y: &SVec) -> (MatJet, MatJet) {
        let h = self.h_jet(x, y);
        let prod = |ds: &Mat| ds.mul(&s.val.transpose()).add(&s.val.mul(&ds.transpose()));
        let mut a = MatJet::constant(s.val.mul(&s.val.transpose()));
        for i in 0..self.dim() {
            a.dx[i] = prod(&s.dx[i]);
            a.dy[i] = prod(&s.dy[i]);
        }
        (a, h)
    }

    /// Analytic first derivatives of `a`, `H`, `σ` and `σ̃` at a point.
    pub fn derivative_jets(&self, x: &[f64], y: &[f64]) -> Result<FieldJets> {
        let (x, y) = self.check_point(x, y)?;
        let (a, h) = self.a_plus_h_jet(&x, &y);
        Ok(FieldJets { a, h, sigma: self.sigma_jet(&x, &y), sigma_tilde: self.sigma_tilde_jet(&x) })
    }

    pub fn eval_drifts(&self, x: &[f64], y: &[f64]) -> Result<Drifts> {
        let (x, y) = self.check_point(x, y)?;
        Ok(self.drifts_at(&x, &y))
    }

    /// `b_j = ½ Σ_i ∂_{x_i}(a+H)_{ij}` and
    /// `c_j = ½ Σ_i [∂_{y_i}(a+H)_{ij} - 2 ∂_{y_i}V (a+H)_{ij}]`.
    pub fn drifts_at(&self, x: &SVec, y: &SVec) -> Drifts {
        self.dynamics_at(x, y).0
    }

    /// Drifts together with `σ(x, y)`, sharing one jet evaluation.
    pub fn dynamics_at(&self, x: &SVec, y: &SVec) -> (Drifts, Mat) {
        let d = self.dim();
        let s = self.sigma_jet(x, y);
        let (a, h) = self.a_h_from_sigma(&s, x, y);
        let (_, grad_v) = self.potential(y);
        let mut b = SVec::zeros(d);
        let mut c = SVec::zeros(d);
        for j in 0..d {
            let mut bj = 0.0;
            let mut cj = 0.0;
            for i in 0..d {
                bj += a.dx[i].m[i][j] + h.dx[i].m[i][j];
                cj += a.dy[i].m[i][j] + h.dy[i].m[i][j] - 2.0 * grad_v.v[i] * (a.val.m[i][j] + h.val.m[i][j]);
            }
            b.v[j] = 0.5 * bj;
            c.v[j] = 0.5 * cj;
        }
        (Drifts { b, c }, s.val)
    }

    /// Samples `σ̃σ̃*` on the quadrature grid of `basis`.
    pub fn a_tilde_field(&self, basis: &GalerkinBasis) -> MatrixField {
        let d = self.dim();
        let zero_y = SVec::zeros(d);
        MatrixField::sample(basis, |x| self.coeffs_at(x, &zero_y).a_tilde)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldJets {
    pub a: MatJet,
    pub h: MatJet,
    pub sigma: MatJet,
    pub sigma_tilde: MatJet,
}

pub fn sec4_sigma_tilde(c: f64) -> Mat {
    Mat::from_row_major(2, &[1.0, 1.0 / c, c, 1.0])
}

/// One named assumption check; `margin` is the worst violation found (zero
/// when the inequality holds everywhere sampled).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CheckResult {
    pub check_name: String,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check_name == name)
    }
}

/// Tolerance on eigenvalue-based sandwich violations.
pub const SANDWICH_TOL: f64 = 1e-10;

/// Multi-indices of a tensor grid with `n` points per axis.
pub(crate) fn grid_indices(d: usize, n: usize) -> impl Iterator<Item = [usize; MAX_DIM]> {
    let total = n.pow(d as u32);
    (0..total).map(move |mut flat| {
        let mut idx = [0usize; MAX_DIM];
        for slot in idx.iter_mut().take(d) {
            *slot = flat % n;
            flat /= n;
        }
        idx
    })
}

fn neg_part(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        0.0
    }
}

/// Samples the regularity and control assumptions on `grid` points per axis
/// in `x ∈ [0, 2π)^d` and `y ∈ [-L, L]^d`.
pub fn validate_assumptions(spec: &MediumSpec, grid: usize) -> Result<ValidationReport> {
    if grid < 8 {
        return Err(Error::Precondition(format!("grid must be >= 8 points per axis, got {grid}")));
    }
    let d = spec.dim();
    let m = spec.control_constant;
    let lam = spec.regularity_constant;
    let l = spec.truncation;
    let hy = 2.0 * l / (grid - 1) as f64;

    let mut antisym: f64 = 0.0;
    let mut lower: f64 = 0.0;
    let mut upper: f64 = 0.0;
    let mut dya: f64 = 0.0;
    let mut hctl: f64 = 0.0;
    let mut dyh: f64 = 0.0;
    let mut lip: f64 = 0.0;
    let mut bound: f64 = 0.0;

    let xs: Vec<SVec> = grid_indices(d, grid)
        .map(|idx| {
            let mut x = SVec::zeros(d);
            for i in 0..d {
                x.v[i] = TAU * idx[i] as f64 / grid as f64;
            }
            x
        })
        .collect();
    let ys: Vec<SVec> = grid_indices(d, grid)
        .map(|idx| {
            let mut y = SVec::zeros(d);
            for i in 0..d {
                y.v[i] = -l + hy * idx[i] as f64;
            }
            y
        })
        .collect();

    for x in &xs {
        let st = spec.sigma_tilde_jet(x);
        let at = st.val.mul(&st.val.transpose());
        let upper_ctl = at.scale(m);
        bound = bound.max(st.val.norm() - lam);
        for i in 0..d {
            bound = bound.max(st.dx[i].norm() - lam);
        }
        for y in &ys {
            let (a, h) = spec.a_plus_h_jet(x, y);
            let s = spec.sigma_jet(x, y);
            antisym = antisym.max(h.val.symmetric_part_size());
            lower = lower.max(neg_part(a.val.sub(&at.scale(1.0 / m)).min_eigenvalue()));
            upper = upper.max(neg_part(upper_ctl.sub(&a.val).min_eigenvalue()));
            hctl = hctl.max(neg_part(upper_ctl.sub(&h.val.abs()).min_eigenvalue()));
            bound = bound.max(s.val.norm() - lam).max(h.val.norm() - lam);
            for i in 0..d {
                dya = dya.max(neg_part(upper_ctl.sub(&a.dy[i].abs()).min_eigenvalue()));
                dyh = dyh.max(neg_part(upper_ctl.sub(&h.dy[i].abs()).min_eigenvalue()));
                bound = bound
                    .max(s.dx[i].norm() - lam)
                    .max(s.dy[i].norm() - lam)
                    .max(h.dx[i].norm() - lam)
                    .max(h.dy[i].norm() - lam);
                // Lipschitz-in-y of σ on neighbouring grid pairs.
                let mut y2 = *y;
                y2.v[i] += hy;
                let ds = spec.sigma_jet(x, &y2).val.sub(&s.val);
                let gap = upper_ctl.scale(hy * hy).sub(&ds.mul(&ds.transpose()));
                lip = lip.max(neg_part(gap.min_eigenvalue()) / (hy * hy));
            }
        }
    }

    let norm_err = libm::fabs(density_mass(spec) - 1.0);
    let tol_antisym = 1e-14;
    let mk = |name: &str, margin: f64, tol: f64| CheckResult {
        check_name: name.to_string(),
        margin: margin.max(0.0),
        pass: margin <= tol,
    };
    let checks = alloc::vec![
        mk("antisymmetry", antisym, tol_antisym),
        mk("control_lower", lower, SANDWICH_TOL),
        mk("control_upper", upper, SANDWICH_TOL),
        mk("dy_a_controlled", dya, SANDWICH_TOL),
        mk("h_controlled", hctl, SANDWICH_TOL),
        mk("dy_h_controlled", dyh, SANDWICH_TOL),
        mk("sigma_lipschitz_y", lip, SANDWICH_TOL),
        mk("regularity_bound", bound, 0.0),
        mk("density_normalization", norm_err, 1e-6),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, pass })
}

/// `∫ e^{-2V}` over the truncation box by tensor trapezoid quadrature.
pub fn density_mass(spec: &MediumSpec) -> f64 {
    let d = spec.dim();
    let n = match d {
        1 => 4001,
        2 => 801,
        _ => 161,
    };
    let l = spec.truncation;
    let h = 2.0 * l / (n - 1) as f64;
    let mut total = 0.0;
    for idx in grid_indices(d, n) {
        let mut y = SVec::zeros(d);
        let mut w = 1.0;
        for i in 0..d {
            y.v[i] = -l + h * idx[i] as f64;
            if idx[i] == 0 || idx[i] == n - 1 {
                w *= 0.5;
            }
        }
        total += w * spec.density(&y);
    }
    total * libm::pow(h, d as f64)
}

/// Result of the finite-cutoff ergodicity test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErgodicityReport {
    pub ergodic: bool,
    pub null_dim: usize,
    pub cutoff: usize,
    pub warning: Option<String>,
}

/// Relative threshold separating numerical null space from the spectrum.
pub const NULL_SPACE_TOL: f64 = 1e-8;

/// Null space of the Galerkin matrix of `S̃ = ½ Σ D_i(ã_ij D_j)` on modes
/// `|k|_∞ <= cutoff`; ergodic when only constants remain.
pub fn check_microscopic_ergodicity(spec: &MediumSpec, cutoff: usize) -> Result<ErgodicityReport> {
    if cutoff < 1 {
        return Err(Error::Precondition("cutoff must be >= 1".to_string()));
    }
    let basis = GalerkinBasis::new(spec.dim(), cutoff);
    let field = spec.a_tilde_field(&basis);
    let tail = field.tail_energy();
    let warning = (tail > crate::galerkin::TAIL_TOL)
        .then(|| format!("cutoff {cutoff} under-resolves the control field (tail energy {tail:.3e})"));
    let s = basis.stiffness(&field).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(s);
    let top = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let null_dim = eig.eigenvalues.iter().filter(|v| v.abs() <= NULL_SPACE_TOL * top).count();
    let null_dim = if top == 0.0 { basis.len() } else { null_dim };
    Ok(ErgodicityReport { ergodic: null_dim == 1, null_dim, cutoff, warning })
}

/// Scalar field helper used by tests and the variational solver.
pub fn scalar_field(basis: &GalerkinBasis, f: impl Fn(&SVec) -> f64) -> FourierField {
    FourierField::sample(basis.dim(), basis.quadrature_points(), f)
}
