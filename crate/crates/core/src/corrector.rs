//! Resolvent (auxiliary) problems on the torus at a frozen slow point `y`:
//!
//! `λ u - ½ D·((a + H)(·, y) D u) = b_i(·, y)`
//!
//! discretised in weak form on a real Fourier basis, together with the
//! symmetric (`H` dropped) and viscous (`a → a + n⁻¹ Id`) variants.

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinBasis, MatrixField, ModeKind, TAIL_TOL};
use crate::linalg::{Mat, SVec};
use crate::medium::MediumSpec;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Relative residual targeted by the linear solver.
pub const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum OperatorKind {
    /// Generator with `a + H`.
    Full,
    /// Symmetric part only, `a`.
    Symmetric,
    FullViscous {
        n: f64,
    },
    SymmetricViscous {
        n: f64,
    },
}

impl OperatorKind {
    pub fn viscosity(&self) -> Option<f64> {
        match *self {
            OperatorKind::FullViscous { n } | OperatorKind::SymmetricViscous { n } => Some(n),
            _ => None,
        }
    }

    pub fn includes_h(&self) -> bool {
        matches!(self, OperatorKind::Full | OperatorKind::FullViscous { .. })
    }

    pub fn with_viscosity(&self, n: f64) -> OperatorKind {
        if self.includes_h() {
            OperatorKind::FullViscous { n }
        } else {
            OperatorKind::SymmetricViscous { n }
        }
    }

    pub fn inviscid(&self) -> OperatorKind {
        if self.includes_h() {
            OperatorKind::Full
        } else {
            OperatorKind::Symmetric
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum RhsKind {
    /// The oscillating drift component `b_i` (zero-based `i`).
    Drift { i: usize },
    /// A single real basis function `cos(k·x)` or `sin(k·x)`.
    SingleMode { k: Vec<i64>, mode: ModeKind },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResolventProblem {
    pub y: Vec<f64>,
    pub lambda: f64,
    pub operator_kind: OperatorKind,
    pub rhs_kind: RhsKind,
}

impl ResolventProblem {
    pub fn new(y: &[f64], lambda: f64, operator_kind: OperatorKind, rhs_kind: RhsKind) -> Self {
        ResolventProblem { y: y.to_vec(), lambda, operator_kind, rhs_kind }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ResolventProblem { lambda, ..self.clone() }
    }

    pub fn with_y(&self, y: &[f64]) -> Self {
        ResolventProblem { y: y.to_vec(), ..self.clone() }
    }

    fn check(&self, d: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InputDomain(format!("lambda must be positive, got {}", self.lambda)));
        }
        if let Some(n) = self.operator_kind.viscosity() {
            if !(n >= 1.0) {
                return Err(Error::InputDomain(format!("viscosity index must be >= 1, got {n}")));
            }
        }
        if self.y.len() != d || self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("slow point has wrong dimension or is not finite".to_string()));
        }
        Ok(())
    }
}

/// The medium sampled on the quadrature grid at a frozen slow point.
#[derive(Debug, Clone)]
pub struct FrozenFields {
    pub y: SVec,
    pub a: MatrixField,
    pub h: MatrixField,
    pub a_tilde: MatrixField,
    pub h_is_zero: bool,
}

impl FrozenFields {
    pub fn sample(medium: &MediumSpec, basis: &GalerkinBasis, y: &SVec) -> Result<Self> {
        if medium.dim() != basis.dim() {
            return Err(Error::InputDomain("basis and medium dimensions differ".to_string()));
        }
        let coeffs: Vec<_> = basis.grid().iter().map(|x| medium.coeffs_at(x, y)).collect();
        let nq = basis.quadrature_points();
        let d = basis.dim();
        let a = MatrixField::from_samples(d, nq, coeffs.iter().map(|c| c.a).collect());
        let h = MatrixField::from_samples(d, nq, coeffs.iter().map(|c| c.h).collect());
        let a_tilde = MatrixField::from_samples(d, nq, coeffs.iter().map(|c| c.a_tilde).collect());
        let tail = a.tail_energy().max(h.tail_energy()).max(a_tilde.tail_energy());
        if tail > TAIL_TOL {
            return Err(Error::Resolution { tail });
        }
        let h_is_zero = coeffs.iter().all(|c| c.h.max_abs() == 0.0);
        Ok(FrozenFields { y: *y, a, h, a_tilde, h_is_zero })
    }
}

/// λ-independent pieces of the discrete operator at one `y`.
#[derive(Debug, Clone)]
pub struct Operator {
    pub kind: OperatorKind,
    pub fields: FrozenFields,
    pub mass: DVector<f64>,
    /// `½ F` of the chosen operator (including viscosity).
    pub form: DMatrix<f64>,
    /// `½ F_ã`, the `‖·‖₁²` Gram matrix.
    pub a_tilde_form: DMatrix<f64>,
    /// `F_Id`, the `|D·|₂²` Gram matrix (diagonal).
    pub laplacian: DVector<f64>,
    /// `-½ ((a + H) e_i, Dφ_p)`.
    pub drift_loads: Vec<DVector<f64>>,
}

impl Operator {
    pub fn prepare(medium: &MediumSpec, basis: &GalerkinBasis, y: &[f64], kind: OperatorKind) -> Result<Self> {
        let y = SVec::from_slice(y);
        let fields = FrozenFields::sample(medium, basis, &y)?;
        let fa = basis.stiffness(&fields.a);
        let f_h = if fields.h_is_zero { None } else { Some(basis.stiffness(&fields.h)) };
        let mut form = fa.clone();
        if kind.includes_h() {
            if let Some(fh) = &f_h {
                form += fh;
            }
        }
        let laplacian = basis.laplacian_diagonal();
        if let Some(n) = kind.viscosity() {
            for p in 0..basis.len() {
                form[(p, p)] += laplacian[p] / n;
            }
        }
        form *= 0.5;
        let a_tilde_form = basis.stiffness(&fields.a_tilde) * 0.5;
        let a_plus_h = if fields.h_is_zero { fields.a.clone() } else { fields.a.add(&fields.h) };
        let drift_loads = (0..basis.dim()).map(|i| basis.column_load(&a_plus_h, i) * -0.5).collect();
        Ok(Operator { kind, fields, mass: basis.mass_diagonal(), form, a_tilde_form, laplacian, drift_loads })
    }

    pub fn system(&self, lambda: f64) -> DMatrix<f64> {
        let mut m = self.form.clone();
        for p in 0..self.mass.len() {
            m[(p, p)] += lambda * self.mass[p];
        }
        m
    }

    pub fn rhs(&self, basis: &GalerkinBasis, rhs: &RhsKind) -> Result<DVector<f64>> {
        match rhs {
            RhsKind::Drift { i } => self
                .drift_loads
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::InputDomain(format!("drift index {i} out of range"))),
            RhsKind::SingleMode { k, mode } => {
                if k.len() != basis.dim() {
                    return Err(Error::InputDomain("mode index has wrong dimension".to_string()));
                }
                let idx = basis
                    .index_of(k, *mode)
                    .ok_or_else(|| Error::InputDomain(format!("mode {k:?} not in the basis")))?;
                let mut r = DVector::zeros(basis.len());
                r[idx] = self.mass[idx];
                Ok(r)
            }
        }
    }

    /// Solves for several right-hand sides sharing one factorisation.
    pub fn solve_many(
        &self,
        basis: &GalerkinBasis,
        lambda: f64,
        rhs_kinds: &[RhsKind],
    ) -> Result<Vec<CorrectorSolution>> {
        let d = basis.dim();
        let a = self.system(lambda);
        let lu = a.clone().lu();
        let condition = condition_estimate(&lu.u());
        let mut out = Vec::with_capacity(rhs_kinds.len());
        for kind in rhs_kinds {
            let r = self.rhs(basis, kind)?;
            let mut x = lu.solve(&r).ok_or(Error::SingularSystem { lambda, condition })?;
            for _ in 0..3 {
                let res = &r - &a * &x;
                if res.amax() <= SOLVE_TOL * r.amax().max(f64::MIN_POSITIVE) {
                    break;
                }
                x += lu.solve(&res).ok_or(Error::SingularSystem { lambda, condition })?;
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularSystem { lambda, condition });
            }
            let residual_vec = &a * &x - &r;
            let scale = (a.amax() * x.amax()).max(r.amax()).max(f64::MIN_POSITIVE);
            let residual = residual_vec.amax() / scale;
            let lambda_l2 = lambda * x.dot(&self.mass.component_mul(&x));
            let bilinear = x.dot(&(&self.form * &x));
            let h1 = x.dot(&(&self.a_tilde_form * &x));
            let pairing = r.dot(&x);
            let energy_defect = (lambda_l2 + bilinear - pairing).abs() / pairing.abs().max(f64::MIN_POSITIVE);
            let grad_l2 = x.dot(&self.laplacian.component_mul(&x));
            out.push(CorrectorSolution {
                y: self.fields.y.as_slice().to_vec(),
                lambda,
                operator_kind: self.kind,
                rhs_kind: kind.clone(),
                coefficients: x.iter().copied().collect(),
                energy: Energies { lambda_l2, h1, bilinear, pairing, grad_l2 },
                energy_defect: if pairing == 0.0 { 0.0 } else { energy_defect },
                residual,
            });
        }
        let _ = d;
        Ok(out)
    }

    pub fn solve(&self, basis: &GalerkinBasis, lambda: f64, rhs: &RhsKind) -> Result<CorrectorSolution> {
        Ok(self.solve_many(basis, lambda, core::slice::from_ref(rhs))?.remove(0))
    }

    /// `‖u‖₁²` of an arbitrary coefficient vector.
    pub fn h1_sq(&self, c: &[f64]) -> f64 {
        let x = DVector::from_column_slice(c);
        x.dot(&(&self.a_tilde_form * &x))
    }

    pub fn l2_sq(&self, c: &[f64]) -> f64 {
        c.iter().zip(self.mass.iter()).map(|(v, m)| v * v * m).sum()
    }
}

fn condition_estimate(u: &DMatrix<f64>) -> f64 {
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Energies {
    /// `λ |u|₂²`.
    pub lambda_l2: f64,
    /// `‖u‖₁² = ½ (ã Du, Du)₂`.
    pub h1: f64,
    /// `B(u, u)` of the operator that was solved.
    pub bilinear: f64,
    /// `(rhs, u)₂`.
    pub pairing: f64,
    /// `|Du|₂²`.
    pub grad_l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrectorSolution {
    pub y: Vec<f64>,
    pub lambda: f64,
    pub operator_kind: OperatorKind,
    pub rhs_kind: RhsKind,
    pub coefficients: Vec<f64>,
    pub energy: Energies,
    /// Relative defect of `λ|u|² + B(u, u) = (rhs, u)`.
    pub energy_defect: f64,
    /// Max-norm weak residual over basis functions, relative.
    pub residual: f64,
}

impl CorrectorSolution {
    pub fn gradient(&self, basis: &GalerkinBasis, x: &SVec) -> SVec {
        basis.gradient(&self.coefficients, x)
    }

    /// `σ̃* Du` at `x`.
    pub fn directional_gradient(&self, medium: &MediumSpec, basis: &GalerkinBasis, x: &SVec) -> SVec {
        let st = medium.coeffs_at(x, &SVec::zeros(basis.dim())).sigma_tilde;
        st.transpose().mul_vec(&self.gradient(basis, x))
    }

    pub fn value(&self, basis: &GalerkinBasis, x: &SVec) -> f64 {
        basis.eval(&self.coefficients, x)
    }
}

pub fn assemble(
    medium: &MediumSpec,
    problem: &ResolventProblem,
    basis: &GalerkinBasis,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    problem.check(medium.dim())?;
    let op = Operator::prepare(medium, basis, &problem.y, problem.operator_kind)?;
    let rhs = op.rhs(basis, &problem.rhs_kind)?;
    Ok((op.system(problem.lambda), rhs))
}

pub fn solve_resolvent(
    medium: &MediumSpec,
    problem: &ResolventProblem,
    basis: &GalerkinBasis,
) -> Result<CorrectorSolution> {
    problem.check(medium.dim())?;
    let op = Operator::prepare(medium, basis, &problem.y, problem.operator_kind)?;
    op.solve(basis, problem.lambda, &problem.rhs_kind)
}

/// Ladder must hold at least three positive values, each at most a quarter
/// of its predecessor.
pub fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 3 {
        return Err(Error::Precondition("lambda ladder needs at least 3 values".to_string()));
    }
    if ladder.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InputDomain("lambda values must be positive".to_string()));
    }
    if ladder.windows(2).any(|w| w[1] > 0.25 * w[0]) {
        return Err(Error::Precondition("lambda ladder must decrease by a factor >= 4".to_string()));
    }
    Ok(())
}

/// Tolerated growth of `λ|u_λ|²` between rungs, relative to its first value.
pub const DECAY_SLACK: f64 = 1e-9;

pub fn check_decay(decay: &[f64]) -> Result<()> {
    let scale = decay.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for w in decay.windows(2) {
        if w[1] > w[0] + DECAY_SLACK * scale + 1e-300 {
            return Err(Error::ExtrapolationUnreliable(format!(
                "lambda |u|^2 not decreasing: {:.6e} -> {:.6e}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Order-one Richardson step from the last two rungs of a ladder.
pub fn richardson(l1: f64, v1: f64, l2: f64, v2: f64) -> f64 {
    let r = l2 / l1;
    (v2 - r * v1) / (1.0 - r)
}

#[derive(Debug, Clone)]
pub struct ExtrapolatedCorrector {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<CorrectorSolution>,
    /// `λ|u_λ|₂²` along the ladder.
    pub lambda_decay: Vec<f64>,
    /// Extrapolated coefficients; their gradient gives the limit `ξ̃ = σ̃* Du`.
    pub limit_coefficients: Vec<f64>,
}

impl ExtrapolatedCorrector {
    pub fn limit_directional_gradient(&self, medium: &MediumSpec, basis: &GalerkinBasis, x: &SVec) -> SVec {
        let st = medium.coeffs_at(x, &SVec::zeros(basis.dim())).sigma_tilde;
        st.transpose().mul_vec(&basis.gradient(&self.limit_coefficients, x))
    }
}

pub fn extrapolate_corrector(
    medium: &MediumSpec,
    problem: &ResolventProblem,
    ladder: &[f64],
    basis: &GalerkinBasis,
) -> Result<ExtrapolatedCorrector> {
    check_ladder(ladder)?;
    problem.with_lambda(ladder[0]).check(medium.dim())?;
    let op = Operator::prepare(medium, basis, &problem.y, problem.operator_kind)?;
    let solutions = ladder.iter().map(|&l| op.solve(basis, l, &problem.rhs_kind)).collect::<Result<Vec<_>>>()?;
    let lambda_decay: Vec<f64> = solutions.iter().map(|s| s.energy.lambda_l2).collect();
    check_decay(&lambda_decay)?;
    let n = ladder.len();
    let (s1, s2) = (&solutions[n - 2], &solutions[n - 1]);
    let limit_coefficients = s1
        .coefficients
        .iter()
        .zip(&s2.coefficients)
        .map(|(&v1, &v2)| richardson(ladder[n - 2], v1, ladder[n - 1], v2))
        .collect();
    Ok(ExtrapolatedCorrector { lambdas: ladder.to_vec(), solutions, lambda_decay, limit_coefficients })
}

/// Central finite differences of `u_λ` in one slow direction.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct YDerivative {
    pub direction: usize,
    pub h_step: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub first_h1: f64,
    pub first_lambda_l2: f64,
    pub second_h1: f64,
    pub second_lambda_l2: f64,
}

pub fn corrector_y_derivatives(
    medium: &MediumSpec,
    problem: &ResolventProblem,
    basis: &GalerkinBasis,
    h_step: f64,
) -> Result<Vec<YDerivative>> {
    if !(1e-6..=1e-2).contains(&h_step) {
        return Err(Error::InputDomain(format!("h_step {h_step} outside [1e-6, 1e-2]")));
    }
    problem.check(medium.dim())?;
    let d = medium.dim();
    let centre = solve_resolvent(medium, problem, basis)?;
    let op = Operator::prepare(medium, basis, &problem.y, problem.operator_kind)?;
    (0..d)
        .map(|j| {
            let mut yp = problem.y.clone();
            let mut ym = problem.y.clone();
            yp[j] += h_step;
            ym[j] -= h_step;
            let up = solve_resolvent(medium, &problem.with_y(&yp), basis)?;
            let um = solve_resolvent(medium, &problem.with_y(&ym), basis)?;
            let first: Vec<f64> =
                up.coefficients.iter().zip(&um.coefficients).map(|(p, m)| (p - m) / (2.0 * h_step)).collect();
            let second: Vec<f64> = up
                .coefficients
                .iter()
                .zip(&um.coefficients)
                .zip(&centre.coefficients)
                .map(|((p, m), c)| (p - 2.0 * c + m) / (h_step * h_step))
                .collect();
            Ok(YDerivative {
                direction: j,
                h_step,
                first_h1: libm::sqrt(op.h1_sq(&first).max(0.0)),
                first_lambda_l2: problem.lambda * op.l2_sq(&first),
                second_h1: libm::sqrt(op.h1_sq(&second).max(0.0)),
                second_lambda_l2: problem.lambda * op.l2_sq(&second),
                first,
                second,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ViscosityDecay {
    pub n: Vec<f64>,
    /// `‖u^{(n)} - u‖₁`.
    pub h1_gap: Vec<f64>,
    /// `n⁻¹ |Du^{(n)}|₂²`.
    pub viscous_energy: Vec<f64>,
}

pub fn viscosity_consistency(
    medium: &MediumSpec,
    problem: &ResolventProblem,
    basis: &GalerkinBasis,
    n_ladder: &[f64],
) -> Result<ViscosityDecay> {
    if n_ladder.len() < 3 {
        return Err(Error::Precondition("viscosity ladder needs at least 3 values".to_string()));
    }
    let base_kind = problem.operator_kind.inviscid();
    let base = ResolventProblem { operator_kind: base_kind, ..problem.clone() };
    let op = Operator::prepare(medium, basis, &base.y, base_kind)?;
    let u = solve_resolvent(medium, &base, basis)?;
    let mut h1_gap = Vec::new();
    let mut viscous_energy = Vec::new();
    for &n in n_ladder {
        let vp = ResolventProblem { operator_kind: base_kind.with_viscosity(n), ..base.clone() };
        let un = solve_resolvent(medium, &vp, basis)?;
        let diff: Vec<f64> = un.coefficients.iter().zip(&u.coefficients).map(|(a, b)| a - b).collect();
        h1_gap.push(libm::sqrt(op.h1_sq(&diff).max(0.0)));
        viscous_energy.push(un.energy.grad_l2 / n);
    }
    Ok(ViscosityDecay { n: n_ladder.to_vec(), h1_gap, viscous_energy })
}

/// Torus average of `(I + Du)ᵀ C (I + Du)` for correctors `u_1..u_d`
/// given as gradient columns on the quadrature grid.
pub fn corrected_average(field: &MatrixField, grads: &[Vec<SVec>]) -> Mat {
    let d = field.dim;
    let mut acc = Mat::zeros(d);
    let g = field.samples.len();
    for (pt, c) in field.samples.iter().enumerate() {
        let mut j = Mat::identity(d);
        for (i, gi) in grads.iter().enumerate() {
            for r in 0..d {
                j.m[r][i] += gi[pt].v[r];
            }
        }
        acc = acc.add(&j.transpose().mul(&c.mul(&j)));
    }
    acc.scale(1.0 / g as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Preset;

    fn identity_1d() -> MediumSpec {
        MediumSpec::new(Preset::Constant { dim: 1, sigma: alloc::vec![1.0], h: None, sigma_tilde: None }, 1.0, 10.0)
            .unwrap()
    }

    #[test]
    fn diagonal_entry_of_cos_mode() {
        let m = identity_1d();
        let basis = GalerkinBasis::new(1, 4);
        let p = ResolventProblem::new(&[0.0], 1.0, OperatorKind::Full, RhsKind::Drift { i: 0 });
        let (a, r) = assemble(&m, &p, &basis).unwrap();
        let idx = basis.index_of(&[1], ModeKind::Cos).unwrap();
        assert!((a[(idx, idx)] - 0.75).abs() < 1e-15);
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn single_mode_solve() {
        let m = identity_1d();
        let basis = GalerkinBasis::new(1, 4);
        let rhs = RhsKind::SingleMode { k: alloc::vec![1], mode: ModeKind::Cos };
        let s = solve_resolvent(&m, &ResolventProblem::new(&[0.0], 1.0, OperatorKind::Full, rhs), &basis).unwrap();
        let idx = basis.index_of(&[1], ModeKind::Cos).unwrap();
        for (p, c) in s.coefficients.iter().enumerate() {
            let expected = if p == idx { 2.0 / 3.0 } else { 0.0 };
            assert!((c - expected).abs() < 1e-14);
        }
        assert!(s.energy_defect < 1e-12);
    }

    #[test]
    fn ladder_preconditions() {
        assert!(check_ladder(&[0.1, 0.01]).is_err());
        assert!(check_ladder(&[0.1, 0.05, 0.001]).is_err());
        assert!(check_ladder(&[0.1, 0.01, 0.001]).is_ok());
        assert!(check_decay(&[1.0, 0.5, 0.6]).is_err());
    }

    #[test]
    fn richardson_removes_linear_term() {
        let f = |l: f64| 2.0 + 3.0 * l;
        assert!((richardson(1e-2, f(1e-2), 1e-3, f(1e-3)) - 2.0).abs() < 1e-14);
    }
}
