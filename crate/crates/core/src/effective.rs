//! Homogenised coefficients: `Ā(y)`, `H̄(y)` from λ-extrapolated correctors,
//! `B̄(y)` by differencing a tabulated `Ā + H̄`, the variational matrix `Ã`
//! of the control field, and the kernel geometry of `Ā`.

use crate::corrector::{check_decay, check_ladder, corrected_average, richardson, Operator, OperatorKind, RhsKind};
use crate::error::{Error, Result};
use crate::galerkin::GalerkinBasis;
use crate::linalg::{subspace_gap, Mat, SVec, MAX_DIM};
use crate::medium::{MediumSpec, Potential};
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

/// Relative eigenvalue threshold separating `Ker Ā` from its complement.
pub const KERNEL_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const ANGLE_TOL: f64 = 1e-6;
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// `Ā`, `H̄` at one slow point, with the ladder history.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTensors {
    pub y: SVec,
    pub a_bar: Mat,
    pub h_bar: Mat,
    /// `λ|u_λ^i|₂²` per drift index, along the ladder.
    pub lambda_decay: Vec<Vec<f64>>,
    /// Raw `Ā(λ)` per rung.
    pub a_ladder: Vec<Mat>,
}

fn lambda_average(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    gradients: &[DMatrix<f64>],
    op: &Operator,
    lambda: f64,
) -> Result<(Mat, Mat, Vec<f64>)> {
    let d = medium.dim();
    let rhs: Vec<RhsKind> = (0..d).map(|i| RhsKind::Drift { i }).collect();
    let sols = op.solve_many(basis, lambda, &rhs)?;
    let grads: Vec<Vec<SVec>> = sols
        .iter()
        .map(|s| {
            let c = DVector::from_column_slice(&s.coefficients);
            let cols: Vec<DVector<f64>> = gradients.iter().map(|g| g * &c).collect();
            (0..cols[0].len())
                .map(|pt| {
                    let mut v = SVec::zeros(d);
                    for j in 0..d {
                        v.v[j] = cols[j][pt];
                    }
                    v
                })
                .collect()
        })
        .collect();
    let a = corrected_average(&op.fields.a, &grads);
    let h = if op.fields.h_is_zero { Mat::zeros(d) } else { corrected_average(&op.fields.h, &grads) };
    Ok((a.symmetrized(), antisymmetrized(&h), sols.iter().map(|s| s.energy.lambda_l2).collect()))
}

fn antisymmetrized(h: &Mat) -> Mat {
    h.sub(&h.transpose()).scale(0.5)
}

/// Per-point evaluation; `gradients` are [`GalerkinBasis::gradient_matrices`].
pub fn effective_point_with(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    gradients: &[DMatrix<f64>],
    y: &[f64],
    ladder: &[f64],
) -> Result<PointTensors> {
    check_ladder(ladder)?;
    let op = Operator::prepare(medium, basis, y, OperatorKind::Full)?;
    let d = medium.dim();
    let mut a_ladder = Vec::new();
    let mut h_ladder = Vec::new();
    let mut decay = vec![Vec::new(); d];
    for &l in ladder {
        let (a, h, e) = lambda_average(medium, basis, gradients, &op, l)?;
        a_ladder.push(a);
        h_ladder.push(h);
        for i in 0..d {
            decay[i].push(e[i]);
        }
    }
    for seq in &decay {
        check_decay(seq)?;
    }
    let n = ladder.len();
    let extrap = |m1: &Mat, m2: &Mat| {
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.m[i][j] = richardson(ladder[n - 2], m1.m[i][j], ladder[n - 1], m2.m[i][j]);
            }
        }
        out
    };
    let a_bar = extrap(&a_ladder[n - 2], &a_ladder[n - 1]).symmetrized();
    let h_bar = antisymmetrized(&extrap(&h_ladder[n - 2], &h_ladder[n - 1]));
    Ok(PointTensors { y: SVec::from_slice(y), a_bar, h_bar, lambda_decay: decay, a_ladder })
}

pub fn effective_point(medium: &MediumSpec, basis: &GalerkinBasis, y: &[f64], ladder: &[f64]) -> Result<PointTensors> {
    effective_point_with(medium, basis, &basis.gradient_matrices(), y, ladder)
}

pub fn effective_a(medium: &MediumSpec, basis: &GalerkinBasis, y: &[f64], ladder: &[f64]) -> Result<Mat> {
    Ok(effective_point(medium, basis, y, ladder)?.a_bar)
}

pub fn effective_h(medium: &MediumSpec, basis: &GalerkinBasis, y: &[f64], ladder: &[f64]) -> Result<Mat> {
    Ok(effective_point(medium, basis, y, ladder)?.h_bar)
}

/// Rectangular grid of slow points, axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct YGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub count: Vec<usize>,
}

impl YGrid {
    /// The same axis `[lower, upper]` with `count` nodes in every direction.
    pub fn cube(d: usize, lower: f64, upper: f64, count: usize) -> Self {
        YGrid { lower: vec![lower; d], upper: vec![upper; d], count: vec![count; d] }
    }

    pub fn dim(&self) -> usize {
        self.count.len()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || d > MAX_DIM || self.lower.len() != d || self.upper.len() != d {
            return Err(Error::InputDomain("inconsistent y-grid dimensions".to_string()));
        }
        for i in 0..d {
            if self.count[i] < 3
                || !(self.upper[i] > self.lower[i])
                || !self.lower[i].is_finite()
                || !self.upper[i].is_finite()
            {
                return Err(Error::InputDomain(format!("y-grid axis {i} needs >= 3 nodes on a finite interval")));
            }
        }
        Ok(())
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.count[axis] - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.count.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        let mut stride = 1;
        for (i, &k) in idx.iter().enumerate().take(self.dim()) {
            f += k * stride;
            stride *= self.count[i];
        }
        f
    }

    pub fn multi(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for i in 0..self.dim() {
            idx[i] = flat % self.count[i];
            flat /= self.count[i];
        }
        idx
    }

    pub fn node(&self, idx: &[usize]) -> SVec {
        let mut y = SVec::zeros(self.dim());
        for i in 0..self.dim() {
            y.v[i] = self.lower[i] + idx[i] as f64 * self.step(i);
        }
        y
    }

    pub fn points(&self) -> Vec<SVec> {
        (0..self.len()).map(|f| self.node(&self.multi(f))).collect()
    }

    pub fn contains(&self, y: &SVec) -> bool {
        (0..self.dim()).all(|i| y.v[i] >= self.lower[i] && y.v[i] <= self.upper[i])
    }
}

/// Tabulated homogenised coefficients.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectiveTensors {
    pub dim: usize,
    pub y_grid: YGrid,
    /// Row-major `Ā` per grid point.
    pub a_bar: Vec<Vec<f64>>,
    pub h_bar: Vec<Vec<f64>>,
    pub b_bar: Vec<Vec<f64>>,
    /// Points where a one-sided difference was used for `B̄`.
    pub boundary: Vec<bool>,
    pub kernel_basis: Vec<Vec<f64>>,
    /// `(α_min, α_max)` of `Ā` on `K^⊥` over the grid.
    pub ellipticity: (f64, f64),
}

impl EffectiveTensors {
    pub fn a_at(&self, flat: usize) -> Mat {
        Mat::from_row_major(self.dim, &self.a_bar[flat])
    }

    pub fn h_at(&self, flat: usize) -> Mat {
        Mat::from_row_major(self.dim, &self.h_bar[flat])
    }

    pub fn b_at(&self, flat: usize) -> SVec {
        SVec::from_slice(&self.b_bar[flat])
    }

    pub fn kernel(&self) -> Vec<SVec> {
        self.kernel_basis.iter().map(|k| SVec::from_slice(k)).collect()
    }

    /// Assembles the table from per-point `Ā`, `H̄` (grid order) and runs
    /// the geometry analysis.
    pub fn from_points(grid: &YGrid, a: &[Mat], h: &[Mat], potential: Potential) -> Result<(Self, GeometryReport)> {
        grid.check()?;
        if a.len() != grid.len() || h.len() != grid.len() {
            return Err(Error::InputDomain("tensor count does not match the y-grid".to_string()));
        }
        let d = grid.dim();
        let (b, boundary) = effective_b(grid, a, h, potential);
        let mut t = EffectiveTensors {
            dim: d,
            y_grid: grid.clone(),
            a_bar: a.iter().map(Mat::to_row_major).collect(),
            h_bar: h.iter().map(Mat::to_row_major).collect(),
            b_bar: b.iter().map(|v| v.as_slice().to_vec()).collect(),
            boundary,
            kernel_basis: Vec::new(),
            ellipticity: (0.0, 0.0),
        };
        let geo = kernel_and_geometry(&t)?;
        t.kernel_basis = geo.kernel_basis.clone();
        t.ellipticity = (geo.alpha_min, geo.alpha_max);
        Ok((t, geo))
    }
}

/// Tabulates `Ā`, `H̄` on every node of `grid` (single-threaded).
pub fn tabulate(
    medium: &MediumSpec,
    basis: &GalerkinBasis,
    grid: &YGrid,
    ladder: &[f64],
) -> Result<(EffectiveTensors, GeometryReport)> {
    grid.check()?;
    if grid.dim() != medium.dim() {
        return Err(Error::InputDomain("y-grid and medium dimensions differ".to_string()));
    }
    let gradients = basis.gradient_matrices();
    let pts = grid
        .points()
        .iter()
        .map(|y| effective_point_with(medium, basis, &gradients, y.as_slice(), ladder))
        .collect::<Result<Vec<_>>>()?;
    tabulate_from(medium, grid, &pts)
}

/// Table from per-point results computed elsewhere (grid order).
pub fn tabulate_from(
    medium: &MediumSpec,
    grid: &YGrid,
    pts: &[PointTensors],
) -> Result<(EffectiveTensors, GeometryReport)> {
    if grid.dim() != medium.dim() {
        return Err(Error::InputDomain("y-grid and medium dimensions differ".to_string()));
    }
    let a: Vec<Mat> = pts.iter().map(|p| p.a_bar).collect();
    let h: Vec<Mat> = pts.iter().map(|p| p.h_bar).collect();
    EffectiveTensors::from_points(grid, &a, &h, medium.potential)
}

/// `B̄_i = ½ Σ_j [∂_j(Ā + H̄)_{ji} - 2 ∂_jV (Ā + H̄)_{ji}]` with central
/// differences inside the grid and second-order one-sided ones on its faces.
pub fn effective_b(grid: &YGrid, a: &[Mat], h: &[Mat], potential: Potential) -> (Vec<SVec>, Vec<bool>) {
    let d = grid.dim();
    let s: Vec<Mat> = a.iter().zip(h).map(|(a, h)| a.add(h)).collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut boundary = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        let idx = grid.multi(flat);
        let y = grid.node(&idx);
        let grad_v = match potential {
            Potential::Gaussian => y,
            Potential::Flat => SVec::zeros(d),
        };
        let mut on_face = false;
        let mut b = SVec::zeros(d);
        for j in 0..d {
            let n = grid.count[j];
            let hstep = grid.step(j);
            let at = |k: usize| {
                let mut m = idx;
                m[j] = k;
                &s[grid.flat(&m)]
            };
            let k = idx[j];
            let deriv = if k == 0 {
                on_face = true;
                at(0).scale(-3.0).add(&at(1).scale(4.0)).sub(at(2)).scale(0.5 / hstep)
            } else if k == n - 1 {
                on_face = true;
                at(n - 1).scale(3.0).sub(&at(n - 2).scale(4.0)).add(at(n - 3)).scale(0.5 / hstep)
            } else {
                at(k + 1).sub(at(k - 1)).scale(0.5 / hstep)
            };
            let here = &s[flat];
            for i in 0..d {
                b.v[i] += 0.5 * (deriv.m[j][i] - 2.0 * grad_v.v[j] * here.m[j][i]);
            }
        }
        out.push(b);
        boundary.push(on_face);
    }
    (out, boundary)
}

/// Outcome of the kernel analysis over the whole table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometryReport {
    pub kernel_dim: usize,
    pub kernel_basis: Vec<Vec<f64>>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Largest principal angle (radians) between `Ker Ā(y)` and `Ker Ā(y₀)`.
    pub worst_angle: f64,
    /// `max |⟨B̄, k⟩| / max |B̄|` over the table.
    pub worst_b_kernel: f64,
    /// `max |H̄ k| / max |H̄|` over the table.
    pub worst_h_kernel: f64,
    pub worst_asymmetry: f64,
    pub worst_antisymmetry: f64,
    pub min_eigenvalue: f64,
    /// `max |Δ²Ā| / h²` over interior nodes.
    pub second_difference_bound: f64,
    pub pass: bool,
}

fn kernel_of(a: &Mat) -> (Vec<SVec>, Vec<f64>) {
    let e = a.sym_eigen();
    let spec = e.values.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut ker = Vec::new();
    let mut range = Vec::new();
    for k in 0..a.n {
        if e.values.v[k] <= KERNEL_TOL * spec {
            ker.push(e.column(k));
        } else {
            range.push(e.values.v[k]);
        }
    }
    (ker, range)
}

pub fn kernel_and_geometry(t: &EffectiveTensors) -> Result<GeometryReport> {
    let n = t.a_bar.len();
    if n < 2 {
        return Err(Error::Precondition("kernel geometry needs at least two grid points".to_string()));
    }
    let (k0, _) = kernel_of(&t.a_at(0));
    let mut alpha_min = f64::INFINITY;
    let mut alpha_max: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    let mut worst_h: f64 = 0.0;
    let mut worst_asym: f64 = 0.0;
    let mut worst_anti: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut b_scale: f64 = 0.0;
    let mut h_scale: f64 = 0.0;
    for p in 0..n {
        let a = t.a_at(p);
        let h = t.h_at(p);
        let b = t.b_at(p);
        let (k, range) = kernel_of(&a);
        if k.len() != k0.len() {
            return Err(Error::GeometryViolation(format!(
                "kernel dimension {} at grid point {p} differs from {} at the first point",
                k.len(),
                k0.len()
            )));
        }
        let gap = subspace_gap(&k, &k0).min(1.0);
        worst_angle = worst_angle.max(libm::asin(gap));
        for v in range {
            alpha_min = alpha_min.min(v);
            alpha_max = alpha_max.max(v);
        }
        worst_asym = worst_asym.max(a.asymmetry());
        worst_anti = worst_anti.max(h.add(&h.transpose()).max_abs());
        min_eig = min_eig.min(a.min_eigenvalue());
        b_scale = b_scale.max(b.norm());
        h_scale = h_scale.max(h.norm());
        for kv in &k0 {
            worst_b = worst_b.max(b.dot(kv).abs());
            worst_h = worst_h.max(h.mul_vec(kv).norm());
        }
    }
    // Relative to the table-wide size: B̄ vanishes at the potential minimum.
    if b_scale > 0.0 {
        worst_b /= b_scale;
    }
    if h_scale > 0.0 {
        worst_h /= h_scale;
    }
    if alpha_min == f64::INFINITY {
        alpha_min = 0.0;
    }
    let second = second_difference_bound(t);
    let scale = (0..n).map(|p| t.a_at(p).max_abs()).fold(1.0f64, f64::max);
    let pass = worst_asym <= SYMMETRY_TOL * scale
        && worst_anti <= SYMMETRY_TOL * scale
        && min_eig >= -PSD_TOL * scale
        && worst_angle <= ANGLE_TOL
        && worst_b <= ORTHOGONALITY_TOL
        && worst_h <= ORTHOGONALITY_TOL
        && (k0.len() == t.dim || alpha_min > 0.0);
    Ok(GeometryReport {
        kernel_dim: k0.len(),
        kernel_basis: k0.iter().map(|k| k.as_slice().to_vec()).collect(),
        alpha_min,
        alpha_max,
        worst_angle,
        worst_b_kernel: worst_b,
        worst_h_kernel: worst_h,
        worst_asymmetry: worst_asym,
        worst_antisymmetry: worst_anti,
        min_eigenvalue: min_eig,
        second_difference_bound: second,
        pass,
    })
}

fn second_difference_bound(t: &EffectiveTensors) -> f64 {
    let g = &t.y_grid;
    let mut worst: f64 = 0.0;
    for flat in 0..g.len() {
        let idx = g.multi(flat);
        for j in 0..g.dim() {
            if idx[j] == 0 || idx[j] + 1 >= g.count[j] {
                continue;
            }
            let mut lo = idx;
            let mut hi = idx;
            lo[j] -= 1;
            hi[j] += 1;
            let dd = t.a_at(g.flat(&hi)).sub(&t.a_at(flat).scale(2.0)).add(&t.a_at(g.flat(&lo)));
            worst = worst.max(dd.max_abs() / (g.step(j) * g.step(j)));
        }
    }
    worst
}

/// Minimisation of `M[|σ̃*(Dφ + x)|²]` over the Galerkin space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VariationalResult {
    pub a_tilde: Vec<f64>,
    /// Largest `‖φ_i‖₁` over the coordinate directions.
    pub minimizer_norm: f64,
}

impl VariationalResult {
    pub fn matrix(&self, d: usize) -> Mat {
        Mat::from_row_major(d, &self.a_tilde)
    }
}

/// Eigenvalues below this fraction of the largest are treated as the gauge
/// null space in the minimum-norm solve.
pub const PINV_TOL: f64 = 1e-10;

pub fn variational_a_tilde(medium: &MediumSpec, basis: &GalerkinBasis) -> Result<VariationalResult> {
    let d = medium.dim();
    let field = medium.a_tilde_field(basis);
    let tail = field.tail_energy();
    if tail > crate::galerkin::TAIL_TOL {
        return Err(Error::Resolution { tail });
    }
    let f = basis.stiffness(&field);
    let eig = SymmetricEigen::new(f.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let loads: Vec<DVector<f64>> = (0..d).map(|i| basis.column_load(&field, i)).collect();
    // Normal equations F c = -g solved by the pseudo-inverse.
    let minimizers: Vec<DVector<f64>> = loads
        .iter()
        .map(|g| {
            let proj = eig.eigenvectors.transpose() * g;
            let scaled = DVector::from_iterator(
                proj.len(),
                proj.iter().zip(eig.eigenvalues.iter()).map(|(p, &l)| {
                    if top > 0.0 && l.abs() > PINV_TOL * top {
                        -p / l
                    } else {
                        0.0
                    }
                }),
            );
            &eig.eigenvectors * scaled
        })
        .collect();
    let mean = field.mean();
    let mut at = Mat::zeros(d);
    // Polarisation: the optimal value is quadratic in x with the cross
    // term `⟨ã⟩_ij + c_iᵀ g_j`.
    for i in 0..d {
        for j in 0..d {
            at.m[i][j] = mean.m[i][j] + 0.5 * (minimizers[i].dot(&loads[j]) + minimizers[j].dot(&loads[i]));
        }
    }
    let minimizer_norm = minimizers.iter().map(|c| libm::sqrt((0.5 * c.dot(&(&f * c))).max(0.0))).fold(0.0, f64::max);
    Ok(VariationalResult { a_tilde: at.symmetrized().to_row_major(), minimizer_norm })
}

/// Two-sided comparison `M⁻¹⟨x, Ãx⟩ ≤ ⟨x, Ā(y)x⟩ ≤ 2C²M⟨x, Ãx⟩` with
/// `C = 1 + M²`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SandwichReport {
    pub constant: f64,
    /// Worst `M⁻¹⟨x,Ãx⟩ - ⟨x,Āx⟩` (positive means violated), relative to `|x|²`.
    pub lower_violation: f64,
    pub upper_violation: f64,
    pub pass: bool,
}

pub fn sandwich_check(t: &EffectiveTensors, a_tilde: &Mat, m: f64, samples: usize, seed: u64) -> SandwichReport {
    let d = t.dim;
    let c = 1.0 + m * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<SVec> = (0..samples)
        .map(|_| {
            let mut x = SVec::zeros(d);
            for i in 0..d {
                x.v[i] = StandardNormal.sample(&mut rng);
            }
            x
        })
        .collect();
    let scale = a_tilde.max_abs().max(1e-300);
    let mut lower: f64 = f64::NEG_INFINITY;
    let mut upper: f64 = f64::NEG_INFINITY;
    for p in 0..t.a_bar.len() {
        let a = t.a_at(p);
        for x in &xs {
            let n2 = x.dot(x).max(1e-300);
            let qa = a.quad(x) / n2;
            let qt = a_tilde.quad(x) / n2;
            lower = lower.max(qt / m - qa);
            upper = upper.max(qa - 2.0 * c * c * m * qt);
        }
    }
    let tol = 1e-8 * scale;
    SandwichReport { constant: c, lower_violation: lower, upper_violation: upper, pass: lower <= tol && upper <= tol }
}

/// Piecewise-cubic (four-node Lagrange per axis) interpolation of a table.
#[derive(Debug, Clone)]
pub struct TensorInterpolator {
    grid: YGrid,
    a: Vec<Mat>,
    h: Vec<Mat>,
    b: Vec<SVec>,
}

/// Interpolated coefficients at one slow point.
#[derive(Debug, Clone, Copy)]
pub struct Interpolated {
    pub a_bar: Mat,
    pub h_bar: Mat,
    pub b_bar: SVec,
}

impl TensorInterpolator {
    pub fn new(t: &EffectiveTensors) -> Self {
        TensorInterpolator {
            grid: t.y_grid.clone(),
            a: (0..t.a_bar.len()).map(|p| t.a_at(p)).collect(),
            h: (0..t.h_bar.len()).map(|p| t.h_at(p)).collect(),
            b: (0..t.b_bar.len()).map(|p| t.b_at(p)).collect(),
        }
    }

    pub fn grid(&self) -> &YGrid {
        &self.grid
    }

    /// `None` outside the table.
    pub fn at(&self, y: &SVec) -> Option<Interpolated> {
        if !y.is_finite() || !self.grid.contains(y) {
            return None;
        }
        let d = self.grid.dim();
        let mut base = [0usize; MAX_DIM];
        let mut weights = [[0.0f64; 4]; MAX_DIM];
        for i in 0..d {
            let n = self.grid.count[i];
            let h = self.grid.step(i);
            let s = (y.v[i] - self.grid.lower[i]) / h;
            let cell = (libm::floor(s) as isize).clamp(0, n as isize - 2) as usize;
            let start = cell.saturating_sub(1).min(n - 4.min(n));
            base[i] = start;
            let t = s - start as f64;
            let m = 4.min(n);
            for a in 0..m {
                let mut w = 1.0;
                for b in 0..m {
                    if a != b {
                        w *= (t - b as f64) / (a as f64 - b as f64);
                    }
                }
                weights[i][a] = w;
            }
        }
        let mut a_bar = Mat::zeros(d);
        let mut h_bar = Mat::zeros(d);
        let mut b_bar = SVec::zeros(d);
        let width: Vec<usize> = (0..d).map(|i| 4.min(self.grid.count[i])).collect();
        let total: usize = width.iter().product();
        for lin in 0..total {
            let mut rest = lin;
            let mut idx = [0usize; MAX_DIM];
            let mut w = 1.0;
            for i in 0..d {
                let o = rest % width[i];
                rest /= width[i];
                idx[i] = base[i] + o;
                w *= weights[i][o];
            }
            let f = self.grid.flat(&idx);
            a_bar = a_bar.add(&self.a[f].scale(w));
            h_bar = h_bar.add(&self.h[f].scale(w));
            b_bar = b_bar.add(&self.b[f].scale(w));
        }
        Some(Interpolated { a_bar: a_bar.symmetrized(), h_bar, b_bar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Preset;

    #[test]
    fn constant_b_bar_is_linear_restoring() {
        let g = YGrid::cube(1, -2.0, 2.0, 9);
        let a = vec![Mat::scalar(1, 1.5); 9];
        let h = vec![Mat::zeros(1); 9];
        let (b, flags) = effective_b(&g, &a, &h, Potential::Gaussian);
        for (p, y) in g.points().iter().enumerate() {
            assert!((b[p].v[0] + 1.5 * y.v[0]).abs() < 1e-14);
        }
        assert!(flags[0] && flags[8] && !flags[4]);
        let (b, _) = effective_b(&g, &a, &h, Potential::Flat);
        assert!(b.iter().all(|v| v.v[0] == 0.0));
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = YGrid::cube(1, -1.0, 1.0, 7);
        let f = |y: f64| 1.0 + y - 2.0 * y * y + 0.5 * y * y * y;
        let a: Vec<Mat> = g.points().iter().map(|y| Mat::scalar(1, f(y.v[0]))).collect();
        let t = EffectiveTensors {
            dim: 1,
            y_grid: g.clone(),
            a_bar: a.iter().map(Mat::to_row_major).collect(),
            h_bar: vec![vec![0.0]; 7],
            b_bar: vec![vec![0.0]; 7],
            boundary: vec![false; 7],
            kernel_basis: Vec::new(),
            ellipticity: (0.0, 0.0),
        };
        let it = TensorInterpolator::new(&t);
        for y in [-1.0, -0.93, -0.2, 0.0, 0.41, 0.99, 1.0] {
            let v = it.at(&SVec::from_slice(&[y])).unwrap().a_bar.m[0][0];
            assert!((v - f(y)).abs() < 1e-13, "{y}");
        }
        assert!(it.at(&SVec::from_slice(&[1.01])).is_none());
    }

    #[test]
    fn constant_medium_has_trivial_correctors() {
        let m = MediumSpec::new(
            Preset::Constant {
                dim: 2,
                sigma: vec![1.0, 0.0, 0.0, 1.0],
                h: Some(vec![0.0, 0.5, -0.5, 0.0]),
                sigma_tilde: None,
            },
            1.0,
            10.0,
        )
        .unwrap();
        let basis = GalerkinBasis::new(2, 3);
        let p = effective_point(&m, &basis, &[0.3, -0.2], &[0.1, 0.01, 0.001]).unwrap();
        assert_eq!(p.a_bar, Mat::identity(2));
        assert!((p.h_bar.m[0][1] - 0.5).abs() < 1e-15);
        assert!(p.lambda_decay.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn variational_identity() {
        let m = MediumSpec::new(
            Preset::Constant { dim: 2, sigma: vec![1.0, 0.0, 0.0, 1.0], h: None, sigma_tilde: None },
            1.0,
            10.0,
        )
        .unwrap();
        let v = variational_a_tilde(&m, &GalerkinBasis::new(2, 3)).unwrap();
        assert_eq!(v.matrix(2), Mat::identity(2));
        assert_eq!(v.minimizer_norm, 0.0);
    }
}
