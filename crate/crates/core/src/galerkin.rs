//! Real trigonometric Galerkin basis on the torus, Fourier coefficients of
//! sampled coefficient fields, and the assembled bilinear forms.
//!
//! All torus averages are tensor trapezoid sums on `nq` points per axis,
//! organised through the discrete Fourier transform of the coefficient
//! field: for trigonometric integrands of degree below `nq` this is the
//! exact average.

use crate::linalg::{Mat, SVec, MAX_DIM};
use crate::medium::grid_indices;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Relative mode-energy allowed beyond `nq / 4` before a field counts as
/// under-resolved.
pub const TAIL_TOL: f64 = 1e-6;

/// Fourier coefficients below this fraction of the largest are round-off.
pub const DFT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModeKind {
    Const,
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub k: [i64; MAX_DIM],
    pub kind: ModeKind,
}

impl Mode {
    /// Complex exponential expansion `φ = Σ α e^{i k·x}`.
    fn terms(&self, d: usize) -> ([(Complex64, [i64; MAX_DIM]); 2], usize) {
        let zero = (Complex64::new(0.0, 0.0), [0; MAX_DIM]);
        let mut neg = [0i64; MAX_DIM];
        for i in 0..d {
            neg[i] = -self.k[i];
        }
        match self.kind {
            ModeKind::Const => ([(Complex64::new(1.0, 0.0), self.k), zero], 1),
            ModeKind::Cos => ([(Complex64::new(0.5, 0.0), self.k), (Complex64::new(0.5, 0.0), neg)], 2),
            ModeKind::Sin => ([(Complex64::new(0.0, -0.5), self.k), (Complex64::new(0.0, 0.5), neg)], 2),
        }
    }

    fn phase(&self, x: &SVec) -> f64 {
        (0..x.n).map(|i| self.k[i] as f64 * x.v[i]).sum()
    }

    pub fn value(&self, x: &SVec) -> f64 {
        match self.kind {
            ModeKind::Const => 1.0,
            ModeKind::Cos => libm::cos(self.phase(x)),
            ModeKind::Sin => libm::sin(self.phase(x)),
        }
    }

    pub fn gradient(&self, x: &SVec) -> SVec {
        let f = match self.kind {
            ModeKind::Const => return SVec::zeros(x.n),
            ModeKind::Cos => -libm::sin(self.phase(x)),
            ModeKind::Sin => libm::cos(self.phase(x)),
        };
        let mut g = SVec::zeros(x.n);
        for i in 0..x.n {
            g.v[i] = f * self.k[i] as f64;
        }
        g
    }

    /// Torus average of `φ²`.
    pub fn mass(&self) -> f64 {
        match self.kind {
            ModeKind::Const => 1.0,
            _ => 0.5,
        }
    }
}

/// Ordered real Fourier modes `{1, cos(k·x), sin(k·x) : 0 < |k|_∞ <= cutoff}`
/// with the quadrature resolution used for every average.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinBasis {
    dim: usize,
    cutoff: usize,
    nq: usize,
    modes: Vec<Mode>,
}

impl GalerkinBasis {
    /// Basis with the default quadrature `nq = 4 * cutoff` (at least 8).
    pub fn new(dim: usize, cutoff: usize) -> Self {
        Self::with_quadrature(dim, cutoff, (4 * cutoff).max(8))
    }

    pub fn with_quadrature(dim: usize, cutoff: usize, nq: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        assert!(nq >= 4 * cutoff && nq >= 8, "quadrature must have nq >= 4 * cutoff");
        let side = 2 * cutoff + 1;
        let mut modes = vec![Mode { k: [0; MAX_DIM], kind: ModeKind::Const }];
        for idx in grid_indices(dim, side) {
            let mut k = [0i64; MAX_DIM];
            for i in 0..dim {
                k[i] = idx[i] as i64 - cutoff as i64;
            }
            // Keep the half-space whose first nonzero component is positive.
            match k[..dim].iter().find(|&&c| c != 0) {
                Some(&c) if c > 0 => {
                    modes.push(Mode { k, kind: ModeKind::Cos });
                    modes.push(Mode { k, kind: ModeKind::Sin });
                }
                _ => {}
            }
        }
        GalerkinBasis { dim, cutoff, nq, modes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn quadrature_points(&self) -> usize {
        self.nq
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn index_of(&self, k: &[i64], kind: ModeKind) -> Option<usize> {
        self.modes.iter().position(|m| m.kind == kind && m.k[..self.dim] == *k)
    }

    /// Quadrature nodes in flat order (axis 0 fastest).
    pub fn grid(&self) -> Vec<SVec> {
        quadrature_grid(self.dim, self.nq)
    }

    /// Stiffness of the identity field, `M[Dφ_p · Dφ_p] = |k|² M[φ_p²]`.
    pub fn laplacian_diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.modes.iter().map(|m| {
                let k2: i64 = m.k[..self.dim].iter().map(|k| k * k).sum();
                k2 as f64 * m.mass()
            }),
        )
    }

    /// Per-axis matrices `G_j[g, p] = ∂_j φ_p(x_g)` over the quadrature grid.
    pub fn gradient_matrices(&self) -> Vec<DMatrix<f64>> {
        let grid = self.grid();
        (0..self.dim)
            .map(|j| DMatrix::from_fn(grid.len(), self.len(), |g, p| self.modes[p].gradient(&grid[g]).v[j]))
            .collect()
    }

    pub fn mass_diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.modes.iter().map(Mode::mass))
    }

    /// `F[p, q] = M[Σ_{jl} C_jl ∂_l φ_q ∂_j φ_p]` for a sampled matrix field.
    pub fn stiffness(&self, field: &MatrixField) -> DMatrix<f64> {
        let d = self.dim;
        let n = self.len();
        let terms: Vec<_> = self.modes.iter().map(|m| m.terms(d)).collect();
        let mut out = DMatrix::zeros(n, n);
        for p in 0..n {
            if self.modes[p].kind == ModeKind::Const {
                continue;
            }
            let (tp, np) = &terms[p];
            for q in 0..n {
                if self.modes[q].kind == ModeKind::Const {
                    continue;
                }
                let (tq, nq) = &terms[q];
                let mut acc = Complex64::new(0.0, 0.0);
                for (ap, kp) in &tp[..*np] {
                    for (aq, kq) in &tq[..*nq] {
                        let mut m = [0i64; MAX_DIM];
                        for i in 0..d {
                            m[i] = -(kp[i] + kq[i]);
                        }
                        let mut s = Complex64::new(0.0, 0.0);
                        for j in 0..d {
                            if kp[j] == 0 {
                                continue;
                            }
                            for l in 0..d {
                                if kq[l] == 0 {
                                    continue;
                                }
                                s += field.entries[j][l].coeff(&m) * (kq[l] * kp[j]) as f64;
                            }
                        }
                        acc -= ap * aq * s;
                    }
                }
                out[(p, q)] = acc.re;
            }
        }
        out
    }

    /// `g[p] = M[(C e_i) · ∇φ_p] = M[Σ_j C_ji ∂_j φ_p]`.
    pub fn column_load(&self, field: &MatrixField, i: usize) -> DVector<f64> {
        let d = self.dim;
        DVector::from_iterator(
            self.len(),
            self.modes.iter().map(|mode| {
                let (t, nt) = mode.terms(d);
                let mut acc = Complex64::new(0.0, 0.0);
                if mode.kind == ModeKind::Const {
                    return 0.0;
                }
                for (a, k) in &t[..nt] {
                    let mut m = [0i64; MAX_DIM];
                    for c in 0..d {
                        m[c] = -k[c];
                    }
                    for j in 0..d {
                        acc += a * Complex64::new(0.0, k[j] as f64) * field.entries[j][i].coeff(&m);
                    }
                }
                acc.re
            }),
        )
    }

    /// Load of a scalar right-hand side: `r[p] = M[f φ_p]`.
    pub fn scalar_load(&self, field: &FourierField) -> DVector<f64> {
        let d = self.dim;
        DVector::from_iterator(
            self.len(),
            self.modes.iter().map(|mode| {
                let (t, nt) = mode.terms(d);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, k) in &t[..nt] {
                    let mut m = [0i64; MAX_DIM];
                    for c in 0..d {
                        m[c] = -k[c];
                    }
                    acc += a * field.coeff(&m);
                }
                acc.re
            }),
        )
    }

    pub fn eval(&self, coeffs: &[f64], x: &SVec) -> f64 {
        self.modes.iter().zip(coeffs).map(|(m, c)| c * m.value(x)).sum()
    }

    pub fn gradient(&self, coeffs: &[f64], x: &SVec) -> SVec {
        let mut g = SVec::zeros(self.dim);
        for (m, c) in self.modes.iter().zip(coeffs) {
            if *c != 0.0 {
                g = g.add(&m.gradient(x).scale(*c));
            }
        }
        g
    }

    /// Gradients of `coeffs` on every quadrature node.
    pub fn gradient_on_grid(&self, coeffs: &[f64]) -> Vec<SVec> {
        self.grid().iter().map(|x| self.gradient(coeffs, x)).collect()
    }
}

pub fn quadrature_grid(d: usize, nq: usize) -> Vec<SVec> {
    grid_indices(d, nq)
        .map(|idx| {
            let mut x = SVec::zeros(d);
            for i in 0..d {
                x.v[i] = TAU * idx[i] as f64 / nq as f64;
            }
            x
        })
        .collect()
}

/// Fourier coefficients `f̂(m) = M[f e^{-i m·x}]` of a real scalar field
/// sampled on an `nq^d` grid, stored in wrapped index order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    dim: usize,
    nq: usize,
    coeffs: Vec<Complex64>,
}

impl FourierField {
    pub fn sample(dim: usize, nq: usize, f: impl Fn(&SVec) -> f64) -> Self {
        let values: Vec<f64> = quadrature_grid(dim, nq).iter().map(f).collect();
        Self::from_samples(dim, nq, &values)
    }

    pub fn from_samples(dim: usize, nq: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), nq.pow(dim as u32));
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let twiddle: Vec<Complex64> = (0..nq)
            .map(|j| {
                let t = -TAU * j as f64 / nq as f64;
                Complex64::new(libm::cos(t), libm::sin(t))
            })
            .collect();
        let mut line = vec![Complex64::new(0.0, 0.0); nq];
        for axis in 0..dim {
            let stride = nq.pow(axis as u32);
            let total = data.len();
            for base in 0..total {
                if !(base / stride).is_multiple_of(nq) {
                    continue;
                }
                for (m, slot) in line.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..nq {
                        acc += data[base + j * stride] * twiddle[(m * j) % nq];
                    }
                    *slot = acc;
                }
                for (m, v) in line.iter().enumerate() {
                    data[base + m * stride] = *v;
                }
            }
        }
        let norm = 1.0 / values.len() as f64;
        data.iter_mut().for_each(|c| *c *= norm);
        // Transform round-off is flushed so constant fields stay exactly constant.
        let floor = DFT_FLOOR * data.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for c in data.iter_mut() {
            if c.norm() < floor {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        FourierField { dim, nq, coeffs: data }
    }

    fn flat(&self, m: &[i64; MAX_DIM]) -> usize {
        let n = self.nq as i64;
        let mut flat = 0usize;
        let mut stride = 1usize;
        for i in 0..self.dim {
            flat += (m[i].rem_euclid(n) as usize) * stride;
            stride *= self.nq;
        }
        flat
    }

    pub fn coeff(&self, m: &[i64; MAX_DIM]) -> Complex64 {
        self.coeffs[self.flat(m)]
    }

    fn signed(&self, flat: usize) -> [i64; MAX_DIM] {
        let mut m = [0i64; MAX_DIM];
        let mut rest = flat;
        for slot in m.iter_mut().take(self.dim) {
            let r = (rest % self.nq) as i64;
            rest /= self.nq;
            *slot = if r >= (self.nq as i64 + 1) / 2 { r - self.nq as i64 } else { r };
        }
        m
    }

    /// Relative energy in modes with `|m|_∞ > nq / 4`.
    pub fn tail_energy(&self) -> f64 {
        let limit = (self.nq / 4) as i64;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (flat, c) in self.coeffs.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if self.signed(flat)[..self.dim].iter().any(|v| v.abs() > limit) {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    /// Largest `|f̂(-m) - conj(f̂(m))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for flat in 0..self.coeffs.len() {
            let m = self.signed(flat);
            let mut neg = [0i64; MAX_DIM];
            for i in 0..self.dim {
                neg[i] = -m[i];
            }
            worst = worst.max((self.coeff(&neg) - self.coeffs[flat].conj()).norm());
        }
        worst
    }

    /// Trigonometric interpolant at `x`, returned with its imaginary residual.
    pub fn evaluate(&self, x: &SVec) -> (f64, f64) {
        let mut acc = Complex64::new(0.0, 0.0);
        for (flat, c) in self.coeffs.iter().enumerate() {
            let m = self.signed(flat);
            let t: f64 = (0..self.dim).map(|i| m[i] as f64 * x.v[i]).sum();
            acc += c * Complex64::new(libm::cos(t), libm::sin(t));
        }
        (acc.re, acc.im)
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }
}

/// A `d × d` matrix field sampled on the quadrature grid.
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub dim: usize,
    pub samples: Vec<Mat>,
    pub entries: Vec<Vec<FourierField>>,
}

impl MatrixField {
    pub fn sample(basis: &GalerkinBasis, f: impl Fn(&SVec) -> Mat) -> Self {
        let samples: Vec<Mat> = basis.grid().iter().map(f).collect();
        Self::from_samples(basis.dim(), basis.quadrature_points(), samples)
    }

    pub fn from_samples(dim: usize, nq: usize, samples: Vec<Mat>) -> Self {
        let entries = (0..dim)
            .map(|j| {
                (0..dim)
                    .map(|l| {
                        let vals: Vec<f64> = samples.iter().map(|m| m.m[j][l]).collect();
                        FourierField::from_samples(dim, nq, &vals)
                    })
                    .collect()
            })
            .collect();
        MatrixField { dim, samples, entries }
    }

    pub fn tail_energy(&self) -> f64 {
        self.entries.iter().flatten().map(FourierField::tail_energy).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> Mat {
        let mut out = Mat::zeros(self.dim);
        for j in 0..self.dim {
            for l in 0..self.dim {
                out.m[j][l] = self.entries[j][l].mean();
            }
        }
        out
    }

    pub fn add(&self, other: &MatrixField) -> MatrixField {
        let nq = libm::round(libm::pow(self.samples.len() as f64, 1.0 / self.dim as f64)) as usize;
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a.add(b)).collect();
        Self::from_samples(self.dim, nq, samples)
    }
}
