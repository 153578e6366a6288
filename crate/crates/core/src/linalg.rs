//! Small dense matrices (dimension at most [`MAX_DIM`]) used for pointwise
//! coefficient algebra, plus symmetric eigen-decomposition and the PSD
//! square root.

use crate::error::{Error, Result};
use alloc::format;

pub const MAX_DIM: usize = 3;

/// Fixed-capacity vector of length `n <= MAX_DIM`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SVec {
    pub n: usize,
    pub v: [f64; MAX_DIM],
}

impl SVec {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} unsupported");
        SVec { n, v: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut out = SVec::zeros(s.len());
        out.v[..s.len()].copy_from_slice(s);
        out
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut out = SVec::zeros(n);
        out.v[i] = 1.0;
        out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v[..self.n]
    }

    pub fn dot(&self, other: &SVec) -> f64 {
        (0..self.n).map(|i| self.v[i] * other.v[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(&self, s: f64) -> SVec {
        let mut out = *self;
        out.v[..self.n].iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add(&self, other: &SVec) -> SVec {
        let mut out = *self;
        for i in 0..self.n {
            out.v[i] += other.v[i];
        }
        out
    }

    pub fn sub(&self, other: &SVec) -> SVec {
        self.add(&other.scale(-1.0))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

/// Fixed-capacity square matrix of size `n <= MAX_DIM`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat {
    pub n: usize,
    pub m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} unsupported");
        Mat { n, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        Mat::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        let mut out = Mat::zeros(n);
        for i in 0..n {
            out.m[i][i] = s;
        }
        out
    }

    /// Builds from row-major data of length `n * n`.
    pub fn from_row_major(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n * n);
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.m[i][j] = data[i * n + j];
            }
        }
        out
    }

    pub fn to_row_major(&self) -> alloc::vec::Vec<f64> {
        let mut out = alloc::vec::Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            out.extend_from_slice(&self.m[i][..self.n]);
        }
        out
    }

    pub fn outer(u: &SVec, w: &SVec) -> Self {
        let mut out = Mat::zeros(u.n);
        for i in 0..u.n {
            for j in 0..u.n {
                out.m[i][j] = u.v[i] * w.v[j];
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.m[i][k] * other.m[k][j];
                }
                out.m[i][j] = s;
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &SVec) -> SVec {
        let mut out = SVec::zeros(self.n);
        for i in 0..self.n {
            out.v[i] = (0..self.n).map(|j| self.m[i][j] * x.v[j]).sum();
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] += other.m[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut out = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                out.m[i][j] *= s;
            }
        }
        out
    }

    pub fn quad(&self, x: &SVec) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        libm::sqrt(s)
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s = s.max(libm::fabs(self.m[i][j]));
            }
        }
        s
    }

    /// Largest entry of |A - A^T|.
    pub fn asymmetry(&self) -> f64 {
        self.sub(&self.transpose()).max_abs()
    }

    /// Largest entry of |A + A^T|.
    pub fn symmetric_part_size(&self) -> f64 {
        self.add(&self.transpose()).max_abs()
    }

    pub fn symmetrized(&self) -> Mat {
        self.add(&self.transpose()).scale(0.5)
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.m[i][j].is_finite()))
    }

    /// Eigen-decomposition of the symmetric part by cyclic Jacobi rotations.
    /// Eigenvalues ascend; `vectors` holds eigenvectors as columns.
    pub fn sym_eigen(&self) -> SymEigen {
        let n = self.n;
        let mut a = self.symmetrized();
        let mut v = Mat::identity(n);
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.m[i][j] * a.m[i][j];
                }
            }
            let scale = a.norm();
            if off <= (1e-34 * scale * scale).max(f64::MIN_POSITIVE) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.m[p][q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a.m[q][q] - a.m[p][p]) / (2.0 * apq);
                    let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.m[k][p];
                        let akq = a.m[k][q];
                        a.m[k][p] = c * akp - s * akq;
                        a.m[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a.m[p][k];
                        let aqk = a.m[q][k];
                        a.m[p][k] = c * apk - s * aqk;
                        a.m[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v.m[k][p];
                        let vkq = v.m[k][q];
                        v.m[k][p] = c * vkp - s * vkq;
                        v.m[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order = [0usize, 1, 2];
        let diag = [a.m[0][0], if n > 1 { a.m[1][1] } else { 0.0 }, if n > 2 { a.m[2][2] } else { 0.0 }];
        order[..n].sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let mut values = SVec::zeros(n);
        let mut vectors = Mat::zeros(n);
        for (dst, &src) in order[..n].iter().enumerate() {
            values.v[dst] = diag[src];
            for k in 0..n {
                vectors.m[k][dst] = v.m[k][src];
            }
        }
        SymEigen { values, vectors }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.sym_eigen().values.v[0]
    }

    /// Matrix absolute value |A| = (A A^T)^{1/2}.
    pub fn abs(&self) -> Mat {
        let g = self.mul(&self.transpose());
        psd_root_unchecked(&g, 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SymEigen {
    pub values: SVec,
    pub vectors: Mat,
}

impl SymEigen {
    pub fn column(&self, k: usize) -> SVec {
        let mut out = SVec::zeros(self.values.n);
        for i in 0..self.values.n {
            out.v[i] = self.vectors.m[i][k];
        }
        out
    }
}

/// Relative floor below which eigenvalues of a PSD input are treated as
/// rounding noise and rooted to exactly zero.
pub const SQRT_ROUNDING_FLOOR: f64 = 1e-12;

fn psd_root_unchecked(a: &Mat, floor_rel: f64) -> Mat {
    let eig = a.sym_eigen();
    let n = a.n;
    let top = libm::fabs(eig.values.v[n - 1]).max(libm::fabs(eig.values.v[0]));
    let mut out = Mat::zeros(n);
    for k in 0..n {
        let mu = eig.values.v[k];
        if mu <= floor_rel * top || mu <= 0.0 {
            continue;
        }
        let r = libm::sqrt(mu);
        let col = eig.column(k);
        out = out.add(&Mat::outer(&col, &col).scale(r));
    }
    out.symmetrized()
}

/// Symmetric PSD square root `S` with `S * S = a`.
///
/// The input must be symmetric within `1e-8` (relative) with eigenvalues no
/// smaller than `-1e-9`; slightly negative eigenvalues and those below
/// [`SQRT_ROUNDING_FLOOR`] times the spectral radius are clipped to zero.
pub fn sqrt_psd(a: &Mat) -> Result<Mat> {
    if !a.is_finite() {
        return Err(Error::InvalidTensor(format!("non-finite entries in {a:?}")));
    }
    let scale = a.max_abs().max(1.0);
    if a.asymmetry() > 1e-8 * scale {
        return Err(Error::InvalidTensor(format!("asymmetry {:.3e} exceeds tolerance", a.asymmetry())));
    }
    let lo = a.min_eigenvalue();
    if lo < -1e-9 * scale {
        return Err(Error::InvalidTensor(format!("indefinite: eigenvalue {lo:.3e}")));
    }
    Ok(psd_root_unchecked(a, SQRT_ROUNDING_FLOOR))
}

/// Sine of the largest principal angle between two subspaces given by
/// orthonormal column sets.
pub fn subspace_gap(a: &[SVec], b: &[SVec]) -> f64 {
    if a.len() != b.len() {
        return 1.0;
    }
    if a.is_empty() {
        return 0.0;
    }
    // Worst unit combination of b's residuals after projecting onto span(a).
    let mut resid = alloc::vec::Vec::with_capacity(b.len());
    for bv in b {
        let mut r = *bv;
        for av in a {
            r = r.sub(&av.scale(av.dot(bv)));
        }
        resid.push(r);
    }
    let k = resid.len();
    let mut gram = Mat::zeros(k);
    for i in 0..k {
        for j in 0..k {
            gram.m[i][j] = resid[i].dot(&resid[j]);
        }
    }
    let top = gram.sym_eigen().values.v[k - 1].max(0.0);
    libm::sqrt(top).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let s = sqrt_psd(&Mat::identity(3)).unwrap();
        assert!(s.sub(&Mat::identity(3)).max_abs() < 1e-15);
        let d = Mat::from_row_major(2, &[4.0, 0.0, 0.0, 0.0]);
        let s = sqrt_psd(&d).unwrap();
        assert!(s.sub(&Mat::from_row_major(2, &[2.0, 0.0, 0.0, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn sqrt_of_rank_one_control_matrix() {
        let a = Mat::from_row_major(2, &[1.25, 2.5, 2.5, 5.0]);
        let s = sqrt_psd(&a).unwrap();
        assert!(s.asymmetry() == 0.0);
        assert!(s.mul(&s).sub(&a).max_abs() < 1e-10 * a.norm());
        // Oracle: rank one, a = w w^T with w = (1.25, 2.5)/sqrt(1.25)... so S = a / sqrt(tr a).
        let oracle = a.scale(1.0 / libm::sqrt(6.25));
        assert!(s.sub(&oracle).max_abs() < 1e-12);
        let k = SVec::from_slice(&[2.0, -1.0]);
        assert!(s.mul_vec(&k).norm() < 1e-15);
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let asym = Mat::from_row_major(2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sqrt_psd(&asym), Err(Error::InvalidTensor(_))));
        let indef = Mat::from_row_major(2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(matches!(sqrt_psd(&indef), Err(Error::InvalidTensor(_))));
        let tiny_neg = Mat::from_row_major(2, &[1.0, 0.0, 0.0, -1e-12]);
        assert!(sqrt_psd(&tiny_neg).is_ok());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = Mat::from_row_major(3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = a.sym_eigen();
        let r2 = libm::sqrt(2.0);
        let expected = [2.0 - r2, 2.0, 2.0 + r2];
        for k in 0..3 {
            assert!((e.values.v[k] - expected[k]).abs() < 1e-13);
            let v = e.column(k);
            assert!(a.mul_vec(&v).sub(&v.scale(e.values.v[k])).norm() < 1e-13);
        }
    }

    #[test]
    fn subspace_gap_of_rotated_lines() {
        let a = [SVec::from_slice(&[1.0, 0.0])];
        let t: f64 = 1e-3;
        let b = [SVec::from_slice(&[libm::cos(t), libm::sin(t)])];
        assert!((subspace_gap(&a, &b) - libm::sin(t)).abs() < 1e-12);
        assert_eq!(subspace_gap(&a, &a), 0.0);
    }
}
