//! Small dense linear algebra: row-major matrices, Cholesky factors with
//! rank-one updates, SPD solves, Gaussian sampling from a precision factor and
//! symmetric eigenvalues. Dimensions are expected to stay in the low hundreds.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Pivots at or below this fraction of the largest diagonal entry are rejected.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Relative tolerance for the symmetry check on [`SpdMatrix`] construction.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.cols, v.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `self^T * v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim(self.rows, other.rows)?;
        check_dim(self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Adds `v v^T` in place. Square matrices only.
    pub fn add_outer(&mut self, v: &[f64]) {
        debug_assert!(self.is_square() && v.len() == self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.data[i * self.cols + j] += v[i] * v[j];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `max |a - b| / max(1, max |b|)`.
    pub fn relative_diff(&self, reference: &DenseMatrix) -> f64 {
        self.max_abs_diff(reference) / reference.max_abs().max(1.0)
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.rows.min(self.cols)).fold(f64::NEG_INFINITY, |m, i| m.max(self[(i, i)]))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry(rel_tol).is_none()
    }

    fn asymmetry(&self, rel_tol: f64) -> Option<(usize, usize, f64)> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let diff = (self[(i, j)] - self[(j, i)]).abs();
                if diff > rel_tol * scale {
                    return Some((i, j, diff));
                }
            }
        }
        None
    }

    /// Replaces the matrix with `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    // row-major, entries above the diagonal are kept at zero
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix. Only the lower triangle
    /// is read.
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidDims("cholesky of a non-square matrix"));
        }
        let n = m.rows();
        let tol = PIVOT_TOLERANCE * m.max_diagonal().max(0.0);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) || d <= 0.0 {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = libm::sqrt(d);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { dim: n, l })
    }

    pub fn identity(dim: usize) -> Self {
        let DenseMatrix { data, .. } = DenseMatrix::identity(dim);
        Self { dim, l: data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix { rows: self.dim, cols: self.dim, data: self.l.clone() }
    }

    /// `L L^T`
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim;
        DenseMatrix::from_fn(n, n, |i, j| {
            let m = i.min(j);
            (0..=m).map(|k| self.get(i, k) * self.get(j, k)).sum()
        })
    }

    /// Turns the factor of `M` into the factor of `M + v v^T` in O(dim^2).
    pub fn rank_one_update(&mut self, v: &[f64]) -> Result<()> {
        check_dim(self.dim, v.len())?;
        let n = self.dim;
        let mut w = v.to_vec();
        for k in 0..n {
            let lkk = self.l[k * n + k];
            let wk = w[k];
            if wk == 0.0 {
                continue;
            }
            let r = libm::hypot(lkk, wk);
            let c = r / lkk;
            let s = wk / lkk;
            self.l[k * n + k] = r;
            for i in (k + 1)..n {
                let lik = (self.l[i * n + k] + s * w[i]) / c;
                w[i] = c * w[i] - s * lik;
                self.l[i * n + k] = lik;
            }
        }
        Ok(())
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, b.len())?;
        let n = self.dim;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = dot(row, &x[..i]);
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        Ok(x)
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, b.len())?;
        let n = self.dim;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        Ok(x)
    }

    /// Solves `L L^T x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let z = self.solve_lower(b)?;
        self.solve_upper(&z)
    }

    /// `L z`, used to colour standard normal draws with covariance `L L^T`.
    pub fn mul_lower(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, z.len())?;
        let n = self.dim;
        Ok((0..n).map(|i| dot(&self.l[i * n..=i * n + i], &z[..=i])).collect())
    }

    /// `(L L^T)^{-1}`
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        inv
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| libm::log(self.get(i, i))).sum::<f64>()
    }
}

/// Symmetric positive-definite matrix stored together with its Cholesky
/// factor. The factor is kept in sync on every mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    matrix: DenseMatrix,
    chol: Cholesky,
}

impl SpdMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDims("SPD matrix must be square"));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SPD matrix entries"));
        }
        if let Some((row, col, diff)) = matrix.asymmetry(SYMMETRY_TOLERANCE) {
            return Err(Error::NotSymmetric { row, col, diff });
        }
        let chol = Cholesky::factor(&matrix)?;
        Ok(Self { matrix, chol })
    }

    /// Symmetrizes before validating; for products like `G G^T` that are
    /// symmetric only up to rounding.
    pub fn from_nearly_symmetric(mut matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDims("SPD matrix must be square"));
        }
        matrix.symmetrize();
        Self::new(matrix)
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DenseMatrix::identity(dim), chol: Cholesky::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `M <- M + v v^T`, updating the cached factor in O(dim^2).
    pub fn rank_one_update(&mut self, v: &[f64]) -> Result<()> {
        self.chol.rank_one_update(v)?;
        self.matrix.add_outer(v);
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.chol.solve(b)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matrix.mul_vec(v)
    }

    pub fn inverse(&self) -> DenseMatrix {
        self.chol.inverse()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(self)
    }
}

pub fn cholesky(m: &DenseMatrix) -> Result<Cholesky> {
    Cholesky::factor(m)
}

pub fn solve_spd(m: &SpdMatrix, b: &[f64]) -> Result<Vec<f64>> {
    m.solve(b)
}

/// Draw from `N(mean, scale^2 B^{-1})` where `precision_chol` factors `B`,
/// using caller-supplied standard normals `z`: `mean + scale * L^{-T} z`.
pub fn sample_gaussian_with(
    mean: &[f64],
    precision_chol: &Cholesky,
    scale: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_dim(precision_chol.dim(), mean.len())?;
    let w = precision_chol.solve_upper(z)?;
    Ok(mean.iter().zip(&w).map(|(m, w)| m + scale * w).collect())
}

pub fn sample_gaussian(
    mean: &[f64],
    precision_chol: &Cholesky,
    scale: f64,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument("sampling scale must be positive"));
    }
    let z = rng.standard_normal_vec(mean.len());
    sample_gaussian_with(mean, precision_chol, scale, &z)
}

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidDims("eigenvalues of a non-square matrix"));
    }
    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let scale = a.max_abs();
    let mut converged = n < 2 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        converged = libm::sqrt(off) <= 1e-14 * scale;
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

pub fn min_eigenvalue(m: &SpdMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(m.matrix())?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_spd(dim: usize, seed: u64, ridge: f64) -> DenseMatrix {
        let mut rng = RandomStream::from_seed(seed);
        let g = DenseMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
        let mut m = g.matmul(&g.transpose()).unwrap();
        m.symmetrize();
        for i in 0..dim {
            m[(i, i)] += ridge;
        }
        m
    }

    #[test]
    fn cholesky_identity() {
        let l = Cholesky::factor(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l.to_matrix(), DenseMatrix::identity(3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let m = DenseMatrix::new(2, 2, vec![4.0, 2.0, 2.0, 3.0]).unwrap();
        let l = Cholesky::factor(&m).unwrap();
        assert_relative_eq!(l.get(0, 0), 2.0);
        assert_relative_eq!(l.get(1, 0), 1.0);
        assert_relative_eq!(l.get(1, 1), core::f64::consts::SQRT_2);
        assert_eq!(l.get(0, 1), 0.0);
        // L L^T by direct multiplication
        let lm = l.to_matrix();
        let back = lm.matmul(&lm.transpose()).unwrap();
        assert!(back.relative_diff(&m) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(Cholesky::factor(&m), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_rejects_tiny_relative_pivot() {
        let m = DenseMatrix::diagonal(&[1.0, 1e-14]);
        assert!(Cholesky::factor(&m).is_err());
        assert!(Cholesky::factor(&DenseMatrix::diagonal(&[1.0, 1e-10])).is_ok());
    }

    #[test]
    fn spd_rejects_asymmetric() {
        let m = DenseMatrix::new(2, 2, vec![2.0, 0.5, 0.4, 2.0]).unwrap();
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn rank_one_zero_vector_is_noop() {
        let mut l = Cholesky::identity(2);
        l.rank_one_update(&[0.0, 0.0]).unwrap();
        assert_eq!(l, Cholesky::identity(2));
    }

    #[test]
    fn rank_one_diagonal_result() {
        let mut l = Cholesky::identity(2);
        l.rank_one_update(&[1.0, 0.0]).unwrap();
        let expected = DenseMatrix::diagonal(&[2.0, 1.0]);
        assert!(l.reconstruct().relative_diff(&expected) < 1e-15);
        assert_relative_eq!(l.get(0, 0), core::f64::consts::SQRT_2);
    }

    #[test]
    fn rank_one_matches_refactorization() {
        let mut l = Cholesky::identity(3);
        l.rank_one_update(&[1.0, 1.0, 1.0]).unwrap();
        let mut target = DenseMatrix::identity(3);
        target.add_outer(&[1.0, 1.0, 1.0]);
        let fresh = Cholesky::factor(&target).unwrap();
        assert!(l.to_matrix().relative_diff(&fresh.to_matrix()) < 1e-12);
    }

    #[test]
    fn rank_one_dimension_checked() {
        let mut l = Cholesky::identity(2);
        assert_eq!(
            l.rank_one_update(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let i3 = SpdMatrix::identity(3);
        assert_eq!(solve_spd(&i3, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let d = SpdMatrix::new(DenseMatrix::diagonal(&[2.0, 4.0])).unwrap();
        let x = solve_spd(&d, &[2.0, 4.0]).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert_relative_eq!(x[1], 1.0);
    }

    #[test]
    fn solve_random_residual() {
        let m = SpdMatrix::new(random_spd(5, 11, 0.5)).unwrap();
        let mut rng = RandomStream::from_seed(12);
        let b = rng.standard_normal_vec(5);
        let x = m.solve(&b).unwrap();
        let back = m.mul_vec(&x).unwrap();
        assert!(norm(&sub(&back, &b)) / norm(&b) < 1e-8);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let m = SpdMatrix::new(random_spd(4, 3, 0.2)).unwrap();
        let prod = m.matrix().matmul(&m.inverse()).unwrap();
        assert!(prod.max_abs_diff(&DenseMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn sample_with_zero_noise_returns_mean() {
        let m = SpdMatrix::new(random_spd(3, 5, 1.0)).unwrap();
        let mean = [1.5, -2.0, 0.25];
        let s = sample_gaussian_with(&mean, m.cholesky(), 7.0, &[0.0; 3]).unwrap();
        assert_eq!(s, mean.to_vec());
    }

    fn sample_covariance(precision: &SpdMatrix, scale: f64, n: usize, seed: u64) -> DenseMatrix {
        let d = precision.dim();
        let mut rng = RandomStream::from_seed(seed);
        let mean = vec![0.0; d];
        let mut acc = DenseMatrix::zeros(d, d);
        for _ in 0..n {
            let s = sample_gaussian(&mean, precision.cholesky(), scale, &mut rng).unwrap();
            acc.add_outer(&s);
        }
        acc.scaled(1.0 / n as f64)
    }

    #[test]
    fn sample_identity_covariance() {
        let cov = sample_covariance(&SpdMatrix::identity(3), 1.0, 100_000, 21);
        assert!(cov.max_abs_diff(&DenseMatrix::identity(3)) < 0.05);
    }

    #[test]
    fn sample_scaled_diagonal_precision() {
        let b = SpdMatrix::new(DenseMatrix::diagonal(&[4.0, 1.0])).unwrap();
        let cov = sample_covariance(&b, 2.0, 100_000, 22);
        assert!((cov[(0, 0)] - 1.0).abs() < 0.05);
        assert!((cov[(1, 1)] - 4.0).abs() < 0.2);
    }

    #[test]
    fn sample_is_deterministic() {
        let b = SpdMatrix::new(random_spd(4, 1, 1.0)).unwrap();
        let mean = [0.0, 1.0, 2.0, 3.0];
        let a = sample_gaussian(&mean, b.cholesky(), 0.5, &mut RandomStream::from_seed(3)).unwrap();
        let c = sample_gaussian(&mean, b.cholesky(), 0.5, &mut RandomStream::from_seed(3)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn sample_rejects_nonpositive_scale() {
        let b = SpdMatrix::identity(2);
        assert!(sample_gaussian(&[0.0, 0.0], b.cholesky(), 0.0, &mut RandomStream::from_seed(0)).is_err());
    }

    #[test]
    fn min_eigenvalue_diagonal_and_identity() {
        let d = SpdMatrix::new(DenseMatrix::diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(min_eigenvalue(&d).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(min_eigenvalue(&SpdMatrix::identity(6)).unwrap(), 1.0);
    }

    #[test]
    fn min_eigenvalue_two_by_two_closed_form() {
        for seed in 0..20 {
            let m = random_spd(2, seed, 0.5);
            let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            // roots of the characteristic polynomial
            let expected = 0.5 * (a + c) - libm::sqrt(0.25 * (a - c) * (a - c) + b * b);
            let got = min_eigenvalue(&SpdMatrix::new(m).unwrap()).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-6);
            assert!(got >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn min_eigenvalue_ridge_floor() {
        for seed in 0..10 {
            let m = SpdMatrix::new(random_spd(8, 100 + seed, 0.5)).unwrap();
            assert!(min_eigenvalue(&m).unwrap() >= 0.5 - 1e-9);
        }
    }

    #[test]
    fn eigenvalues_sum_to_trace() {
        let m = random_spd(12, 9, 0.1);
        let eig = symmetric_eigenvalues(&m).unwrap();
        let trace: f64 = (0..12).map(|i| m[(i, i)]).sum();
        assert_relative_eq!(eig.iter().sum::<f64>(), trace, max_relative = 1e-10);
        assert!(eig.windows(2).all(|w| w[0] <= w[1]));
    }

    fn arb_spd_and_vector() -> impl Strategy<Value = (DenseMatrix, Vec<f64>)> {
        (1usize..8, any::<u64>(), proptest::collection::vec(-3.0f64..3.0, 8)).prop_map(
            |(dim, seed, v)| (random_spd(dim, seed, 0.05), v[..dim].to_vec()),
        )
    }

    proptest! {
        #[test]
        fn prop_rank_one_update_agrees_with_refactorization((m, v) in arb_spd_and_vector()) {
            let mut l = Cholesky::factor(&m).unwrap();
            l.rank_one_update(&v).unwrap();
            let mut target = m.clone();
            target.add_outer(&v);
            let fresh = Cholesky::factor(&target).unwrap();
            let scale = fresh.to_matrix().max_abs().max(1.0);
            prop_assert!(l.to_matrix().max_abs_diff(&fresh.to_matrix()) / scale < 1e-9);
            prop_assert!(l.reconstruct().relative_diff(&target) < 1e-10);
        }

        #[test]
        fn prop_solve_recovers_rhs((m, b) in arb_spd_and_vector()) {
            let spd = SpdMatrix::new(m).unwrap();
            let x = spd.solve(&b).unwrap();
            let back = spd.mul_vec(&x).unwrap();
            let denom = norm(&b).max(1e-300);
            prop_assert!(norm(&sub(&back, &b)) / denom < 1e-8 || norm(&b) == 0.0);
        }

        #[test]
        fn prop_cholesky_reconstructs((m, _v) in arb_spd_and_vector()) {
            let l = Cholesky::factor(&m).unwrap();
            prop_assert!(l.reconstruct().relative_diff(&m) < 1e-10);
            prop_assert!((0..m.rows()).all(|i| l.get(i, i) > 0.0));
        }
    }
}
