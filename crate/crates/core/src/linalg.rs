//! Dense complex linear algebra.
//!
//! Everything here works on small, dense, row-major matrices (a few hundred
//! rows at most). The Hermitian eigensolver is a cyclic Jacobi method; it is
//! slow compared to a tridiagonal QR but unconditionally stable, and it gives
//! eigenvectors that are orthonormal to machine precision.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Maximum number of full Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius norm, relative to `||A||_F`, at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-12;
/// Cholesky pivots at or below `CHOLESKY_PIVOT_TOL * max(diag)` are rejected.
pub const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot:e} at index {index} (tolerance {tolerance:e})")]
    NotPositiveDefinite { index: usize, pivot: f64, tolerance: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty matrix")]
    Empty,
}

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl CMatrix {
    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diag(&d)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows[0].len();
        Self::from_fn(n, m, |i, j| C64::new(rows[i][j], 0.0))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// `self += alpha * other`
    pub fn add_scaled_assign(&mut self, alpha: f64, other: &Self) -> Result<(), LinalgError> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                axpy(out_row, a, other.row(k));
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[C64]) -> Result<Vec<C64>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `tr(A^H B)`, the Frobenius inner product.
    pub fn inner(&self, other: &Self) -> Result<C64, LinalgError> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum())
    }

    /// `tr(A B)` without forming the product.
    pub fn trace_of_product(&self, other: &Self) -> Result<C64, LinalgError> {
        if self.cols != other.rows || self.rows != other.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "tr(AB) needs {}x{} and {}x{} to be transposed shapes",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        Ok(acc)
    }

    /// Largest `|A(i,j) - conj(A(j,i))|`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

#[inline]
fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// A square matrix whose Hermitian symmetry holds exactly.
///
/// Constructors either mirror one triangle or check the input, so
/// `A(m,n) == conj(A(n,m))` holds bit-for-bit and the diagonal is real.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Takes the upper triangle (including the diagonal) of `m` and mirrors it.
    pub fn from_upper(m: &CMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        let n = m.rows();
        let mut out = m.clone();
        for i in 0..n {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                out[(j, i)] = m[(i, j)].conj();
            }
        }
        Ok(Self(out))
    }

    /// Symmetrizes `(A + A^H) / 2`. Meant for products that are Hermitian up
    /// to rounding, such as `R Q^-1 R`.
    pub fn symmetrize(m: &CMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        let n = m.rows();
        let mut out = m.clone();
        for i in 0..n {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Ok(Self(out))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self(CMatrix::from_real_diag(diag))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        Ok(Self(self.0.add(&other.0)?))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        Ok(Self(self.0.sub(&other.0)?))
    }

    /// `tr(A^2)` computed as `||A||_F^2`.
    pub fn trace_of_square(&self) -> f64 {
        self.0.frobenius_norm_sqr()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64, LinalgError> {
        let eig = hermitian_eig(self)?;
        Ok(*eig.values.last().expect("non-empty spectrum"))
    }

    /// Whether every eigenvalue is at least `-1e-9 * trace / dim`.
    pub fn is_psd(&self) -> Result<bool, LinalgError> {
        let tol = 1e-9 * self.trace().abs() / self.dim() as f64;
        Ok(self.min_eigenvalue()? >= -tol)
    }
}

impl std::ops::Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Eigendecomposition `A = V diag(values) V^H` with values sorted descending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)].conj()).sum()
        })
    }
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig(a: &HermitianMatrix) -> Result<Eigen, LinalgError> {
    let n = a.dim();
    let mut m = a.as_matrix().clone();
    let mut v = CMatrix::identity(n);
    let norm = m.frobenius_norm();
    let threshold = JACOBI_TOL * norm;

    let off_norm = |m: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)].norm_sqr();
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n == 1 || norm == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q, norm);
            }
        }
        sweeps += 1;
        converged = off_norm(&m) <= threshold;
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps, residual: off_norm(&m) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let values = order.iter().map(|&k| m[(k, k)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(Eigen { values, vectors })
}

/// One complex Jacobi rotation zeroing `m(p,q)`. Works on the full matrix so
/// the mirrored triangle never drifts.
fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, norm: f64) {
    let apq = m[(p, q)];
    let b = apq.norm();
    if b <= f64::EPSILON * 1e-3 * norm || b == 0.0 {
        return;
    }
    let phase = apq / b;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * b);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // J = [[c, s e^{ia}], [-s e^{-ia}, c]] on the (p, q) plane; M <- J^H M J.
    let s_ph = phase * s;
    let s_ph_conj = s_ph.conj();
    let n = m.rows();

    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = mkp * c - mkq * s_ph_conj;
        m[(k, q)] = mkp * s_ph + mkq * c;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = mpk * c - mqk * s_ph;
        m[(q, k)] = mpk * s_ph_conj + mqk * c;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)] = C64::new(app - t * b, 0.0);
    m[(q, q)] = C64::new(aqq + t * b, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * s_ph_conj;
        v[(k, q)] = vkp * s_ph + vkq * c;
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L^H`.
pub fn cholesky(a: &HermitianMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.dim();
    let src = a.as_matrix();
    let max_diag = (0..n).map(|i| src[(i, i)].re).fold(f64::NEG_INFINITY, f64::max);
    let tolerance = CHOLESKY_PIVOT_TOL * max_diag.max(0.0);
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j);
        let mut d = src[(j, j)].re - lj[..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
        if d.is_nan() || d <= tolerance {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d, tolerance });
        }
        d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        let inv = 1.0 / d;
        for i in (j + 1)..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let lj = &head[j * n..j * n + j];
            let li = &tail[..j];
            let dot: C64 = li.iter().zip(lj).map(|(x, y)| x * y.conj()).sum();
            tail[j] = (src[(i, j)] - dot) * inv;
        }
    }
    Ok(l)
}

/// Solves `L Y = B` in place for lower-triangular `L`.
pub fn forward_substitute(l: &CMatrix, b: &mut CMatrix) -> Result<(), LinalgError> {
    let n = l.rows();
    if !l.is_square() || b.rows() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "triangular {}x{} against right-hand side {}x{}",
            l.rows(),
            l.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let cols = b.cols();
    for i in 0..n {
        let (done, rest) = b.data.split_at_mut(i * cols);
        let row = &mut rest[..cols];
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != ZERO {
                axpy(row, -lik, &done[k * cols..(k + 1) * cols]);
            }
        }
        let inv = 1.0 / l[(i, i)];
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
    Ok(())
}

/// `L^-1` for lower-triangular `L`, touching only the lower triangle.
pub fn lower_triangular_inverse(l: &CMatrix) -> Result<CMatrix, LinalgError> {
    if !l.is_square() {
        return Err(LinalgError::NotSquare { rows: l.rows(), cols: l.cols() });
    }
    let n = l.rows();
    let mut x = CMatrix::zeros(n, n);
    for i in 0..n {
        let (done, rest) = x.data.split_at_mut(i * n);
        let row = &mut rest[..n];
        row[i] = C64::new(1.0, 0.0);
        for k in 0..i {
            let lik = l[(i, k)];
            if lik != ZERO {
                axpy(&mut row[..=k], -lik, &done[k * n..k * n + k + 1]);
            }
        }
        let inv = 1.0 / l[(i, i)];
        for v in row[..=i].iter_mut() {
            *v *= inv;
        }
    }
    Ok(x)
}

/// Solves `L^H X = Y` in place for lower-triangular `L`.
pub fn backward_substitute_adjoint(l: &CMatrix, y: &mut CMatrix) -> Result<(), LinalgError> {
    let n = l.rows();
    if !l.is_square() || y.rows() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "triangular {}x{} against right-hand side {}x{}",
            l.rows(),
            l.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let cols = y.cols();
    for i in (0..n).rev() {
        let (head, rest) = y.data.split_at_mut((i + 1) * cols);
        let row = &mut head[i * cols..];
        for k in (i + 1)..n {
            // (L^H)(i,k) = conj(L(k,i))
            let u = l[(k, i)].conj();
            if u != ZERO {
                let other = &rest[(k - i - 1) * cols..(k - i) * cols];
                axpy(row, -u, other);
            }
        }
        let inv = 1.0 / l[(i, i)].conj();
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
    Ok(())
}

/// Solves `A X = B` for Hermitian positive definite `A` via Cholesky.
pub fn hermitian_solve(a: &HermitianMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if b.rows() != a.dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "system of order {} with right-hand side of {} rows",
            a.dim(),
            b.rows()
        )));
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    forward_substitute(&l, &mut x)?;
    backward_substitute_adjoint(&l, &mut x)?;
    Ok(x)
}

/// Kronecker product; block `(i, j)` of the output is `A(i,j) * B`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of Hermitian matrices, which is Hermitian.
pub fn kron_hermitian(a: &HermitianMatrix, b: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix(kron(a.as_matrix(), b.as_matrix()))
}
