//! Small dense linear-algebra kernels.
//!
//! Everything here targets the desk-scale problems of the verification lab
//! (dimensions below ~100), so the implementations favour clarity and
//! determinism over asymptotics: cyclic Jacobi for symmetric eigenvalues,
//! unblocked Cholesky and partially pivoted LU for solves.

use crate::error::{CoreError, CoreResult};
use rand::Rng;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Standard normal draw via Box-Muller; avoids pulling in a distributions crate.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.gen::<f64>();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> CoreResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(CoreError::InvalidData("empty matrix".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(CoreError::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    /// 1x1 convenience used all over the scalar test problems.
    pub fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for i in 0..self.rows {
            out[i] = dot(&self.data[i * self.cols..(i + 1) * self.cols], v);
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// self += s * u v^T
    pub fn add_outer(&mut self, u: &[f64], v: &[f64], s: f64) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                self.data[i * self.cols + j] += s * u[i] * v[j];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = 1.0 + self.frobenius_norm();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Lower-triangular Cholesky factor; `None` when the matrix is not
    /// (numerically) positive definite.
    pub fn cholesky(&self) -> Option<Matrix> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l.set(i, i, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Some(l)
    }

    /// Solve `self * x = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> CoreResult<Vec<f64>> {
        if !self.is_square() {
            return Err(CoreError::DimensionMismatch {
                expected: self.rows,
                got: self.cols,
            });
        }
        let n = self.rows;
        if rhs.len() != n {
            return Err(CoreError::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let mut a = self.data.clone();
        let mut x = rhs.to_vec();
        let scale = 1.0 + self.frobenius_norm();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_val = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val <= 1e-14 * scale {
                return Err(CoreError::SingularSystem);
            }
            if pivot_row != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot_row * n + c);
                }
                x.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for r in (col + 1)..n {
                let factor = a[r * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[r * n + c] -= factor * a[col * n + c];
                }
                x[r] -= factor * x[col];
            }
        }
        for row in (0..n).rev() {
            let mut sum = x[row];
            for c in (row + 1)..n {
                sum -= a[row * n + c] * x[c];
            }
            x[row] = sum / a[row * n + row];
        }
        Ok(x)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.
    /// Returns `(eigenvalues, q)` with the columns of `q` the eigenvectors,
    /// so that `self = q diag(eigenvalues) q^T`. Eigenvalues are unsorted.
    pub fn sym_eigen(&self) -> CoreResult<(Vec<f64>, Matrix)> {
        if !self.is_symmetric(1e-10) {
            return Err(CoreError::InvalidData(
                "sym_eigen requires a symmetric matrix".into(),
            ));
        }
        let n = self.rows;
        let mut m = self.clone();
        let mut q = Matrix::identity(n);
        let scale = 1.0 + self.frobenius_norm();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += m.get(i, j) * m.get(i, j);
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for r in (p + 1)..n {
                    let apr = m.get(p, r);
                    if apr.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (m.get(r, r) - m.get(p, p)) / (2.0 * apr);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m.get(k, p);
                        let mkr = m.get(k, r);
                        m.set(k, p, c * mkp - s * mkr);
                        m.set(k, r, s * mkp + c * mkr);
                    }
                    for k in 0..n {
                        let mpk = m.get(p, k);
                        let mrk = m.get(r, k);
                        m.set(p, k, c * mpk - s * mrk);
                        m.set(r, k, s * mpk + c * mrk);
                    }
                    for k in 0..n {
                        let qkp = q.get(k, p);
                        let qkr = q.get(k, r);
                        q.set(k, p, c * qkp - s * qkr);
                        q.set(k, r, s * qkp + c * qkr);
                    }
                }
            }
        }
        let eigenvalues = (0..n).map(|i| m.get(i, i)).collect();
        Ok((eigenvalues, q))
    }

    /// `exp(scale * self)` for symmetric `self`, via the eigen-decomposition.
    pub fn sym_exp(&self, scale: f64) -> CoreResult<Matrix> {
        let (eigs, q) = self.sym_eigen()?;
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let e = (scale * eigs[k]).exp();
            for i in 0..n {
                for j in 0..n {
                    let v = out.get(i, j) + e * q.get(i, k) * q.get(j, k);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Largest eigenvalue of a symmetric matrix.
    pub fn sym_lambda_max(&self) -> CoreResult<f64> {
        let (eigs, _) = self.sym_eigen()?;
        eigs.into_iter()
            .reduce(f64::max)
            .ok_or(CoreError::InvalidData("empty matrix".into()))
    }
}

/// Random orthogonal matrix from modified Gram-Schmidt on a Gaussian draw.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
            .collect();
        let mut ok = true;
        for j in 0..n {
            for _pass in 0..2 {
                for k in 0..j {
                    let proj = dot(&cols[j].clone(), &cols[k]);
                    let prev = cols[k].clone();
                    for (cj, pk) in cols[j].iter_mut().zip(&prev) {
                        *cj -= proj * pk;
                    }
                }
            }
            let nrm = norm2(&cols[j]);
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            for c in &mut cols[j] {
                *c /= nrm;
            }
        }
        if !ok {
            continue;
        }
        let mut q = Matrix::zeros(n, n);
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                q.set(i, j, *v);
            }
        }
        return q;
    }
}

/// Random symmetric positive-definite matrix with eigenvalues drawn
/// uniformly from `[lambda_min, lambda_max]`.
pub fn random_spd<R: Rng + ?Sized>(
    n: usize,
    lambda_min: f64,
    lambda_max: f64,
    rng: &mut R,
) -> Matrix {
    let q = random_orthogonal(n, rng);
    let eigs: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 || i == 0 {
                lambda_max
            } else if i == 1 {
                lambda_min
            } else {
                rng.gen_range(lambda_min..=lambda_max)
            }
        })
        .collect();
    let mut a = Matrix::zeros(n, n);
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let v = a.get(i, j) + eigs[k] * q.get(i, k) * q.get(j, k);
                a.set(i, j, v);
            }
        }
    }
    // Symmetrize away rounding asymmetry from the congruence product.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, s);
            a.set(j, i, s);
        }
    }
    a
}

/// Random symmetric matrix with entries on the order of `scale`.
pub fn random_symmetric<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = scale * standard_normal(rng);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}
