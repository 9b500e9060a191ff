//! Small dense square matrices, Cholesky factorization and the cyclic Jacobi
//! eigensolver used by the feasibility solvers.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != n * n {
            return Err(LinalgError::Shape(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        Ok(Matrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(LinalgError::Shape("rows must all have length n".into()));
        }
        Ok(Matrix { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn symmetrize(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn check_symmetric(&self, tol: f64) -> Result<(), LinalgError> {
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let asym = self.max_asymmetry();
        if asym > tol * scale {
            return Err(LinalgError::Asymmetric(asym));
        }
        Ok(())
    }

    /// Lower-triangular Cholesky factor, or `None` if the matrix is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Option<Matrix> {
        let n = self.n;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Some(l)
    }
}

/// Solves `L L^T x = b` given the Cholesky factor `l`.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.n();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Inverse of an SPD matrix from its Cholesky factor.
pub fn cholesky_inverse(l: &Matrix) -> Matrix {
    let n = l.n();
    let mut inv = Matrix::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(l, &e);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    inv.symmetrize()
}

/// `L^{-1} A L^{-T}` for lower-triangular `l`.
pub fn congruence_by_inverse(l: &Matrix, a: &Matrix) -> Matrix {
    let n = l.n();
    // Forward-substitute columns: W = L^{-1} A.
    let mut w = a.clone();
    for c in 0..n {
        for i in 0..n {
            let mut s = w.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * w.get(k, c);
            }
            w.set(i, c, s / l.get(i, i));
        }
    }
    // Then (L^{-1} W^T)^T.
    let wt = w.transpose();
    let mut out = wt.clone();
    for c in 0..n {
        for i in 0..n {
            let mut s = out.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * out.get(k, c);
            }
            out.set(i, c, s / l.get(i, i));
        }
    }
    out.transpose().symmetrize()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn reconstruct(&self) -> Matrix {
        reconstruct(&self.vectors, &self.values)
    }
}

fn reconstruct(v: &Matrix, values: &[f64]) -> Matrix {
    let n = v.n();
    let mut out = Matrix::zeros(n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = v.get(i, k) * lam;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out.add_at(i, j, vik * v.get(j, k));
            }
        }
    }
    out.symmetrize()
}

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization.
///
/// Sweeps until the off-diagonal Frobenius norm drops to `1e-12 * ||A||_F`
/// (or underflows), then sorts eigenpairs ascending.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    a.check_symmetric(SYMMETRY_TOL)?;
    let n = a.n();
    let mut m = a.symmetrize();
    let mut v = Matrix::identity(n);
    let norm = m.frobenius_norm();
    let target = 1e-12 * norm;

    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= target || off < f64::MIN_POSITIVE {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m.set(p, p, app - t * apq);
                m.set(q, q, aqq + t * apq);
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for r in 0..n {
                    if r != p && r != q {
                        let arp = m.get(r, p);
                        let arq = m.get(r, q);
                        let nrp = arp - s * (arq + tau * arp);
                        let nrq = arq + s * (arp - tau * arq);
                        m.set(r, p, nrp);
                        m.set(p, r, nrp);
                        m.set(r, q, nrq);
                        m.set(q, r, nrq);
                    }
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, vrp - s * (vrq + tau * vrp));
                    v.set(r, q, vrq + s * (vrp - tau * vrq));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new, v.get(r, old));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn off_diagonal_norm(m: &Matrix) -> f64 {
    let n = m.n();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m.get(i, j) * m.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// Smallest eigenvalue; `+inf` for the empty matrix.
pub fn min_eigenvalue(a: &Matrix) -> Result<f64, LinalgError> {
    if a.n() == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(symmetric_eigen(a)?.values[0])
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to zero.
pub fn project_psd(a: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = symmetric_eigen(a)?;
    if eig.values.first().is_none_or(|&v| v >= 0.0) {
        return Ok(a.symmetrize());
    }
    let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    Ok(reconstruct(&eig.vectors, &clipped))
}
