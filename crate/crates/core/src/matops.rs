//! Dense symmetric linear algebra: square matrices, a cyclic Jacobi
//! eigensolver, Cholesky factorization, pair-indexed Kronecker blocks and the
//! matrix norms used throughout the crate.
//!
//! All matrices are dense and desk-scale (N up to a few hundred). Indices are
//! 0-based everywhere in code; the JSON file formats are 1-based where they
//! name index pairs.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Off-diagonal Frobenius tolerance at which Jacobi sweeps stop.
const JACOBI_TOL: f64 = 1e-12;
/// Hard cap on Jacobi sweeps.
const JACOBI_MAX_SWEEPS: usize = 100;
/// A Cholesky pivot at or below this value means "not positive definite".
const CHOLESKY_PIVOT_TOL: f64 = 1e-12;

#[derive(Serialize, Deserialize)]
struct SquareMatrixRepr {
    n: usize,
    data: Vec<f64>,
}

/// Dense square matrix, row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SquareMatrixRepr", into = "SquareMatrixRepr")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<SquareMatrixRepr> for SquareMatrix {
    type Error = Error;
    fn try_from(repr: SquareMatrixRepr) -> Result<Self> {
        SquareMatrix::from_rows(repr.n, repr.data)
    }
}

impl From<SquareMatrix> for SquareMatrixRepr {
    fn from(m: SquareMatrix) -> Self {
        SquareMatrixRepr {
            n: m.n,
            data: m.data,
        }
    }
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from a row-major slice of exactly `n * n` entries.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Exactly symmetric copy: both (i,j) and (j,i) receive the same
    /// averaged value, so `get(i, j) == get(j, i)` holds bit-for-bit.
    pub fn symmetrized(&self) -> SquareMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn transpose(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n, "add dimension mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        SquareMatrix { n: self.n, data }
    }

    pub fn sub(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n, "sub dimension mismatch");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        SquareMatrix { n: self.n, data }
    }

    pub fn scale(&self, s: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.n, other.n, "max_abs_diff dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Multiply by a vector: `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "matvec dimension mismatch");
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Eigendecomposition of a symmetric matrix: `A = V diag(w) V^T` with
/// eigenvalues ascending and orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: SquareMatrix,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps rotate away every off-diagonal entry in turn until the off-diagonal
/// Frobenius norm drops below 1e-12 (or stops improving), capped at 100
/// sweeps. Exact symmetry of the input is required; callers construct
/// symmetric matrices via [`SquareMatrix::symmetrized`].
pub fn sym_eigen(a: &SquareMatrix) -> EigenDecomposition {
    debug_assert!(a.is_symmetric(), "sym_eigen requires exact symmetry");
    let n = a.n();
    let mut work = a.clone();
    let mut v = SquareMatrix::identity(n);
    let mut prev_off = f64::INFINITY;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diag_frobenius(&work);
        if off <= JACOBI_TOL || off >= prev_off {
            break;
        }
        prev_off = off;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = work.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let (c, s) = jacobi_rotation(work.get(p, p), work.get(q, q), apq);
                apply_rotation(&mut work, p, q, c, s);
                accumulate_rotation(&mut v, p, q, c, s);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work.get(i, i).total_cmp(&work.get(j, j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| work.get(i, i)).collect();
    let eigenvectors = SquareMatrix::from_fn(n, |i, j| v.get(i, order[j]));
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

fn off_diag_frobenius(a: &SquareMatrix) -> f64 {
    let n = a.n();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += 2.0 * a.get(i, j) * a.get(i, j);
        }
    }
    sum.sqrt()
}

/// Rotation (c, s) annihilating the (p, q) entry; the stable small-angle
/// variant of the classic Jacobi formula.
fn jacobi_rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        1.0 / (theta - (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, t * c)
}

/// `A <- J^T A J` for the Givens rotation J acting on columns (p, q).
fn apply_rotation(a: &mut SquareMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.n();
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    // The rotation zeroes (p,q) analytically; pin it to avoid round-off dust
    // re-entering the sweep criterion.
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
}

fn accumulate_rotation(v: &mut SquareMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = v.n();
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Doubles as the positive-definiteness test: construction fails with
/// [`Error::NotPositiveDefinite`] when a pivot is at or below 1e-12.
#[derive(Clone, Debug)]
pub struct PdFactorization {
    dim: usize,
    factor: SquareMatrix,
    log_det: f64,
}

impl PdFactorization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower-triangular factor L with `L L^T = A`.
    pub fn factor(&self) -> &SquareMatrix {
        &self.factor
    }

    /// `log det A = 2 sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim, "solve dimension mismatch");
        let n = self.dim;
        let l = &self.factor;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for k in 0..i {
                acc -= l.get(i, k) * y[k];
            }
            y[i] = acc / l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc -= l.get(k, i) * x[k];
            }
            x[i] = acc / l.get(i, i);
        }
        x
    }

    /// Inverse computed on demand from the factor; exactly symmetric.
    pub fn inverse(&self) -> SquareMatrix {
        let n = self.dim;
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for col in 0..n {
            e[col] = 1.0;
            let x = self.solve(&e);
            e[col] = 0.0;
            for row in 0..n {
                inv.set(row, col, x[row]);
            }
        }
        inv.symmetrized()
    }
}

/// Factorize a symmetric matrix, rejecting non-positive-definite input.
pub fn pd_factorize(a: &SquareMatrix) -> Result<PdFactorization> {
    debug_assert!(a.is_symmetric(), "pd_factorize requires exact symmetry");
    let n = a.n();
    let mut l = SquareMatrix::zeros(n);
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if d <= CHOLESKY_PIVOT_TOL {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        log_det += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, acc / ljj);
        }
    }
    Ok(PdFactorization {
        dim: n,
        factor: l,
        log_det,
    })
}

/// Rectangular block indexed by index pairs (rows x cols).
#[derive(Clone, Debug, PartialEq)]
pub struct PairBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PairBlock {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// View a square block as a [`SquareMatrix`].
    pub fn to_square(&self) -> Result<SquareMatrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "block is {}x{}, not square",
                self.rows, self.cols
            )));
        }
        SquareMatrix::from_rows(self.rows, self.data.clone())
    }
}

/// Block of the pair-indexed Kronecker square `Sigma (x) Sigma` without
/// materializing the full N^2 x N^2 matrix.
///
/// The entry for row pair `r = (r1, r2)` and column pair `c = (c1, c2)` is
/// `Sigma[r1][c1] * Sigma[r2][c2]`, the same single product a dense Kronecker
/// construction would compute at that position. Pairs are 0-based.
pub fn gamma_submatrix(
    sigma: &SquareMatrix,
    rows: &[(usize, usize)],
    cols: &[(usize, usize)],
) -> Result<PairBlock> {
    let n = sigma.n();
    for &(i, j) in rows.iter().chain(cols.iter()) {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange { i, j, n });
        }
    }
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for &(r1, r2) in rows {
        for &(c1, c2) in cols {
            data.push(sigma.get(r1, c1) * sigma.get(r2, c2));
        }
    }
    Ok(PairBlock {
        rows: rows.len(),
        cols: cols.len(),
        data,
    })
}

/// The four matrix norms used by the bound evaluators.
#[derive(Clone, Copy, Debug)]
pub struct MatrixNorms {
    /// max |A_ij|
    pub elementwise_linf: f64,
    /// sum |A_ij|
    pub elementwise_l1: f64,
    /// max row absolute sum
    pub op_linf: f64,
    /// sqrt(lambda_max(A^T A)); max |eigenvalue| for symmetric A
    pub spectral: f64,
}

pub fn norms(a: &SquareMatrix) -> MatrixNorms {
    let mut elementwise_linf = 0.0f64;
    let mut elementwise_l1 = 0.0;
    let mut op_linf = 0.0f64;
    for i in 0..a.n() {
        let mut row_sum = 0.0;
        for j in 0..a.n() {
            let v = a.get(i, j).abs();
            elementwise_linf = elementwise_linf.max(v);
            elementwise_l1 += v;
            row_sum += v;
        }
        op_linf = op_linf.max(row_sum);
    }
    let spectral = if a.is_symmetric() {
        sym_eigen(a)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &w| m.max(w.abs()))
    } else {
        let ata = a.transpose().matmul(a).symmetrized();
        let max_eig = sym_eigen(&ata)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &w| m.max(w));
        max_eig.sqrt()
    };
    MatrixNorms {
        elementwise_linf,
        elementwise_l1,
        op_linf,
        spectral,
    }
}
