//! Core domain types: precision matrices, support sets, sample sets,
//! empirical covariances, and the predicates that decide whether a recovery
//! attempt succeeded.

use std::collections::BTreeSet;

use crate::matops::{pd_factorize, SquareMatrix};
use crate::{Error, Result};

/// Default threshold below which an estimated entry counts as zero.
///
/// Support is extracted from the solver's sparse iterate, which carries exact
/// zeros from soft-thresholding; the threshold only guards against
/// floating-point dust.
pub const DEFAULT_SUPPORT_TAU: f64 = 1e-6;

/// Symmetric positive-definite precision matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionMatrix {
    matrix: SquareMatrix,
}

impl PrecisionMatrix {
    /// Symmetrizes the input and verifies positive definiteness.
    pub fn new(matrix: SquareMatrix) -> Result<Self> {
        let matrix = matrix.symmetrized();
        pd_factorize(&matrix)?;
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// The covariance `Sigma = Omega^{-1}`.
    pub fn inverse(&self) -> SquareMatrix {
        pd_factorize(&self.matrix)
            .expect("invariant: precision matrix is positive definite")
            .inverse()
    }
}

/// Symmetric set of index pairs (0-based internally; file formats are
/// 1-based). Diagonal pairs are members like any other.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportSet {
    n: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl SupportSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pairs: BTreeSet::new(),
        }
    }

    /// All diagonal pairs of an n-dimensional matrix.
    pub fn diagonal(n: usize) -> Self {
        let mut s = Self::new(n);
        for i in 0..n {
            s.pairs.insert((i, i));
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Insert (i, j) and its mirror (j, i).
    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::IndexOutOfRange { i, j, n: self.n });
        }
        self.pairs.insert((i, j));
        self.pairs.insert((j, i));
        Ok(())
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i, j))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Ordered pairs, ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// The off-diagonal part; its length is |S_off| (ordered pairs, so each
    /// undirected edge counts twice).
    pub fn off(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied().filter(|&(i, j)| i != j)
    }

    pub fn off_len(&self) -> usize {
        self.off().count()
    }

    pub fn is_subset_of(&self, other: &SupportSet) -> bool {
        self.n == other.n && self.pairs.is_subset(&other.pairs)
    }

    /// Complement within the full set of n^2 pairs.
    pub fn complement_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if !self.pairs.contains(&(i, j)) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Zero-mean sample set: `n` rows of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    rows: Vec<f64>,
}

impl SampleSet {
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "sample buffer of length {} is not a multiple of dim {dim}",
                rows.len()
            )));
        }
        if !rows.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFailure("non-finite sample value".into()));
        }
        Ok(Self { dim, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t * self.dim..(t + 1) * self.dim]
    }
}

/// Empirical covariance with its sample count and pooling weight T^(k).
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: SquareMatrix,
    pub n_samples: usize,
    pub weight: f64,
}

/// Uncentered empirical covariance `(1/n) sum_t x_t x_t^T`.
///
/// No mean subtraction: the model is zero-mean, and the estimator the theory
/// analyzes is the raw second moment.
pub fn empirical_covariance(samples: &SampleSet) -> Result<CovarianceEstimate> {
    let n = samples.n();
    if n == 0 {
        return Err(Error::EmptySampleSet);
    }
    let dim = samples.dim();
    let mut acc = SquareMatrix::zeros(dim);
    for t in 0..n {
        let x = samples.row(t);
        for i in 0..dim {
            for j in 0..dim {
                acc.set(i, j, acc.get(i, j) + x[i] * x[j]);
            }
        }
    }
    let matrix = acc.scale(1.0 / n as f64).symmetrized();
    Ok(CovarianceEstimate {
        matrix,
        n_samples: n,
        weight: 1.0,
    })
}

/// Support of a matrix at threshold `tau`: pairs with `|A_ij| > tau`.
pub fn support_of(omega: &SquareMatrix, tau: f64) -> SupportSet {
    let n = omega.n();
    let mut s = SupportSet::new(n);
    for i in 0..n {
        for j in 0..n {
            if omega.get(i, j).abs() > tau {
                s.pairs.insert((i, j));
            }
        }
    }
    s
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign consistency of an estimate against the truth.
///
/// Estimate entries with magnitude at most `tau` count as zero; the truth is
/// taken at face value. True everywhere implies exact support recovery.
pub fn sign_consistent(estimate: &SquareMatrix, truth: &SquareMatrix, tau: f64) -> Result<bool> {
    if estimate.n() != truth.n() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.n(),
            estimate.n(),
            truth.n(),
            truth.n()
        )));
    }
    for i in 0..estimate.n() {
        for j in 0..estimate.n() {
            let e = estimate.get(i, j);
            let thresholded = if e.abs() <= tau { 0.0 } else { e };
            if sign(thresholded) != sign(truth.get(i, j)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Set union of supports; all inputs must share a dimension.
pub fn support_union(supports: &[SupportSet]) -> Result<SupportSet> {
    let mut iter = supports.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("support_union of an empty list".into()))?;
    let mut out = first.clone();
    for s in iter {
        if s.n != out.n {
            return Err(Error::DimensionMismatch(format!(
                "support dimensions {} vs {}",
                s.n, out.n
            )));
        }
        out.pairs.extend(s.pairs.iter().copied());
    }
    Ok(out)
}
