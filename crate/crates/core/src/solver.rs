//! ADMM minimization of the l1-regularized log-determinant divergence.
//!
//! Both estimators share one consensus-splitting loop. The smooth block
//! handles `<Sigma, Omega> - log det Omega` with a closed-form
//! eigendecomposition update that is always positive definite; the sparse
//! block is elementwise soft-thresholding (pooled estimator) or a projection
//! onto the support-and-fixed-diagonal constraint set (novel-task
//! estimator). The sparse iterate carries exact zeros and is the one support
//! extraction reads.

use serde::{Deserialize, Serialize};

use crate::matops::{pd_factorize, sym_eigen, SquareMatrix};
use crate::model::{CovarianceEstimate, PrecisionMatrix, SupportSet};
use crate::{Error, Result};

/// Number of trailing iterations whose residuals are reported.
const RESIDUAL_TAIL: usize = 10;

/// ADMM hyperparameters.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// l1 weight; the penalty covers every entry including the diagonal.
    pub lambda: f64,
    /// ADMM penalty parameter.
    pub rho: f64,
    /// Frobenius tolerance on ||Omega - Z||.
    pub tol_primal: f64,
    /// Frobenius tolerance on rho * ||Z - Z_prev||.
    pub tol_dual: f64,
    pub max_iter: usize,
}

impl SolverConfig {
    /// Defaults for an N-dimensional problem: rho = 1, tolerances 1e-7 * N,
    /// at most 2000 iterations.
    pub fn new(lambda: f64, n_dim: usize) -> Self {
        let tol = 1e-7 * n_dim as f64;
        Self {
            lambda,
            rho: 1.0,
            tol_primal: tol,
            tol_dual: tol,
            max_iter: 2000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter("lambda must be positive".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter("rho must be positive".into()));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Stationarity residuals certifying a solve.
///
/// `max_violation_nonzero` is the largest `|Sigma_ij - (Omega^-1)_ij +
/// lambda sign(Omega_ij)|` over entries the sparse iterate keeps;
/// `max_violation_zero` is the largest `|Sigma_ij - (Omega^-1)_ij| - lambda`
/// (clipped at zero) over entries it zeroed. In constrained mode only free
/// coordinates are checked and `constrained_checked` reports whether the
/// hard constraints held exactly.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KktReport {
    pub max_violation_nonzero: f64,
    pub max_violation_zero: f64,
    pub constrained_checked: bool,
}

/// Converged (or best-effort) ADMM state.
#[derive(Clone, Debug)]
pub struct SolverResult {
    /// Smooth iterate; positive definite by construction.
    pub omega: PrecisionMatrix,
    /// Consensus iterate with exact zeros; support extraction reads this.
    pub sparse: SquareMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// False when max_iter was hit first; the fields then hold the last
    /// iterate so Monte-Carlo sweeps can count the trial as a failure
    /// instead of aborting.
    pub converged: bool,
    pub kkt: KktReport,
    /// (primal, dual) residuals of the trailing iterations, oldest first.
    pub residual_tail: Vec<(f64, f64)>,
}

/// `sign(x) * max(|x| - t, 0)` — the proximal map of `t * |.|`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

enum SparseUpdate<'a> {
    SoftThreshold,
    Project {
        support: &'a SupportSet,
        fixed_diag: &'a [f64],
    },
}

/// Single-estimate graphical lasso. The default start point is the diagonal
/// `1/(Sigma_ii + lambda)`, which is the exact solution for diagonal input.
pub fn glasso(sigma: &CovarianceEstimate, cfg: &SolverConfig) -> Result<SolverResult> {
    let z0 = diagonal_start(&sigma.matrix, cfg.lambda);
    glasso_with_init(sigma, cfg, &z0)
}

/// Graphical lasso from an explicit start point (the solution is unique, so
/// different starts converge to the same place; exposing the start lets
/// tests verify that).
pub fn glasso_with_init(
    sigma: &CovarianceEstimate,
    cfg: &SolverConfig,
    z0: &SquareMatrix,
) -> Result<SolverResult> {
    admm(&sigma.matrix, cfg, z0, SparseUpdate::SoftThreshold)
}

/// Start matrix `diag(1/(Sigma_ii + lambda))`.
pub fn diagonal_start(sigma: &SquareMatrix, lambda: f64) -> SquareMatrix {
    let diag: Vec<f64> = (0..sigma.n())
        .map(|i| 1.0 / (sigma.get(i, i) + lambda))
        .collect();
    SquareMatrix::from_diag(&diag)
}

/// Weighted pooled covariance `sum_k T^(k) Sigma_hat^(k)`, accumulated in
/// task order.
pub fn pooled_covariance(
    sigmas: &[CovarianceEstimate],
    weights: &[f64],
) -> Result<CovarianceEstimate> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter("no covariances to pool".into()));
    }
    if sigmas.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} covariances but {} weights",
            sigmas.len(),
            weights.len()
        )));
    }
    if !weights.iter().all(|&w| w > 0.0) {
        return Err(Error::InvalidParameter("weights must be positive".into()));
    }
    let n = sigmas[0].matrix.n();
    let mut pooled = SquareMatrix::zeros(n);
    let mut n_samples = 0usize;
    for (est, &w) in sigmas.iter().zip(weights) {
        if est.matrix.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "covariance dimensions {} vs {n}",
                est.matrix.n()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                pooled.set(i, j, pooled.get(i, j) + w * est.matrix.get(i, j));
            }
        }
        n_samples += est.n_samples;
    }
    Ok(CovarianceEstimate {
        matrix: pooled,
        n_samples,
        weight: 1.0,
    })
}

/// Pooled estimator across K tasks. With weights summing to one the loss
/// collapses to a single graphical lasso on the weighted-average covariance,
/// so that is literally what runs.
pub fn pooled_glasso(
    sigmas: &[CovarianceEstimate],
    weights: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let pooled = pooled_covariance(sigmas, weights)?;
    glasso(&pooled, cfg)
}

/// Support-constrained, fixed-diagonal estimator for the novel task.
///
/// The sparse iterate is exactly zero outside `support` and its diagonal
/// equals `fixed_diag` bit-for-bit; off-diagonal entries inside the support
/// are soft-thresholded as usual.
pub fn constrained_glasso(
    sigma_novel: &CovarianceEstimate,
    support: &SupportSet,
    fixed_diag: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let n = sigma_novel.matrix.n();
    if support.n() != n || fixed_diag.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {n}x{n}, support dimension {}, fixed_diag length {}",
            support.n(),
            fixed_diag.len()
        )));
    }
    if !(0..n).all(|i| support.contains(i, i)) {
        return Err(Error::InvalidParameter(
            "support must contain all diagonal pairs".into(),
        ));
    }
    if !fixed_diag.iter().all(|&v| v > 0.0) {
        return Err(Error::InvalidParameter(
            "fixed_diag entries must be positive".into(),
        ));
    }
    let mut z0 = SquareMatrix::zeros(n);
    for (i, &v) in fixed_diag.iter().enumerate() {
        z0.set(i, i, v);
    }
    admm(
        &sigma_novel.matrix,
        cfg,
        &z0,
        SparseUpdate::Project {
            support,
            fixed_diag,
        },
    )
}

fn admm(
    sigma: &SquareMatrix,
    cfg: &SolverConfig,
    z0: &SquareMatrix,
    update: SparseUpdate<'_>,
) -> Result<SolverResult> {
    cfg.validate()?;
    let n = sigma.n();
    if z0.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "start point is {}x{}, covariance is {n}x{n}",
            z0.n(),
            z0.n()
        )));
    }
    let sigma = sigma.symmetrized();
    let rho = cfg.rho;
    let mut z = z0.symmetrized();
    let mut u = SquareMatrix::zeros(n);
    let mut omega = SquareMatrix::identity(n);
    let mut tail: Vec<(f64, f64)> = Vec::with_capacity(RESIDUAL_TAIL);
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;

    for iter in 1..=cfg.max_iter {
        iterations = iter;

        // Smooth update: solve rho*Omega - Omega^-1 = rho(Z - U) - Sigma in
        // the eigenbasis of the right-hand side.
        let rhs = z.sub(&u).scale(rho).sub(&sigma).symmetrized();
        let eig = sym_eigen(&rhs);
        let lifted: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&w| (w + (w * w + 4.0 * rho).sqrt()) / (2.0 * rho))
            .collect();
        let v = &eig.eigenvectors;
        omega = SquareMatrix::from_fn(n, |i, j| {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v.get(i, k) * lifted[k] * v.get(j, k);
            }
            acc
        })
        .symmetrized();

        // Sparse update.
        let z_prev = z.clone();
        let target = omega.add(&u);
        z = match &update {
            SparseUpdate::SoftThreshold => {
                let t = cfg.lambda / rho;
                SquareMatrix::from_fn(n, |i, j| soft_threshold(target.get(i, j), t))
            }
            SparseUpdate::Project {
                support,
                fixed_diag,
            } => {
                let t = cfg.lambda / rho;
                SquareMatrix::from_fn(n, |i, j| {
                    if i == j {
                        fixed_diag[i]
                    } else if support.contains(i, j) {
                        soft_threshold(target.get(i, j), t)
                    } else {
                        0.0
                    }
                })
            }
        };

        // Dual ascent.
        u = u.add(&omega.sub(&z));

        primal = omega.sub(&z).frobenius_norm();
        dual = z.sub(&z_prev).frobenius_norm() * rho;
        if tail.len() == RESIDUAL_TAIL {
            tail.remove(0);
        }
        tail.push((primal, dual));

        if primal <= cfg.tol_primal && dual <= cfg.tol_dual {
            converged = true;
            break;
        }
    }

    let omega = PrecisionMatrix::new(omega)?;
    let kkt = match &update {
        SparseUpdate::SoftThreshold => kkt_residual(&sigma, cfg.lambda, &omega, &z, None),
        SparseUpdate::Project {
            support,
            fixed_diag,
        } => kkt_residual(&sigma, cfg.lambda, &omega, &z, Some((support, fixed_diag))),
    };
    Ok(SolverResult {
        omega,
        sparse: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        kkt,
        residual_tail: tail,
    })
}

/// Stationarity check for a candidate solution.
///
/// Uses the smooth iterate for the inverse (it is positive definite) and the
/// sparse iterate for signs and the zero pattern. In constrained mode the
/// check covers only off-diagonal in-support coordinates — the Lagrange
/// multipliers absorb the rest — and `constrained_checked` is true only when
/// the hard constraints hold exactly.
pub fn kkt_residual(
    sigma: &SquareMatrix,
    lambda: f64,
    omega: &PrecisionMatrix,
    sparse: &SquareMatrix,
    constraint: Option<(&SupportSet, &[f64])>,
) -> KktReport {
    let n = sigma.n();
    let inv = omega.inverse();
    let mut viol_nonzero = 0.0f64;
    let mut viol_zero = 0.0f64;
    let mut check = |i: usize, j: usize| {
        let g = sigma.get(i, j) - inv.get(i, j);
        let z = sparse.get(i, j);
        if z != 0.0 {
            viol_nonzero = viol_nonzero.max((g + lambda * z.signum()).abs());
        } else {
            viol_zero = viol_zero.max((g.abs() - lambda).max(0.0));
        }
    };
    match constraint {
        None => {
            for i in 0..n {
                for j in 0..n {
                    check(i, j);
                }
            }
            KktReport {
                max_violation_nonzero: viol_nonzero,
                max_violation_zero: viol_zero,
                constrained_checked: false,
            }
        }
        Some((support, fixed_diag)) => {
            for (i, j) in support.off() {
                check(i, j);
            }
            let mut hard_ok = true;
            for i in 0..n {
                if sparse.get(i, i) != fixed_diag[i] {
                    hard_ok = false;
                }
                for j in 0..n {
                    if !support.contains(i, j) && sparse.get(i, j) != 0.0 {
                        hard_ok = false;
                    }
                }
            }
            KktReport {
                max_violation_nonzero: viol_nonzero,
                max_violation_zero: viol_zero,
                constrained_checked: hard_ok,
            }
        }
    }
}

/// The objective `<Sigma, Omega> - log det Omega + lambda ||Omega||_1`.
/// Errors when `omega` is not positive definite.
pub fn objective(sigma: &SquareMatrix, omega: &SquareMatrix, lambda: f64) -> Result<f64> {
    let log_det = pd_factorize(omega)?.log_det();
    let mut inner = 0.0;
    let mut l1 = 0.0;
    for i in 0..sigma.n() {
        for j in 0..sigma.n() {
            inner += sigma.get(i, j) * omega.get(i, j);
            l1 += omega.get(i, j).abs();
        }
    }
    Ok(inner - log_det + lambda * l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::support_of;
    use crate::rng::Stream;

    fn cov(matrix: SquareMatrix) -> CovarianceEstimate {
        CovarianceEstimate {
            matrix,
            n_samples: 1,
            weight: 1.0,
        }
    }

    fn random_covariance(n: usize, seed: u64) -> CovarianceEstimate {
        let mut s = Stream::new(seed);
        let b = SquareMatrix::from_fn(n, |_, _| s.next_gaussian() * 0.5);
        let mut a = b.matmul(&b.transpose());
        for i in 0..n {
            a.set(i, i, a.get(i, i) + 0.5);
        }
        cov(a.symmetrized())
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(0.7, 0.0), 0.7);
    }

    #[test]
    fn diagonal_input_has_closed_form_solution() {
        let sigma = cov(SquareMatrix::from_diag(&[1.0, 2.0, 0.5]));
        let cfg = SolverConfig::new(0.3, 3);
        let result = glasso(&sigma, &cfg).unwrap();
        assert!(result.converged);
        let expect = SquareMatrix::from_diag(&[1.0 / 1.3, 1.0 / 2.3, 1.0 / 0.8]);
        assert!(result.sparse.max_abs_diff(&expect) < 1e-6);
        assert!(result.omega.matrix().max_abs_diff(&expect) < 1e-6);
    }

    #[test]
    fn large_lambda_forces_diagonal_solution() {
        let sigma = cov(SquareMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap());
        let cfg = SolverConfig::new(0.5, 2);
        let result = glasso(&sigma, &cfg).unwrap();
        assert!(result.converged);
        assert_eq!(result.sparse.get(0, 1), 0.0);
        assert_eq!(result.sparse.get(1, 0), 0.0);
        let expect = SquareMatrix::from_diag(&[2.0 / 3.0, 2.0 / 3.0]);
        assert!(result.sparse.max_abs_diff(&expect) < 1e-6);
    }

    #[test]
    fn vanishing_lambda_recovers_inverse() {
        let sigma = random_covariance(4, 17);
        let mut cfg = SolverConfig::new(1e-8, 4);
        cfg.max_iter = 5000;
        let result = glasso(&sigma, &cfg).unwrap();
        assert!(result.converged);
        let inv = pd_factorize(&sigma.matrix).unwrap().inverse();
        assert!(result.omega.matrix().max_abs_diff(&inv) < 1e-5);
    }

    #[test]
    fn kkt_residuals_small_after_convergence() {
        for seed in 0..5u64 {
            let sigma = random_covariance(6, 100 + seed);
            let cfg = SolverConfig::new(0.1, 6);
            let result = glasso(&sigma, &cfg).unwrap();
            assert!(result.converged);
            assert!(result.kkt.max_violation_nonzero < 1e-5);
            assert!(result.kkt.max_violation_zero < 1e-5);
        }
    }

    #[test]
    fn kkt_exact_on_hand_built_diagonal_solution() {
        let sigma = SquareMatrix::from_diag(&[1.0, 2.0]);
        let lambda = 0.4;
        let omega_mat = SquareMatrix::from_diag(&[1.0 / 1.4, 1.0 / 2.4]);
        let omega = PrecisionMatrix::new(omega_mat.clone()).unwrap();
        let report = kkt_residual(&sigma, lambda, &omega, &omega_mat, None);
        assert!(report.max_violation_nonzero <= 1e-10);
        assert!(report.max_violation_zero <= 1e-10);
    }

    #[test]
    fn kkt_detects_perturbed_solution() {
        let sigma = SquareMatrix::from_diag(&[1.0, 2.0]);
        let lambda = 0.4;
        let mut bad = SquareMatrix::from_diag(&[1.0 / 1.4 + 0.1, 1.0 / 2.4]);
        bad = bad.symmetrized();
        let omega = PrecisionMatrix::new(bad.clone()).unwrap();
        let report = kkt_residual(&sigma, lambda, &omega, &bad, None);
        assert!(report.max_violation_nonzero > 0.01);
    }

    #[test]
    fn pooled_single_task_is_plain_glasso() {
        let sigma = random_covariance(4, 3);
        let cfg = SolverConfig::new(0.2, 4);
        let a = pooled_glasso(std::slice::from_ref(&sigma), &[1.0], &cfg).unwrap();
        let b = glasso(&sigma, &cfg).unwrap();
        assert_eq!(a.sparse, b.sparse);
        assert_eq!(a.omega.matrix(), b.omega.matrix());
    }

    #[test]
    fn pooled_duplicate_covariances_match_single() {
        let sigma = random_covariance(3, 4);
        let cfg = SolverConfig::new(0.2, 3);
        let twice = pooled_glasso(&[sigma.clone(), sigma.clone()], &[0.5, 0.5], &cfg).unwrap();
        let once = glasso(&sigma, &cfg).unwrap();
        assert!(twice.sparse.max_abs_diff(&once.sparse) < 1e-12);
    }

    #[test]
    fn pooled_equals_glasso_on_weighted_average_bitwise() {
        let k = 5;
        let sigmas: Vec<CovarianceEstimate> = (0..k)
            .map(|i| random_covariance(4, 40 + i as u64))
            .collect();
        let weights = vec![1.0 / k as f64; k];
        let cfg = SolverConfig::new(0.15, 4);
        let pooled = pooled_glasso(&sigmas, &weights, &cfg).unwrap();
        // Independent averaging loop with the same accumulation order.
        let mut mean = SquareMatrix::zeros(4);
        for est in &sigmas {
            for i in 0..4 {
                for j in 0..4 {
                    mean.set(
                        i,
                        j,
                        mean.get(i, j) + (1.0 / k as f64) * est.matrix.get(i, j),
                    );
                }
            }
        }
        let direct = glasso(&cov(mean), &cfg).unwrap();
        assert_eq!(pooled.sparse, direct.sparse);
        assert_eq!(pooled.omega.matrix(), direct.omega.matrix());
        assert_eq!(pooled.iterations, direct.iterations);
    }

    #[test]
    fn constrained_diagonal_only_support() {
        let sigma = random_covariance(3, 9);
        let support = SupportSet::diagonal(3);
        let fixed = vec![2.0, 3.0, 4.0];
        let cfg = SolverConfig::new(0.1, 3);
        let result = constrained_glasso(&sigma, &support, &fixed, &cfg).unwrap();
        let expect = SquareMatrix::from_diag(&fixed);
        assert_eq!(result.sparse, expect);
        assert!(result.kkt.constrained_checked);
    }

    #[test]
    fn constrained_full_support_matches_unconstrained_offdiag() {
        let sigma = random_covariance(4, 11);
        let cfg = SolverConfig::new(0.05, 4);
        let free = glasso(&sigma, &cfg).unwrap();
        let mut support = SupportSet::new(4);
        for i in 0..4 {
            for j in 0..4 {
                support.insert(i, j).unwrap();
            }
        }
        let fixed: Vec<f64> = free.sparse.diag();
        let pinned = constrained_glasso(&sigma, &support, &fixed, &cfg).unwrap();
        assert!(pinned.converged);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let diff = (pinned.sparse.get(i, j) - free.sparse.get(i, j)).abs();
                    assert!(diff < 1e-5, "off-diagonal ({i},{j}) differs by {diff}");
                }
            }
        }
    }

    #[test]
    fn constrained_zero_pattern_is_exact() {
        let sigma = random_covariance(5, 13);
        let mut support = SupportSet::diagonal(5);
        support.insert(0, 1).unwrap();
        support.insert(2, 3).unwrap();
        let fixed = vec![1.0; 5];
        let cfg = SolverConfig::new(0.05, 5);
        let result = constrained_glasso(&sigma, &support, &fixed, &cfg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if !support.contains(i, j) {
                    assert_eq!(result.sparse.get(i, j), 0.0);
                }
            }
            assert_eq!(result.sparse.get(i, i), 1.0);
        }
        assert!(support_of(&result.sparse, 0.0).is_subset_of(&support));
        assert!(result.kkt.constrained_checked);
    }

    #[test]
    fn unique_solution_from_different_starts() {
        for seed in 0..4u64 {
            let sigma = random_covariance(6, 200 + seed);
            let cfg = SolverConfig::new(0.1, 6);
            let from_identity = glasso_with_init(&sigma, &cfg, &SquareMatrix::identity(6)).unwrap();
            let from_diag = glasso(&sigma, &cfg).unwrap();
            assert!(from_identity.converged && from_diag.converged);
            let diff = from_identity.sparse.max_abs_diff(&from_diag.sparse);
            assert!(diff < 1e-5, "solutions differ by {diff}");
        }
    }

    #[test]
    fn residual_tail_is_nonincreasing_for_converged_runs() {
        for seed in 0..4u64 {
            let sigma = random_covariance(5, 300 + seed);
            let cfg = SolverConfig::new(0.1, 5);
            let result = glasso(&sigma, &cfg).unwrap();
            assert!(result.converged);
            let combined: Vec<f64> = result.residual_tail.iter().map(|(p, d)| p + d).collect();
            for w in combined.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-9),
                    "tail residuals increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn not_converged_is_reported_not_raised() {
        let sigma = random_covariance(4, 500);
        let mut cfg = SolverConfig::new(0.1, 4);
        cfg.max_iter = 2;
        let result = glasso(&sigma, &cfg).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 2);
    }
}
