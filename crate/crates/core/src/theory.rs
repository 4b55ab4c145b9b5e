//! Closed-form evaluators for the analysis: incoherence and curvature
//! constants of a true model, the sufficient-accuracy levels delta* and
//! delta-dagger, the oracle regularization weights, the success-probability
//! lower bounds, the two information-theoretic failure bounds, and a
//! Monte-Carlo estimator for the perturbation bias beta.
//!
//! Everything here is arithmetic on a known true model; nothing touches
//! sample data. Natural logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::matops::{gamma_submatrix, norms, pd_factorize, sym_eigen, SquareMatrix};
use crate::model::{PrecisionMatrix, SupportSet};
use crate::rng::Stream;
use crate::{Error, Result};

/// Tracked constants of a true model.
///
/// `alpha`, `sigma_sg`, `gamma_bound`, `c_max` and `beta` are family-level
/// quantities the caller controls; [`curvature_constants`] fills the rest
/// from the matrix and leaves `alpha` as NaN for [`incoherence_alpha`] to
/// supply.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Incoherence slack; positive iff the irrepresentability assumption
    /// holds.
    pub alpha: f64,
    /// Infinity-operator norm of the inverted support block of the Hessian.
    pub kappa_gamma: f64,
    /// Infinity-operator norm of the true covariance.
    pub kappa_sigma: f64,
    /// Maximal row support size, diagonal included. Counting the diagonal
    /// matters: dropping it changes delta*.
    pub degree: usize,
    /// Smallest magnitude over support entries.
    pub omega_min: f64,
    /// Smallest eigenvalue of the precision matrix.
    pub lambda_min: f64,
    /// Sub-Gaussian parameter of the standardized coordinates.
    pub sigma_sg: f64,
    /// Elementwise bound on the perturbed covariances.
    pub gamma_bound: f64,
    /// Spectral bound on the perturbations.
    pub c_max: f64,
    /// Elementwise bias of the mean perturbed covariance.
    pub beta: f64,
}

/// Sorted support pairs, the row/column ordering of every Gamma block.
fn support_pairs(support: &SupportSet) -> Vec<(usize, usize)> {
    support.pairs().collect()
}

fn gamma_ss_factorization(
    sigma: &SquareMatrix,
    pairs: &[(usize, usize)],
) -> Result<crate::matops::PdFactorization> {
    let block = gamma_submatrix(sigma, pairs, pairs)?.to_square()?;
    pd_factorize(&block.symmetrized()).map_err(|e| match e {
        Error::NotPositiveDefinite { index, pivot } => Error::SingularBlock(format!(
            "Gamma_SS factorization failed at pair index {index} (pivot {pivot:.3e})"
        )),
        other => other,
    })
}

/// Incoherence slack `alpha = 1 - max_{u in S^c} ||Gamma_uS (Gamma_SS)^-1||_1`.
///
/// A non-positive value means the irrepresentability assumption fails for
/// this model; it is returned as-is so harness code can flag it rather than
/// error out.
pub fn incoherence_alpha(omega_bar: &PrecisionMatrix, support: &SupportSet) -> Result<f64> {
    if support.n() != omega_bar.n() {
        return Err(Error::DimensionMismatch(format!(
            "support dimension {} vs matrix {}",
            support.n(),
            omega_bar.n()
        )));
    }
    let sigma = omega_bar.inverse();
    let pairs = support_pairs(support);
    let fact = gamma_ss_factorization(&sigma, &pairs)?;
    let mut worst = 0.0f64;
    for u in support.complement_pairs() {
        let rhs_block = gamma_submatrix(&sigma, &pairs, &[u])?;
        let rhs: Vec<f64> = (0..pairs.len()).map(|r| rhs_block.get(r, 0)).collect();
        let x = fact.solve(&rhs);
        let row_l1: f64 = x.iter().map(|v| v.abs()).sum();
        worst = worst.max(row_l1);
    }
    Ok(1.0 - worst)
}

/// Curvature constants of a true model: kappa_Gamma, kappa_Sigma, the degree
/// (diagonal included), omega_min over the support, and lambda_min.
///
/// `alpha` is left NaN for the caller; `sigma_sg` defaults to 1 (Gaussian),
/// `gamma_bound` to the elementwise sup of the unperturbed covariance,
/// `c_max` to its largest admissible value `lambda_min / 2`, and `beta` to 0.
pub fn curvature_constants(
    omega_bar: &PrecisionMatrix,
    support: &SupportSet,
) -> Result<TheoryConstants> {
    if support.n() != omega_bar.n() {
        return Err(Error::DimensionMismatch(format!(
            "support dimension {} vs matrix {}",
            support.n(),
            omega_bar.n()
        )));
    }
    let sigma = omega_bar.inverse();
    let pairs = support_pairs(support);
    let fact = gamma_ss_factorization(&sigma, &pairs)?;
    let kappa_gamma = norms(&fact.inverse()).op_linf;
    let sigma_norms = norms(&sigma);
    let kappa_sigma = sigma_norms.op_linf;
    let n = omega_bar.n();
    let mut degree = 0usize;
    for i in 0..n {
        let row_count = (0..n).filter(|&j| support.contains(i, j)).count();
        degree = degree.max(row_count);
    }
    let omega_min = support
        .pairs()
        .map(|(i, j)| omega_bar.matrix().get(i, j).abs())
        .fold(f64::INFINITY, f64::min);
    let lambda_min = sym_eigen(omega_bar.matrix()).eigenvalues[0];
    Ok(TheoryConstants {
        alpha: f64::NAN,
        kappa_gamma,
        kappa_sigma,
        degree,
        omega_min,
        lambda_min,
        sigma_sg: 1.0,
        gamma_bound: sigma_norms.elementwise_linf,
        c_max: lambda_min / 2.0,
        beta: 0.0,
    })
}

fn require_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// Accuracy level sufficient for support-subset recovery:
/// `alpha^2 / (2 kappa_G (alpha+8)^2) * min{1/(3 kappa_S d),
/// 1/(3 kappa_S^3 kappa_G d)}`.
pub fn delta_star(c: &TheoryConstants) -> Result<f64> {
    require_alpha(c.alpha)?;
    let a = c.alpha;
    let d = c.degree as f64;
    let pref = a * a / (2.0 * c.kappa_gamma * (a + 8.0) * (a + 8.0));
    let branch = (1.0 / (3.0 * c.kappa_sigma * d))
        .min(1.0 / (3.0 * c.kappa_sigma.powi(3) * c.kappa_gamma * d));
    Ok(pref * branch)
}

/// Accuracy level sufficient for sign consistency of the pooled estimator:
/// equals [`delta_star`] when omega_min is large enough, and
/// `alpha omega_min / (4 (8+alpha) kappa_G)` otherwise.
pub fn delta_dagger_union(c: &TheoryConstants) -> Result<f64> {
    require_alpha(c.alpha)?;
    let a = c.alpha;
    let d = c.degree as f64;
    let branch = (1.0 / (3.0 * c.kappa_sigma * d))
        .min(1.0 / (3.0 * c.kappa_sigma.powi(3) * c.kappa_gamma * d));
    let threshold = 2.0 * a / (8.0 + a) * branch;
    if c.omega_min >= threshold {
        delta_star(c)
    } else {
        Ok(a * c.omega_min / (4.0 * (8.0 + a) * c.kappa_gamma))
    }
}

/// Novel-task analogue of [`delta_dagger_union`], written with the degree
/// dividing outside the min rather than inside
/// (numerically the same split).
pub fn delta_dagger_novel(c: &TheoryConstants) -> Result<f64> {
    require_alpha(c.alpha)?;
    let a = c.alpha;
    let d = c.degree as f64;
    let branch =
        (1.0 / (3.0 * c.kappa_sigma)).min(1.0 / (3.0 * c.kappa_sigma.powi(3) * c.kappa_gamma));
    let threshold = 2.0 * a / ((8.0 + a) * d) * branch;
    if c.omega_min >= threshold {
        Ok(a * a / (2.0 * c.kappa_gamma * (a + 8.0) * (a + 8.0) * d) * branch)
    } else {
        Ok(a * c.omega_min / (4.0 * (8.0 + a) * c.kappa_gamma))
    }
}

/// Which recovery guarantee's regularization formula to evaluate.
#[derive(Clone, Copy, Debug)]
pub enum TheoryLambda {
    /// `lambda = (8 delta + 4 delta*) / alpha` for `delta in (0, delta*/2]`.
    SupportSubset { delta: f64, delta_star: f64 },
    /// `lambda = 8 delta-dagger / alpha`.
    SignConsistency { delta_dagger: f64 },
    /// `lambda = 8 delta-dagger-novel / alpha-novel`.
    NovelSignConsistency { delta_dagger_novel: f64 },
}

pub fn theory_lambda(mode: TheoryLambda, alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    match mode {
        TheoryLambda::SupportSubset { delta, delta_star } => {
            if !(delta > 0.0 && delta <= delta_star / 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "delta must lie in (0, delta*/2] = (0, {}], got {delta}",
                    delta_star / 2.0
                )));
            }
            Ok((8.0 * delta + 4.0 * delta_star) / alpha)
        }
        TheoryLambda::SignConsistency { delta_dagger } => Ok(8.0 * delta_dagger / alpha),
        TheoryLambda::NovelSignConsistency { delta_dagger_novel } => {
            Ok(8.0 * delta_dagger_novel / alpha)
        }
    }
}

/// A probability bound together with whether its precondition on beta held.
/// The value may be negative (an uninformative bound); it is returned as-is.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbBound {
    pub value: f64,
    pub precondition_ok: bool,
}

/// Which success-probability bound to evaluate for the pooled estimator.
#[derive(Clone, Copy, Debug)]
pub enum UnionBoundMode {
    /// Support-subset bound: first exponent divisor 64 with the free delta,
    /// second exponent anchored at delta*.
    SupportSubset { delta: f64, delta_star: f64 },
    /// Sign-consistency bound: first exponent divisor 256, both anchored at
    /// delta-dagger.
    SignConsistency { delta_dagger: f64 },
}

/// Success-probability lower bound for support-union recovery:
/// `1 - 2N(N+1) exp(-(nK/2) min{delta^2 / (div (1+4 sigma^2)^2 gamma^2), 1})
///    - 2N exp(-(K lambda_min^4 / (128 c_max^2)) (ref/2 - beta)^2)`.
pub fn union_success_prob(
    n: usize,
    k: usize,
    n_dim: usize,
    mode: UnionBoundMode,
    c: &TheoryConstants,
) -> ProbBound {
    let (divisor, delta, reference) = match mode {
        UnionBoundMode::SupportSubset { delta, delta_star } => (64.0, delta, delta_star),
        UnionBoundMode::SignConsistency { delta_dagger } => (256.0, delta_dagger, delta_dagger),
    };
    let nf = n_dim as f64;
    let sub_g = 1.0 + 4.0 * c.sigma_sg * c.sigma_sg;
    let rate = (delta * delta / (divisor * sub_g * sub_g * c.gamma_bound * c.gamma_bound)).min(1.0);
    let first = 2.0 * nf * (nf + 1.0) * (-(n as f64 * k as f64 / 2.0) * rate).exp();
    let gap = reference / 2.0 - c.beta;
    let second = 2.0
        * nf
        * (-(k as f64 * c.lambda_min.powi(4) / (128.0 * c.c_max * c.c_max)) * gap * gap).exp();
    ProbBound {
        value: 1.0 - first - second,
        precondition_ok: c.beta <= reference / 2.0,
    }
}

/// Success-probability lower bound for novel-task sign consistency:
/// `1 - 2 |S_off| exp(-(n/2) min{delta^2 / (64 (1+4 sigma^2)^2 gamma^2), 1})`.
pub fn novel_success_prob(
    n_novel: usize,
    s_off_size: usize,
    delta_novel: f64,
    sigma_sg: f64,
    gamma_novel: f64,
) -> Result<f64> {
    if s_off_size < 1 {
        return Err(Error::InvalidParameter(
            "novel bound needs |S_off| >= 1".into(),
        ));
    }
    let sub_g = 1.0 + 4.0 * sigma_sg * sigma_sg;
    let rate =
        (delta_novel * delta_novel / (64.0 * sub_g * sub_g * gamma_novel * gamma_novel)).min(1.0);
    Ok(1.0 - 2.0 * s_off_size as f64 * (-(n_novel as f64 / 2.0) * rate).exp())
}

/// Failure lower bound for support-union recovery over the circulant
/// ensemble: `1 - (nNK + ln 2) / (N ln N - N - ln 2N)`. Requires N >= 5.
pub fn fano_lower_bound_union(n: f64, n_dim: usize, k: usize) -> Result<f64> {
    if n_dim < 5 {
        return Err(Error::InvalidParameter(
            "union lower bound requires N >= 5".into(),
        ));
    }
    let nf = n_dim as f64;
    let denom = nf * nf.ln() - nf - (2.0 * nf).ln();
    Ok(1.0 - (n * nf * k as f64 + 2.0f64.ln()) / denom)
}

/// Sample size below which [`fano_lower_bound_union`] exceeds one half:
/// `ln N / (2K) - 1/(2K) - ln(8N) / (2NK)`.
pub fn fano_union_half_threshold(n_dim: usize, k: usize) -> f64 {
    let nf = n_dim as f64;
    let kf = k as f64;
    nf.ln() / (2.0 * kf) - 1.0 / (2.0 * kf) - (8.0 * nf).ln() / (2.0 * nf * kf)
}

/// Failure lower bound for novel-task support recovery over the
/// random-subset ensemble: `1 - 4n / (ln2 ln s) - 2/s`. Requires s >= 4.
pub fn fano_lower_bound_novel(n: f64, s: usize) -> Result<f64> {
    if s < 4 {
        return Err(Error::InvalidParameter(
            "novel lower bound requires s >= 4".into(),
        ));
    }
    let sf = s as f64;
    Ok(1.0 - 4.0 * n / (2.0f64.ln() * sf.ln()) - 2.0 / sf)
}

/// Sample size at which [`fano_lower_bound_novel`] equals one half:
/// `(ln2 / 8) ln s - (ln2 / (2s)) ln s`.
pub fn fano_novel_half_threshold(s: usize) -> f64 {
    let sf = s as f64;
    2.0f64.ln() / 8.0 * sf.ln() - 2.0f64.ln() / (2.0 * sf) * sf.ln()
}

/// Monte-Carlo estimate of `beta = || Omega^-1 - E[(Omega + Delta)^-1] ||_inf`.
///
/// `draw_perturbed` receives a per-draw substream and returns the perturbed
/// matrix `Omega + Delta`, which must be positive definite; the estimate
/// averages the inverses in draw-index order.
pub fn estimate_beta<F>(
    omega_bar: &PrecisionMatrix,
    mut draw_perturbed: F,
    m: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&mut Stream) -> Result<PrecisionMatrix>,
{
    if m < 1 {
        return Err(Error::InvalidParameter(
            "estimate_beta needs at least one draw".into(),
        ));
    }
    let n = omega_bar.n();
    let inv_bar = omega_bar.inverse();
    let root = Stream::new(seed);
    let mut acc = SquareMatrix::zeros(n);
    for idx in 0..m {
        let mut stream = root.substream(idx as u64 + 1);
        let perturbed = draw_perturbed(&mut stream)?;
        if perturbed.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "perturbed draw has dimension {}, expected {n}",
                perturbed.n()
            )));
        }
        acc = acc.add(&perturbed.inverse());
    }
    let mean = acc.scale(1.0 / m as f64);
    Ok(norms(&inv_bar.sub(&mean)).elementwise_linf)
}

/// Constants plus derived sufficiency quantities, as emitted by `diagnose`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub delta_star: f64,
    pub delta_dagger: f64,
    pub delta_dagger_novel: f64,
    /// Oracle weight from the sign-consistency guarantee.
    pub lambda_oracle: f64,
    /// Sign-consistency success bound at the supplied (n, K).
    pub prob_lower_bound: f64,
    pub prob_precondition_ok: bool,
}

pub fn sufficiency_report(
    c: &TheoryConstants,
    n: usize,
    k: usize,
    n_dim: usize,
) -> Result<SufficiencyReport> {
    let ds = delta_star(c)?;
    let dd = delta_dagger_union(c)?;
    let ddn = delta_dagger_novel(c)?;
    let lambda_oracle = theory_lambda(TheoryLambda::SignConsistency { delta_dagger: dd }, c.alpha)?;
    let bound = union_success_prob(
        n,
        k,
        n_dim,
        UnionBoundMode::SignConsistency { delta_dagger: dd },
        c,
    );
    Ok(SufficiencyReport {
        delta_star: ds,
        delta_dagger: dd,
        delta_dagger_novel: ddn,
        lambda_oracle,
        prob_lower_bound: bound.value,
        prob_precondition_ok: bound.precondition_ok,
    })
}

/// Oracle regularization weight for the pooled step: the sign-consistency
/// formula evaluated on the true common model.
pub fn oracle_lambda_union(omega_bar: &PrecisionMatrix, support: &SupportSet) -> Result<f64> {
    let mut c = curvature_constants(omega_bar, support)?;
    c.alpha = incoherence_alpha(omega_bar, support)?;
    let dd = delta_dagger_union(&c)?;
    theory_lambda(TheoryLambda::SignConsistency { delta_dagger: dd }, c.alpha)
}

/// Oracle regularization weight for the novel step, from the novel task's
/// own true model.
pub fn oracle_lambda_novel(omega_novel: &PrecisionMatrix, support: &SupportSet) -> Result<f64> {
    let mut c = curvature_constants(omega_novel, support)?;
    c.alpha = incoherence_alpha(omega_novel, support)?;
    let ddn = delta_dagger_novel(&c)?;
    theory_lambda(
        TheoryLambda::NovelSignConsistency {
            delta_dagger_novel: ddn,
        },
        c.alpha,
    )
}
