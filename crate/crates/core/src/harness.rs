//! Seeded Monte-Carlo experiment pipelines: the two-step method end-to-end
//! per trial, sweeps over the pooled sample budget, the task count, and the
//! novel-task sample budget, plus a per-task single-task reference method.
//!
//! Reproducibility contract: a [`SweepReport`] is a pure function of its
//! [`SweepConfig`]. Trials draw from substreams keyed by `(grid_value,
//! trial_index)`, so permuting the grid or running trials in parallel cannot
//! change any per-point count; aggregation happens in trial-index order.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    empirical_covariance, sign_consistent, support_of, support_union, CovarianceEstimate,
};
use crate::rng::Stream;
use crate::solver::{constrained_glasso, glasso, pooled_glasso, SolverConfig};
use crate::synth::{gen_family, sample_mvn, GeneratedFamily, TaskFamilySpec};
use crate::theory::{oracle_lambda_novel, oracle_lambda_union};
use crate::{Error, Result};

/// Substream tag for per-task sampling inside a trial (task index appended).
const TAG_TRIAL_SAMPLES: u64 = 10;
/// Substream tag for novel-task sampling inside a trial.
const TAG_TRIAL_NOVEL_SAMPLES: u64 = 11;
/// Substream tag prefix for sweep trials: (grid_value, trial_index) appended.
const TAG_SWEEP: u64 = 20;

/// Calibration constant of the practical regularization rule
/// `lambda = c sqrt(ln N / (n K))` for the pooled step, calibrated once
/// against the default sample-sweep regime.
pub const DEFAULT_PRACTICAL_C: f64 = 1.5;

/// Calibration constant of the practical rule for the novel-task step,
/// where the per-coordinate noise floor sits much lower because the support
/// and diagonal are already pinned.
pub const DEFAULT_NOVEL_PRACTICAL_C: f64 = 0.45;

/// How a trial picks its regularization weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    /// Sign-consistency oracle formula evaluated on the true generated model.
    #[serde(rename = "oracle-thm2")]
    Oracle,
    /// `lambda = c sqrt(ln N / (n K))` with the given constant.
    Practical(f64),
}

impl LambdaRule {
    fn union_lambda(&self, fam: &GeneratedFamily, n: usize, k: usize) -> Result<f64> {
        match *self {
            LambdaRule::Practical(c) => {
                Ok(c * ((fam.common.n() as f64).ln() / (n as f64 * k as f64)).sqrt())
            }
            LambdaRule::Oracle => oracle_lambda_union(&fam.common, &fam.support),
        }
    }

    fn novel_lambda(&self, fam: &GeneratedFamily, n_novel: usize) -> Result<f64> {
        match *self {
            LambdaRule::Practical(c) => {
                Ok(c * ((fam.novel.n() as f64).ln() / n_novel as f64).sqrt())
            }
            LambdaRule::Oracle => {
                let novel_support = support_of(fam.novel.matrix(), 0.0);
                oracle_lambda_novel(&fam.novel, &novel_support)
            }
        }
    }
}

/// Which quantity a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Grid of C with per-task samples `n = max(1, round(C ln N / K))`.
    Samples,
    /// Grid of K with per-task samples `n = max(1, round(200 ln N / K))`.
    Tasks,
    /// Grid of C_novel with per-trial novel samples
    /// `n_novel = max(1, round(C_novel ln(max(|S_off|, 2))))`.
    Novel,
}

/// Sweep description; JSON configuration files mirror these field names.
/// Omitted fields take defaults; unknown fields are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub family: TaskFamilySpec,
    pub sweep_kind: SweepKind,
    pub grid: Vec<u64>,
    pub trials: usize,
    pub lambda_rule: LambdaRule,
    /// Rule for the novel-task solve; defaults to a lighter practical
    /// constant since the constrained problem needs far less shrinkage.
    pub novel_lambda_rule: Option<LambdaRule>,
    pub tau: f64,
    pub master_seed: u64,
    /// Also run the per-task reference method on matched seeds and report
    /// its success count alongside.
    pub with_baseline: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            family: TaskFamilySpec {
                dim: 10,
                tasks: 10,
                samples_per_task: 46,
                novel_samples: 0,
                degree: 3,
                keep_prob: 0.9,
                min_eig: 0.5,
                seed: 0,
            },
            sweep_kind: SweepKind::Samples,
            grid: vec![5, 10, 20, 50, 100, 200],
            trials: 50,
            lambda_rule: LambdaRule::Practical(DEFAULT_PRACTICAL_C),
            novel_lambda_rule: Some(LambdaRule::Practical(DEFAULT_NOVEL_PRACTICAL_C)),
            tau: crate::model::DEFAULT_SUPPORT_TAU,
            master_seed: 0x1d9b,
            with_baseline: false,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidParameter("tau must be non-negative".into()));
        }
        if let SweepKind::Tasks = self.sweep_kind {
            if self.grid.contains(&0) {
                return Err(Error::InvalidParameter("task grid contains zero".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub grid_value: u64,
    /// Per-task auxiliary samples after rounding.
    pub n_used: usize,
    /// Novel-task samples actually drawn, when the novel step was enabled.
    pub novel_n: Option<usize>,
    /// Sign consistency of the pooled sparse iterate against the true
    /// common matrix (support-union equality for the reference method).
    pub union_recovered: bool,
    /// Sign consistency of the constrained estimate against the true novel
    /// matrix; joint with step-one success since the novel solve only runs
    /// after it.
    pub novel_recovered: Option<bool>,
    pub solver_converged: bool,
    /// The trial substream id.
    pub seed: u64,
    /// Generation or solver failure recorded instead of aborting the sweep.
    pub error: Option<String>,
}

/// One grid point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_value: u64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub trials: usize,
    pub successes: usize,
    /// Exactly `successes / trials`.
    pub success_rate: f64,
    pub baseline_successes: Option<usize>,
    /// Novel sweeps: number of trials whose step one succeeded (the
    /// conditioning basis).
    pub step1_successes: Option<usize>,
    /// Novel sweeps: `successes / step1_successes`.
    pub conditional_rate: Option<f64>,
    pub wall_clock_secs: f64,
}

/// Complete sweep output: config echo, per-point rows, and every trial.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub trial_results: Vec<TrialResult>,
}

enum NovelSamples {
    /// Use the family spec's `n_novel` (0 disables the novel step).
    FromSpec,
    /// Scale with the realized support: `max(1, round(c ln(max(|S_off|, 2))))`.
    Scaled(f64),
}

/// Run the two-step method once: generate a family, sample every auxiliary
/// task, solve the pooled estimator, test sign consistency against the true
/// common matrix; when the union was recovered and `n_novel >= 1`, sample
/// the novel task, solve the constrained estimator with the recovered
/// support and the step-one diagonal, and test sign consistency against the
/// true novel matrix. Failures are recorded in the result, never raised.
///
/// Both steps use `rule`; see [`run_trial_with_rules`] to regularize the
/// novel solve differently.
pub fn run_trial(spec: &TaskFamilySpec, rule: LambdaRule, tau: f64, seed: u64) -> TrialResult {
    run_trial_inner(spec, rule, rule, tau, seed, NovelSamples::FromSpec)
}

/// [`run_trial`] with a separate regularization rule for the novel step.
pub fn run_trial_with_rules(
    spec: &TaskFamilySpec,
    rule: LambdaRule,
    novel_rule: LambdaRule,
    tau: f64,
    seed: u64,
) -> TrialResult {
    run_trial_inner(spec, rule, novel_rule, tau, seed, NovelSamples::FromSpec)
}

fn failed_trial(spec: &TaskFamilySpec, seed: u64, err: &Error) -> TrialResult {
    TrialResult {
        grid_value: 0,
        n_used: spec.samples_per_task,
        novel_n: None,
        union_recovered: false,
        novel_recovered: if spec.novel_samples >= 1 {
            Some(false)
        } else {
            None
        },
        solver_converged: false,
        seed,
        error: Some(err.to_string()),
    }
}

/// Per-task empirical covariances with weights 1/K, drawn from substreams
/// keyed by task index. Shared by the meta method and the reference method
/// so paired comparisons see identical data.
fn trial_task_covariances(
    spec: &TaskFamilySpec,
    fam: &GeneratedFamily,
    root: &Stream,
) -> Result<Vec<CovarianceEstimate>> {
    let k = spec.tasks;
    let mut sigmas = Vec::with_capacity(k);
    for task_idx in 0..k {
        let samples = sample_mvn(
            &fam.tasks[task_idx],
            spec.samples_per_task,
            root.derive_seed(&[TAG_TRIAL_SAMPLES, task_idx as u64 + 1]),
        );
        let mut est = empirical_covariance(&samples)?;
        est.weight = 1.0 / k as f64;
        sigmas.push(est);
    }
    Ok(sigmas)
}

fn run_trial_inner(
    spec: &TaskFamilySpec,
    rule: LambdaRule,
    novel_rule: LambdaRule,
    tau: f64,
    seed: u64,
    novel_samples: NovelSamples,
) -> TrialResult {
    let mut spec = spec.clone();
    spec.seed = seed;
    let root = Stream::new(seed);

    let attempt = (|| -> Result<TrialResult> {
        let fam = gen_family(&spec)?;
        let n = spec.samples_per_task;
        let k = spec.tasks;
        let n_novel = match novel_samples {
            NovelSamples::FromSpec => spec.novel_samples,
            NovelSamples::Scaled(c) => {
                let s_off = fam.support.off_len().max(2) as f64;
                (c * s_off.ln()).round().max(1.0) as usize
            }
        };

        let sigmas = trial_task_covariances(&spec, &fam, &root)?;
        let weights = vec![1.0 / k as f64; k];
        let lambda = rule.union_lambda(&fam, n, k)?;
        let cfg = SolverConfig::new(lambda, spec.dim);
        let step1 = pooled_glasso(&sigmas, &weights, &cfg)?;
        let union_recovered = sign_consistent(&step1.sparse, fam.common.matrix(), tau)?;
        let mut solver_converged = step1.converged;

        let mut novel_recovered = None;
        let mut novel_n = None;
        if n_novel >= 1 {
            novel_n = Some(n_novel);
            if union_recovered {
                let support_hat = support_of(&step1.sparse, tau);
                let fixed_diag = step1.sparse.diag();
                let novel_draws = sample_mvn(
                    &fam.novel,
                    n_novel,
                    root.derive_seed(&[TAG_TRIAL_NOVEL_SAMPLES]),
                );
                let sigma_novel = empirical_covariance(&novel_draws)?;
                let lambda_novel = novel_rule.novel_lambda(&fam, n_novel)?;
                let cfg_novel = SolverConfig::new(lambda_novel, spec.dim);
                let step2 =
                    constrained_glasso(&sigma_novel, &support_hat, &fixed_diag, &cfg_novel)?;
                novel_recovered = Some(sign_consistent(&step2.sparse, fam.novel.matrix(), tau)?);
                solver_converged &= step2.converged;
            } else {
                novel_recovered = Some(false);
            }
        }

        Ok(TrialResult {
            grid_value: 0,
            n_used: n,
            novel_n,
            union_recovered,
            novel_recovered,
            solver_converged,
            seed,
            error: None,
        })
    })();

    attempt.unwrap_or_else(|err| failed_trial(&spec, seed, &err))
}

/// Per-task single-task reference: run the plain estimator on each task's
/// own samples (same substreams as [`run_trial`], so comparisons are
/// paired), union the recovered supports, and compare against the true
/// support union as a set.
pub fn baseline_single_task(
    spec: &TaskFamilySpec,
    rule: LambdaRule,
    tau: f64,
    seed: u64,
) -> TrialResult {
    let mut spec = spec.clone();
    spec.seed = seed;
    let root = Stream::new(seed);

    let attempt = (|| -> Result<TrialResult> {
        let fam = gen_family(&spec)?;
        let n = spec.samples_per_task;
        let lambda = match rule {
            // Single-task budget: K = 1 in the practical rule.
            LambdaRule::Practical(c) => c * ((spec.dim as f64).ln() / n as f64).sqrt(),
            LambdaRule::Oracle => oracle_lambda_union(&fam.common, &fam.support)?,
        };
        let cfg = SolverConfig::new(lambda, spec.dim);
        let mut supports = Vec::with_capacity(spec.tasks);
        let mut solver_converged = true;
        for est in trial_task_covariances(&spec, &fam, &root)? {
            let result = glasso(&est, &cfg)?;
            solver_converged &= result.converged;
            supports.push(support_of(&result.sparse, tau));
        }
        let recovered = support_union(&supports)?;
        Ok(TrialResult {
            grid_value: 0,
            n_used: n,
            novel_n: None,
            union_recovered: recovered == fam.support,
            novel_recovered: None,
            solver_converged,
            seed,
            error: None,
        })
    })();

    attempt.unwrap_or_else(|err| failed_trial(&spec, seed, &err))
}

fn round_at_least_one(x: f64) -> usize {
    x.round().max(1.0) as usize
}

/// Per-task sample count for a samples-sweep grid value.
pub fn samples_for_c(c: u64, n_dim: usize, k: usize) -> usize {
    round_at_least_one(c as f64 * (n_dim as f64).ln() / k as f64)
}

/// Per-task sample count for a tasks-sweep grid value.
pub fn samples_for_k(k: u64, n_dim: usize) -> usize {
    round_at_least_one(200.0 * (n_dim as f64).ln() / k as f64)
}

fn point_spec(cfg: &SweepConfig, grid_value: u64) -> (TaskFamilySpec, NovelSamples) {
    let mut spec = cfg.family.clone();
    match cfg.sweep_kind {
        SweepKind::Samples => {
            spec.samples_per_task = samples_for_c(grid_value, spec.dim, spec.tasks);
            (spec, NovelSamples::FromSpec)
        }
        SweepKind::Tasks => {
            spec.tasks = grid_value as usize;
            spec.samples_per_task = samples_for_k(grid_value, spec.dim);
            (spec, NovelSamples::FromSpec)
        }
        SweepKind::Novel => (spec, NovelSamples::Scaled(grid_value as f64)),
    }
}

/// Run a sweep of the configured kind. Trials execute in parallel; counts
/// aggregate in `(grid_value, trial_index)` order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let master = Stream::new(cfg.master_seed);
    let mut rows = Vec::with_capacity(cfg.grid.len());
    let mut all_trials = Vec::with_capacity(cfg.grid.len() * cfg.trials);

    for &grid_value in &cfg.grid {
        let started = Instant::now();
        let (spec, novel_mode) = point_spec(cfg, grid_value);
        let scaled_c = match novel_mode {
            NovelSamples::Scaled(c) => Some(c),
            NovelSamples::FromSpec => None,
        };

        let novel_rule = cfg.novel_lambda_rule.unwrap_or(cfg.lambda_rule);
        let mut trials: Vec<(TrialResult, Option<TrialResult>)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial_idx| {
                let seed = master.derive_seed(&[TAG_SWEEP, grid_value, trial_idx as u64]);
                let mode = match scaled_c {
                    Some(c) => NovelSamples::Scaled(c),
                    None => NovelSamples::FromSpec,
                };
                let trial =
                    run_trial_inner(&spec, cfg.lambda_rule, novel_rule, cfg.tau, seed, mode);
                let baseline = cfg
                    .with_baseline
                    .then(|| baseline_single_task(&spec, cfg.lambda_rule, cfg.tau, seed));
                (trial, baseline)
            })
            .collect();
        for (t, b) in trials.iter_mut() {
            t.grid_value = grid_value;
            if let Some(b) = b.as_mut() {
                b.grid_value = grid_value;
            }
        }

        let is_novel = matches!(cfg.sweep_kind, SweepKind::Novel);
        let step1_count = trials.iter().filter(|(t, _)| t.union_recovered).count();
        let successes = if is_novel {
            trials
                .iter()
                .filter(|(t, _)| t.novel_recovered == Some(true))
                .count()
        } else {
            step1_count
        };
        let baseline_successes = cfg.with_baseline.then(|| {
            trials
                .iter()
                .filter(|(_, b)| b.as_ref().is_some_and(|b| b.union_recovered))
                .count()
        });
        let n_for_row = if is_novel {
            trials
                .first()
                .and_then(|(t, _)| t.novel_n)
                .unwrap_or(spec.novel_samples)
        } else {
            spec.samples_per_task
        };
        rows.push(SweepRow {
            grid_value,
            n: n_for_row,
            k: spec.tasks,
            n_dim: spec.dim,
            trials: cfg.trials,
            successes,
            success_rate: successes as f64 / cfg.trials as f64,
            baseline_successes,
            step1_successes: is_novel.then_some(step1_count),
            conditional_rate: if is_novel && step1_count > 0 {
                Some(successes as f64 / step1_count as f64)
            } else {
                None
            },
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        all_trials.extend(trials.into_iter().map(|(t, _)| t));
    }

    Ok(SweepReport {
        config: cfg.clone(),
        rows,
        trial_results: all_trials,
    })
}

/// Samples sweep (`sweep_kind` forced accordingly).
pub fn run_sweep_samples(cfg: &SweepConfig) -> Result<SweepReport> {
    let mut cfg = cfg.clone();
    cfg.sweep_kind = SweepKind::Samples;
    run_sweep(&cfg)
}

/// Tasks sweep.
pub fn run_sweep_tasks(cfg: &SweepConfig) -> Result<SweepReport> {
    let mut cfg = cfg.clone();
    cfg.sweep_kind = SweepKind::Tasks;
    run_sweep(&cfg)
}

/// Novel-task sample-complexity sweep. The auxiliary stage runs at the
/// family template's fixed (n, K); step-one success is the conditioning
/// basis recorded per row.
pub fn run_sweep_novel(cfg: &SweepConfig) -> Result<SweepReport> {
    let mut cfg = cfg.clone();
    cfg.sweep_kind = SweepKind::Novel;
    run_sweep(&cfg)
}
