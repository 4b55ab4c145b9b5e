//! Command-line interface: family generation, the pooled and constrained
//! solvers, theory diagnostics, and the Monte-Carlo sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metaglasso::harness::{
    run_sweep_novel, run_sweep_samples, run_sweep_tasks, SweepConfig, SweepReport,
};
use metaglasso::io;
use metaglasso::model::{support_of, CovarianceEstimate, SupportSet, DEFAULT_SUPPORT_TAU};
use metaglasso::solver::{constrained_glasso, pooled_glasso, SolverConfig, SolverResult};
use metaglasso::synth::gen_family;
use metaglasso::theory::{
    curvature_constants, delta_dagger_novel, fano_lower_bound_novel, fano_lower_bound_union,
    incoherence_alpha, novel_success_prob, sufficiency_report,
};

#[derive(Parser)]
#[command(
    name = "metaglasso",
    version,
    about = "Two-step meta-learning for precision-matrix support recovery"
)]
struct Cli {
    /// Override the master seed (sweeps) or family seed (gen).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Sweep configuration JSON; omitted fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-task family directory.
    Gen {
        /// Dimension N.
        #[arg(long)]
        n_dim: Option<usize>,
        /// Task count K.
        #[arg(long)]
        tasks: Option<usize>,
        /// Samples per auxiliary task n.
        #[arg(long)]
        samples: Option<usize>,
        /// Novel-task samples n_novel.
        #[arg(long)]
        novel_samples: Option<usize>,
        /// Target Erdos-Renyi degree d.
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        keep_prob: Option<f64>,
        #[arg(long)]
        min_eig: Option<f64>,
    },
    /// Solve the pooled estimator from covariance files, or the constrained
    /// estimator when --support and --fixed-diag are given.
    Solve {
        /// Covariance matrix JSON files (pooled with equal weights unless
        /// --weights is given).
        #[arg(required = true)]
        sigma: Vec<PathBuf>,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        rho: Option<f64>,
        /// Primal and dual Frobenius tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Comma-separated pooling weights, one per covariance file.
        #[arg(long)]
        weights: Option<String>,
        /// Support-set JSON enabling the constrained mode.
        #[arg(long, requires = "fixed_diag")]
        support: Option<PathBuf>,
        /// Fixed-diagonal JSON array for the constrained mode.
        #[arg(long, requires = "support")]
        fixed_diag: Option<PathBuf>,
        /// Support-extraction threshold for the result file.
        #[arg(long, default_value_t = DEFAULT_SUPPORT_TAU)]
        tau: f64,
    },
    /// Novel-task step: constrained solve using the support and diagonal of
    /// a step-one result file.
    Novel {
        /// Novel-task covariance JSON.
        sigma: PathBuf,
        /// Step-one result JSON (from `solve`).
        #[arg(long)]
        step1: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_TAU)]
        tau: f64,
    },
    /// Theory constants, sufficiency bounds and assumption flags for a
    /// precision-matrix JSON.
    Diagnose {
        omega: PathBuf,
        /// Samples per task for the bound evaluation.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Task count for the bound evaluation.
        #[arg(short = 'k', long, default_value_t = 10)]
        k: usize,
        /// Support-extraction threshold.
        #[arg(long, default_value_t = DEFAULT_SUPPORT_TAU)]
        tau: f64,
        /// Sub-Gaussian parameter sigma.
        #[arg(long)]
        sigma_sg: Option<f64>,
        /// Elementwise covariance bound gamma.
        #[arg(long)]
        gamma: Option<f64>,
        /// Spectral perturbation bound c_max.
        #[arg(long)]
        c_max: Option<f64>,
        /// Perturbation bias beta.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Success-rate sweep over the sample budget C (n = C ln N / K).
    SweepSamples {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Success-rate sweep over the task count K (n = 200 ln N / K).
    SweepTasks {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Novel-task sample-complexity sweep (n_novel = C ln |S_off|).
    SweepNovel {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Samples sweep with the per-task reference method on matched seeds.
    Baseline {
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn exit_code_for(err: &metaglasso::Error) -> u8 {
    use metaglasso::Error::*;
    match err {
        Io(_) | Json(_) => 2,
        NotPositiveDefinite { .. } | SingularBlock(_) | NumericFailure(_) | EmptySampleSet => 3,
        InvalidParameter(_) | DimensionMismatch(_) | IndexOutOfRange { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes, everything else is a
            // usage error.
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn load_config(cli_config: &Option<PathBuf>) -> metaglasso::Result<SweepConfig> {
    match cli_config {
        Some(path) => io::read_sweep_config(path),
        None => Ok(SweepConfig::default()),
    }
}

fn read_covariance(path: &Path) -> metaglasso::Result<CovarianceEstimate> {
    Ok(CovarianceEstimate {
        matrix: io::read_matrix(path)?.symmetrized(),
        n_samples: 0,
        weight: 1.0,
    })
}

fn solver_config(
    lambda: f64,
    n_dim: usize,
    rho: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> SolverConfig {
    let mut cfg = SolverConfig::new(lambda, n_dim);
    if let Some(rho) = rho {
        cfg.rho = rho;
    }
    if let Some(tol) = tol {
        cfg.tol_primal = tol;
        cfg.tol_dual = tol;
    }
    if let Some(max_iter) = max_iter {
        cfg.max_iter = max_iter;
    }
    cfg
}

fn print_result_summary(result: &SolverResult, tau: f64) {
    println!(
        "converged={} iterations={} primal={:.3e} dual={:.3e} support_pairs={} kkt_nonzero={:.3e} kkt_zero={:.3e}",
        result.converged,
        result.iterations,
        result.primal_residual,
        result.dual_residual,
        support_of(&result.sparse, tau).len(),
        result.kkt.max_violation_nonzero,
        result.kkt.max_violation_zero,
    );
}

fn print_sweep_summary(report: &SweepReport) {
    for row in &report.rows {
        let baseline = row
            .baseline_successes
            .map(|b| format!(" baseline={b}/{}", row.trials))
            .unwrap_or_default();
        let conditional = row
            .conditional_rate
            .map(|c| format!(" conditional={c:.3}"))
            .unwrap_or_default();
        println!(
            "grid={} n={} K={} N={} rate={}/{}{baseline}{conditional} ({:.1}s)",
            row.grid_value, row.n, row.k, row.n_dim, row.successes, row.trials, row.wall_clock_secs,
        );
    }
}

fn run_and_write_sweep(
    report: metaglasso::Result<SweepReport>,
    out: &Path,
) -> metaglasso::Result<()> {
    let report = report?;
    io::write_sweep_outputs(out, &report)?;
    print_sweep_summary(&report);
    println!("wrote {}", out.join("results.csv").display());
    Ok(())
}

fn run(cli: Cli) -> metaglasso::Result<()> {
    match cli.command {
        Command::Gen {
            n_dim,
            tasks,
            samples,
            novel_samples,
            degree,
            keep_prob,
            min_eig,
        } => {
            let mut spec = load_config(&cli.config)?.family;
            if let Some(v) = n_dim {
                spec.dim = v;
            }
            if let Some(v) = tasks {
                spec.tasks = v;
            }
            if let Some(v) = samples {
                spec.samples_per_task = v;
            }
            if let Some(v) = novel_samples {
                spec.novel_samples = v;
            }
            if let Some(v) = degree {
                spec.degree = v;
            }
            if let Some(v) = keep_prob {
                spec.keep_prob = v;
            }
            if let Some(v) = min_eig {
                spec.min_eig = v;
            }
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let family = gen_family(&spec)?;
            io::write_family(&cli.out, &family, &spec)?;
            println!(
                "wrote family (N={}, K={}, |S_off|={}) to {}",
                spec.dim,
                spec.tasks,
                family.support.off_len(),
                cli.out.display()
            );
            Ok(())
        }
        Command::Solve {
            sigma,
            lambda,
            rho,
            tol,
            max_iter,
            weights,
            support,
            fixed_diag,
            tau,
        } => {
            let estimates: Vec<CovarianceEstimate> = sigma
                .iter()
                .map(|p| read_covariance(p))
                .collect::<metaglasso::Result<_>>()?;
            let n_dim = estimates[0].matrix.n();
            let cfg = solver_config(lambda, n_dim, rho, tol, max_iter);
            let result = match (&support, &fixed_diag) {
                (Some(support_path), Some(diag_path)) => {
                    if estimates.len() != 1 {
                        return Err(metaglasso::Error::InvalidParameter(
                            "constrained mode takes exactly one covariance file".into(),
                        ));
                    }
                    let support = io::read_support(support_path)?;
                    let diag = io::read_vector(diag_path)?;
                    constrained_glasso(&estimates[0], &support, &diag, &cfg)?
                }
                _ => {
                    let weights = match weights {
                        Some(list) => list
                            .split(',')
                            .map(|w| {
                                w.trim().parse::<f64>().map_err(|e| {
                                    metaglasso::Error::InvalidParameter(format!(
                                        "bad weight {w:?}: {e}"
                                    ))
                                })
                            })
                            .collect::<metaglasso::Result<Vec<f64>>>()?,
                        None => vec![1.0 / estimates.len() as f64; estimates.len()],
                    };
                    pooled_glasso(&estimates, &weights, &cfg)?
                }
            };
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("result.json");
            io::write_solver_result(&path, &result, tau)?;
            print_result_summary(&result, tau);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Novel {
            sigma,
            step1,
            lambda,
            rho,
            tol,
            max_iter,
            tau,
        } => {
            let step1_file = io::read_solver_result(&step1)?;
            let sigma_novel = read_covariance(&sigma)?;
            let n_dim = sigma_novel.matrix.n();
            let mut support = SupportSet::new(n_dim);
            for [i, j] in &step1_file.support {
                if *i == 0 || *j == 0 {
                    return Err(metaglasso::Error::InvalidParameter(
                        "step-one support indices are 1-based; found 0".into(),
                    ));
                }
                support.insert(i - 1, j - 1)?;
            }
            for i in 0..n_dim {
                support.insert(i, i)?;
            }
            let fixed_diag = step1_file.sparse.diag();
            let cfg = solver_config(lambda, n_dim, rho, tol, max_iter);
            let result = constrained_glasso(&sigma_novel, &support, &fixed_diag, &cfg)?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("novel_result.json");
            io::write_solver_result(&path, &result, tau)?;
            print_result_summary(&result, tau);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Diagnose {
            omega,
            n,
            k,
            tau,
            sigma_sg,
            gamma,
            c_max,
            beta,
        } => {
            let precision = io::read_precision(&omega)?;
            let support = support_of(precision.matrix(), tau);
            let mut constants = curvature_constants(&precision, &support)?;
            constants.alpha = incoherence_alpha(&precision, &support)?;
            if let Some(v) = sigma_sg {
                constants.sigma_sg = v;
            }
            if let Some(v) = gamma {
                constants.gamma_bound = v;
            }
            if let Some(v) = c_max {
                constants.c_max = v;
            }
            if let Some(v) = beta {
                constants.beta = v;
            }
            let s_off = support.off_len();
            let incoherence_ok = constants.alpha > 0.0 && constants.alpha <= 1.0;
            // The sufficiency formulas need a positive incoherence slack; a
            // violated assumption is reported through the flag, never as an
            // error.
            let (sufficiency, beta_ok, novel_bound) = if incoherence_ok {
                let sufficiency = sufficiency_report(&constants, n, k, precision.n())?;
                let beta_ok = constants.beta <= sufficiency.delta_dagger / 2.0;
                let ddn = delta_dagger_novel(&constants)?;
                let novel_bound = if s_off >= 1 {
                    novel_success_prob(n, s_off, ddn, constants.sigma_sg, constants.gamma_bound)?
                } else {
                    1.0
                };
                (Some(sufficiency), Some(beta_ok), Some(novel_bound))
            } else {
                (None, None, None)
            };
            let report = io::DiagnoseFile {
                incoherence_ok,
                beta_ok,
                constants,
                sufficiency,
                n,
                k,
                s_off,
                novel_prob_lower_bound: novel_bound,
                fano_union_bound: fano_lower_bound_union(n as f64, precision.n(), k).ok(),
                fano_novel_bound: if s_off >= 4 {
                    fano_lower_bound_novel(n as f64, s_off).ok()
                } else {
                    None
                },
            };
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join("diagnose.json");
            io::write_diagnose(&path, &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::SweepSamples { trials } => {
            let mut cfg = load_config(&cli.config)?;
            apply_overrides(&mut cfg, cli.seed, trials);
            run_and_write_sweep(run_sweep_samples(&cfg), &cli.out)
        }
        Command::SweepTasks { trials } => {
            let mut cfg = load_config(&cli.config)?;
            apply_overrides(&mut cfg, cli.seed, trials);
            run_and_write_sweep(run_sweep_tasks(&cfg), &cli.out)
        }
        Command::SweepNovel { trials } => {
            let mut cfg = load_config(&cli.config)?;
            apply_overrides(&mut cfg, cli.seed, trials);
            run_and_write_sweep(run_sweep_novel(&cfg), &cli.out)
        }
        Command::Baseline { trials } => {
            let mut cfg = load_config(&cli.config)?;
            apply_overrides(&mut cfg, cli.seed, trials);
            cfg.with_baseline = true;
            run_and_write_sweep(run_sweep_samples(&cfg), &cli.out)
        }
    }
}

fn apply_overrides(cfg: &mut SweepConfig, seed: Option<u64>, trials: Option<usize>) {
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
    }
}
