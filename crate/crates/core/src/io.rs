//! Shared file formats.
//!
//! * Matrix: `{"n": <int>, "data": [<n*n row-major reals>]}`. Floats are
//!   emitted at full precision (shortest round-trip representation).
//! * Support set: `{"n": <int>, "pairs": [[i, j], ...]}` with 1-based
//!   indices, both orientations listed.
//! * Fixed diagonal: a bare JSON array of reals.
//! * Solver result, generated family directory, sweep outputs (results.csv,
//!   report.json, manifest.json) and the diagnose report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::harness::{SweepConfig, SweepReport};
use crate::matops::SquareMatrix;
use crate::model::{PrecisionMatrix, SupportSet};
use crate::solver::{KktReport, SolverResult};
use crate::synth::{GeneratedFamily, TaskFamilySpec};
use crate::theory::{SufficiencyReport, TheoryConstants};
use crate::{Error, Result};

const TOOL_NAME: &str = "metaglasso";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_matrix(path: &Path, matrix: &SquareMatrix) -> Result<()> {
    write_json(path, matrix)
}

pub fn read_matrix(path: &Path) -> Result<SquareMatrix> {
    read_json(path)
}

/// Read a matrix and validate it as a precision matrix (symmetrized, then
/// required positive definite).
pub fn read_precision(path: &Path) -> Result<PrecisionMatrix> {
    PrecisionMatrix::new(read_matrix(path)?)
}

#[derive(Serialize, Deserialize)]
struct SupportFile {
    n: usize,
    pairs: Vec<[usize; 2]>,
}

pub fn write_support(path: &Path, support: &SupportSet) -> Result<()> {
    let pairs: Vec<[usize; 2]> = support.pairs().map(|(i, j)| [i + 1, j + 1]).collect();
    write_json(
        path,
        &SupportFile {
            n: support.n(),
            pairs,
        },
    )
}

pub fn read_support(path: &Path) -> Result<SupportSet> {
    let file: SupportFile = read_json(path)?;
    let mut support = SupportSet::new(file.n);
    for [i, j] in file.pairs {
        if i == 0 || j == 0 {
            return Err(Error::InvalidParameter(
                "support file indices are 1-based; found 0".into(),
            ));
        }
        support.insert(i - 1, j - 1)?;
    }
    Ok(support)
}

pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    write_json(path, &values)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    read_json(path)
}

/// On-disk form of a solver result: both iterates, the support of the sparse
/// iterate (1-based pairs), residuals and the KKT report.
#[derive(Serialize, Deserialize)]
pub struct SolverResultFile {
    pub omega: SquareMatrix,
    pub sparse: SquareMatrix,
    pub support: Vec<[usize; 2]>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub kkt: KktReport,
}

impl SolverResultFile {
    pub fn from_result(result: &SolverResult, tau: f64) -> Self {
        let support = crate::model::support_of(&result.sparse, tau)
            .pairs()
            .map(|(i, j)| [i + 1, j + 1])
            .collect();
        Self {
            omega: result.omega.matrix().clone(),
            sparse: result.sparse.clone(),
            support,
            iterations: result.iterations,
            primal_residual: result.primal_residual,
            dual_residual: result.dual_residual,
            converged: result.converged,
            kkt: result.kkt,
        }
    }
}

pub fn write_solver_result(path: &Path, result: &SolverResult, tau: f64) -> Result<()> {
    write_json(path, &SolverResultFile::from_result(result, tau))
}

pub fn read_solver_result(path: &Path) -> Result<SolverResultFile> {
    read_json(path)
}

#[derive(Serialize, Deserialize)]
struct FamilyManifest {
    spec: TaskFamilySpec,
    seed: u64,
    tool: String,
    version: String,
}

/// Write a generated family as a directory: common.json, support.json,
/// `task_<k>.json` (1-based), novel.json and a manifest echoing the family spec.
pub fn write_family(dir: &Path, family: &GeneratedFamily, spec: &TaskFamilySpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("common.json"), family.common.matrix())?;
    write_support(&dir.join("support.json"), &family.support)?;
    for (k, task) in family.tasks.iter().enumerate() {
        write_matrix(&dir.join(format!("task_{}.json", k + 1)), task.matrix())?;
    }
    write_matrix(&dir.join("novel.json"), family.novel.matrix())?;
    write_json(
        &dir.join("manifest.json"),
        &FamilyManifest {
            spec: spec.clone(),
            seed: spec.seed,
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
        },
    )
}

/// The results.csv content for a sweep report. Pure function of the report,
/// so byte-identical configs give byte-identical files.
pub fn results_csv(report: &SweepReport) -> String {
    let with_baseline = report.rows.iter().any(|r| r.baseline_successes.is_some());
    let mut out = String::from("grid_value,n,K,N,trials,successes,success_rate");
    if with_baseline {
        out.push_str(",baseline_successes");
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            row.grid_value, row.n, row.k, row.n_dim, row.trials, row.successes, row.success_rate
        ));
        if with_baseline {
            out.push(',');
            if let Some(b) = row.baseline_successes {
                out.push_str(&b.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SweepManifest {
    config: SweepConfig,
    tool: String,
    version: String,
}

/// Write results.csv, report.json and manifest.json for a sweep.
pub fn write_sweep_outputs(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), results_csv(report))?;
    write_json(&dir.join("report.json"), report)?;
    write_json(
        &dir.join("manifest.json"),
        &SweepManifest {
            config: report.config.clone(),
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
        },
    )
}

/// Read a sweep configuration, filling omitted fields with defaults.
pub fn read_sweep_config(path: &Path) -> Result<SweepConfig> {
    read_json(path)
}

/// Diagnose output: constants, sufficiency quantities, assumption flags and
/// the bound values at the supplied sample sizes.
///
/// An incoherence violation (alpha <= 0) is reported through the flag, not
/// raised as an error; the sufficiency quantities are then absent since the
/// formulas require a positive slack.
#[derive(Serialize, Deserialize)]
pub struct DiagnoseFile {
    pub constants: TheoryConstants,
    pub sufficiency: Option<SufficiencyReport>,
    /// Whether the irrepresentability assumption holds (alpha > 0).
    pub incoherence_ok: bool,
    /// Whether beta is within delta-dagger / 2 (absent with the sufficiency
    /// quantities).
    pub beta_ok: Option<bool>,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub s_off: usize,
    /// Novel-task success bound (absent when the sufficiency quantities are).
    pub novel_prob_lower_bound: Option<f64>,
    /// Failure lower bound for union recovery (needs N >= 5).
    pub fano_union_bound: Option<f64>,
    /// Failure lower bound for novel recovery (needs |S_off| >= 4).
    pub fano_novel_bound: Option<f64>,
}

pub fn write_diagnose(path: &Path, report: &DiagnoseFile) -> Result<()> {
    write_json(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_sweep_samples, LambdaRule, SweepKind};
    use crate::model::support_of;
    use crate::solver::{glasso, SolverConfig};
    use crate::synth::gen_family;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tmp();
        let path = dir.path().join("m.json");
        let m = SquareMatrix::from_rows(2, vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_rejects_wrong_length() {
        let dir = tmp();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"n": 2, "data": [1.0, 2.0, 3.0]}"#).unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn support_round_trip_with_one_based_indices() {
        let dir = tmp();
        let path = dir.path().join("s.json");
        let mut s = SupportSet::new(3);
        s.insert(0, 1).unwrap();
        s.insert(2, 2).unwrap();
        write_support(&path, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains('['));
        let back = read_support(&path).unwrap();
        assert_eq!(s, back);
        // File carries 1-based pairs.
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let pairs = parsed["pairs"].as_array().unwrap();
        assert!(pairs
            .iter()
            .any(|p| p[0].as_u64() == Some(1) && p[1].as_u64() == Some(2)));
    }

    #[test]
    fn solver_result_file_round_trip() {
        let dir = tmp();
        let path = dir.path().join("r.json");
        let sigma = crate::model::CovarianceEstimate {
            matrix: SquareMatrix::from_diag(&[1.0, 2.0]),
            n_samples: 10,
            weight: 1.0,
        };
        let result = glasso(&sigma, &SolverConfig::new(0.2, 2)).unwrap();
        write_solver_result(&path, &result, 1e-6).unwrap();
        let back = read_solver_result(&path).unwrap();
        assert_eq!(back.sparse, result.sparse);
        assert_eq!(back.converged, result.converged);
        assert_eq!(back.support.len(), support_of(&result.sparse, 1e-6).len());
    }

    #[test]
    fn family_directory_layout() {
        let dir = tmp();
        let spec = TaskFamilySpec {
            dim: 5,
            tasks: 3,
            samples_per_task: 10,
            novel_samples: 0,
            degree: 2,
            keep_prob: 0.9,
            min_eig: 0.5,
            seed: 7,
        };
        let fam = gen_family(&spec).unwrap();
        write_family(dir.path(), &fam, &spec).unwrap();
        for name in [
            "common.json",
            "support.json",
            "task_1.json",
            "task_3.json",
            "novel.json",
            "manifest.json",
        ] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        let back = read_precision(&dir.path().join("common.json")).unwrap();
        assert_eq!(back.matrix(), fam.common.matrix());
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["seed"].as_u64(), Some(7));
        assert_eq!(manifest["spec"]["N"].as_u64(), Some(5));
    }

    #[test]
    fn sweep_config_round_trip_and_defaults() {
        let dir = tmp();
        let path = dir.path().join("cfg.json");
        let cfg = SweepConfig::default();
        write_json(&path, &cfg).unwrap();
        let back = read_sweep_config(&path).unwrap();
        assert_eq!(cfg, back);

        // Partial config picks up defaults.
        fs::write(&path, r#"{"trials": 3, "grid": [7]}"#).unwrap();
        let partial = read_sweep_config(&path).unwrap();
        assert_eq!(partial.trials, 3);
        assert_eq!(partial.grid, vec![7]);
        assert_eq!(partial.sweep_kind, SweepKind::Samples);
        assert_eq!(
            partial.lambda_rule,
            LambdaRule::Practical(crate::harness::DEFAULT_PRACTICAL_C)
        );
    }

    #[test]
    fn csv_shape_and_determinism() {
        let cfg = SweepConfig {
            family: TaskFamilySpec {
                dim: 5,
                tasks: 2,
                samples_per_task: 10,
                novel_samples: 0,
                degree: 2,
                keep_prob: 1.0,
                min_eig: 0.5,
                seed: 0,
            },
            grid: vec![5, 10],
            trials: 2,
            ..SweepConfig::default()
        };
        let a = run_sweep_samples(&cfg).unwrap();
        let b = run_sweep_samples(&cfg).unwrap();
        let csv_a = results_csv(&a);
        let csv_b = results_csv(&b);
        assert_eq!(csv_a, csv_b);
        let mut lines = csv_a.lines();
        assert_eq!(
            lines.next().unwrap(),
            "grid_value,n,K,N,trials,successes,success_rate"
        );
        assert_eq!(lines.count(), 2);
    }
}
