//! Integration tests of the experiment pipelines: paired comparison against
//! the per-task reference method on matched seeds, and a full novel-task
//! sweep through the file writers.

use metaglasso::harness::{
    baseline_single_task, run_sweep, run_trial, LambdaRule, SweepConfig, SweepKind,
};
use metaglasso::io;
use metaglasso::synth::TaskFamilySpec;

/// Pooling wins on matched data: with a per-task budget too small for
/// single-task recovery, the pooled estimator still recovers the union.
/// Both methods see identical families and samples per seed.
#[test]
fn pooled_method_dominates_per_task_baseline_on_matched_seeds() {
    let spec = TaskFamilySpec {
        dim: 5,
        tasks: 4,
        samples_per_task: 5000,
        novel_samples: 0,
        degree: 2,
        keep_prob: 1.0,
        min_eig: 4.0,
        seed: 0,
    };
    let rule = LambdaRule::Practical(2.0);
    let mut meta_hits = 0;
    let mut baseline_hits = 0;
    for seed in 0..20u64 {
        let meta = run_trial(&spec, rule, 1e-6, 7_000 + seed);
        let base = baseline_single_task(&spec, rule, 1e-6, 7_000 + seed);
        assert_eq!(meta.seed, base.seed);
        meta_hits += meta.union_recovered as usize;
        baseline_hits += base.union_recovered as usize;
    }
    assert!(
        baseline_hits <= meta_hits,
        "baseline {baseline_hits}/20 exceeded pooled {meta_hits}/20"
    );
    assert!(
        meta_hits >= 18,
        "pooled method recovered only {meta_hits}/20"
    );
    // The single-task budget sits below the per-task threshold here, so the
    // gap is strict.
    assert!(
        baseline_hits < meta_hits,
        "expected a strict gap, got {baseline_hits} vs {meta_hits}"
    );
}

#[test]
fn novel_sweep_through_file_writers_round_trips() {
    let cfg = SweepConfig {
        family: TaskFamilySpec {
            dim: 5,
            tasks: 4,
            samples_per_task: 2000,
            novel_samples: 0,
            degree: 1,
            keep_prob: 1.0,
            min_eig: 4.0,
            seed: 0,
        },
        sweep_kind: SweepKind::Novel,
        grid: vec![20, 40],
        trials: 3,
        lambda_rule: LambdaRule::Practical(2.0),
        ..SweepConfig::default()
    };
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert_eq!(row.trials, 3);
        assert!(row.step1_successes.is_some());
        assert_eq!(row.success_rate, row.successes as f64 / row.trials as f64);
    }
    assert_eq!(report.trial_results.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    io::write_sweep_outputs(dir.path(), &report).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    // manifest.json wraps the config; reading it as a bare config must fail
    // loudly rather than fall back to defaults.
    assert!(io::read_sweep_config(&dir.path().join("manifest.json")).is_err());
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report_json["rows"].as_array().unwrap().len(), 2);
}
