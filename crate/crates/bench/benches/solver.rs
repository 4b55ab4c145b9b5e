use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use metaglasso::harness::{run_trial, LambdaRule};
use metaglasso::matops::sym_eigen;
use metaglasso::model::empirical_covariance;
use metaglasso::solver::{glasso, SolverConfig};
use metaglasso::synth::{gen_er_common, gen_family, make_pd, sample_mvn, TaskFamilySpec};

fn family_spec(n_dim: usize) -> TaskFamilySpec {
    TaskFamilySpec {
        dim: n_dim,
        tasks: 10,
        samples_per_task: 46,
        novel_samples: 0,
        degree: 3,
        keep_prob: 0.9,
        min_eig: 0.5,
        seed: 7,
    }
}

fn bench_eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eigen");
    for n in [10usize, 20, 50] {
        let (raw, _) = gen_er_common(n, 3, 11).unwrap();
        let pd = make_pd(&raw, 0.5).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| sym_eigen(black_box(pd.matrix())))
        });
    }
    group.finish();
}

fn bench_glasso(c: &mut Criterion) {
    let mut group = c.benchmark_group("glasso");
    group.sample_size(20);
    for n in [10usize, 20] {
        let spec = family_spec(n);
        let fam = gen_family(&spec).unwrap();
        let samples = sample_mvn(&fam.common, 500, 3);
        let sigma = empirical_covariance(&samples).unwrap();
        let cfg = SolverConfig::new(0.1, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| glasso(black_box(&sigma), black_box(&cfg)).unwrap())
        });
    }
    group.finish();
}

fn bench_trial(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_trial");
    group.sample_size(10);
    let spec = family_spec(10);
    group.bench_function("default_sweep_point", |b| {
        b.iter(|| {
            run_trial(
                black_box(&spec),
                LambdaRule::Practical(0.5),
                1e-6,
                black_box(42),
            )
        })
    });
    group.finish();
}

criterion_group!(benches, bench_eigen, bench_glasso, bench_trial);
criterion_main!(benches);
