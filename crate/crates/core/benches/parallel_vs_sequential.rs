use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hamcredit::data::{smote_with_rng, synthesize_credit_data, temporal_split, time_based_folds, DriftGenConfig, SmoteConfig};
use hamcredit::experiment::{grid_search, run_benchmark, DataConfig, ExperimentConfig, RunContext};
use hamcredit::integrators::{convergence_study, unit_oscillator_exact, PhaseState, SeparableHamiltonian, StepMethod};
use hamcredit::{Execution, RngStream};

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn bench_config() -> ExperimentConfig {
    let gen = DriftGenConfig {
        n_rows: 3000,
        n_features: 8,
        ..DriftGenConfig::default()
    };
    let mut cfg = ExperimentConfig::with_data(DataConfig {
        csv: None,
        synthetic: Some(gen),
    });
    cfg.model.hidden_dims = vec![16, 8];
    cfg.training.max_epochs = 4;
    cfg.training.batch_size = 64;
    cfg.cv.k = 4;
    cfg.set_seed(1);
    cfg
}

fn grid(c: &mut Criterion) {
    let mut cfg = bench_config();
    cfg.grid.eta = vec![0.005, 0.01];
    cfg.grid.lambda = vec![0.0, 0.01];
    let data = synthesize_credit_data(cfg.data.synthetic.as_ref().unwrap()).unwrap();
    let split = temporal_split(&data, cfg.split.val_cut, cfg.split.oot_cut).unwrap();
    let train = data.subset(&split.train);
    let folds = time_based_folds(&train, cfg.cv.k).unwrap();
    let mut group = c.benchmark_group("grid_search");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| grid_search(&cfg, &train, &folds, RunContext::with_exec(exec)).unwrap())
        });
    }
    group.finish();
}

fn benchmark_run(c: &mut Criterion) {
    let cfg = bench_config();
    let mut group = c.benchmark_group("cv_benchmark");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_benchmark(&cfg, RunContext::with_exec(exec)).unwrap())
        });
    }
    group.finish();
}

fn smote(c: &mut Criterion) {
    let gen = DriftGenConfig {
        n_rows: 8000,
        n_features: 10,
        ..DriftGenConfig::default()
    };
    let data = synthesize_credit_data(&gen).unwrap();
    let cfg = SmoteConfig::default();
    let mut group = c.benchmark_group("smote");
    group.sample_size(10);
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| smote_with_rng(&data, &cfg, &mut RngStream::new(3), exec).unwrap())
        });
    }
    group.finish();
}

fn convergence(c: &mut Criterion) {
    let sys = SeparableHamiltonian::unit_oscillator();
    let s0 = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
    let mut group = c.benchmark_group("convergence_study");
    for exec in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                convergence_study(
                    &sys,
                    &s0,
                    unit_oscillator_exact(1.0, 0.0),
                    StepMethod::ForestRuth,
                    std::f64::consts::TAU,
                    256,
                    6,
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, grid, benchmark_run, smote, convergence);
criterion_main!(benches);
