use std::collections::HashSet;
use std::path::Path;
use std::sync::Mutex;

use hamcredit::data::{synthesize_credit_data, temporal_split, time_based_folds, Dataset, DriftGenConfig};
use hamcredit::experiment::{
    grid_search, parse_config, run_benchmark, run_single, run_training, DataConfig, ExperimentConfig,
    PipelineObserver, RunContext, Stage,
};
use hamcredit::loss::LossConfig;
use hamcredit::optim::OptimizerKind;
use hamcredit::{Execution, RngStream};

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn small(seed: u64) -> ExperimentConfig {
    let gen = DriftGenConfig {
        n_rows: 2000,
        n_features: 5,
        ..DriftGenConfig::default()
    };
    let mut cfg = ExperimentConfig::with_data(DataConfig {
        csv: None,
        synthetic: Some(gen),
    });
    cfg.model.hidden_dims = vec![8];
    cfg.training.max_epochs = 6;
    cfg.training.batch_size = 32;
    cfg.training.patience = 2;
    cfg.cv.k = 3;
    cfg.set_seed(seed);
    cfg
}

#[test]
fn shipped_default_config_has_reported_hyperparameters() {
    let cfg = parse_config(&repo_file("configs/default.toml")).unwrap();
    assert_eq!(cfg.loss, LossConfig { lambda: 0.01, exclude_biases: false });
    assert_eq!(cfg.optimizer.eta, 0.01);
    assert_eq!(cfg.optimizer.kind, OptimizerKind::Symplectic);
    assert_eq!(cfg.model.hidden_dims, [128, 64]);
    assert_eq!(cfg.model.dropout_rate, 0.2);
    assert_eq!(cfg.model.activation, hamcredit::mlp::Activation::LeakyRelu { slope: 0.01 });
    let grid = parse_config(&repo_file("configs/grid.toml")).unwrap();
    assert!(!grid.grid.is_empty());
}

#[test]
fn config_snapshot_round_trips_through_report() {
    let cfg = small(1);
    let out = run_single(&cfg, RunContext::default()).unwrap();
    let json = serde_json::to_string(&out.report).unwrap();
    let back: hamcredit::experiment::RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.config.unwrap(), cfg);
}

#[test]
fn parallel_matches_sequential() {
    let cfg = small(2);
    let par = run_benchmark(&cfg, RunContext::with_exec(Execution::Parallel)).unwrap();
    let seq = run_benchmark(&cfg, RunContext::with_exec(Execution::Sequential)).unwrap();
    assert_eq!(serde_json::to_vec(&par.report).unwrap(), serde_json::to_vec(&seq.report).unwrap());
    assert_eq!(par.params, seq.params);
    assert_eq!(par.energy_trace, seq.energy_trace);
}

#[test]
fn different_seeds_differ() {
    let a = run_single(&small(3), RunContext::default()).unwrap();
    let b = run_single(&small(4), RunContext::default()).unwrap();
    assert_ne!(a.params, b.params);
}

#[derive(Default)]
struct Recorder(Mutex<Vec<(Stage, Vec<u64>)>>);

impl PipelineObserver for Recorder {
    fn observe(&self, stage: Stage, rows: &Dataset) {
        self.0.lock().unwrap().push((stage, rows.row_ids.clone()));
    }
}

#[test]
fn oot_rows_never_reach_fitting_stages() {
    let mut cfg = small(5);
    cfg.grid.eta = vec![0.01, 0.02];
    let data = synthesize_credit_data(cfg.data.synthetic.as_ref().unwrap()).unwrap();
    let split = temporal_split(&data, cfg.split.val_cut, cfg.split.oot_cut).unwrap();
    let oot: HashSet<u64> = split.oot.iter().map(|&i| i as u64).collect();
    let val: HashSet<u64> = split.validation.iter().map(|&i| i as u64).collect();
    let rec = Recorder::default();
    run_benchmark(&cfg, RunContext::default().observed(&rec)).unwrap();
    let seen = rec.0.into_inner().unwrap();
    let stages: HashSet<Stage> = seen.iter().map(|(s, _)| *s).collect();
    assert_eq!(stages.len(), 4, "every stage observed: {stages:?}");
    for (stage, ids) in &seen {
        assert!(ids.iter().all(|id| !oot.contains(id)), "OOT row reached {stage:?}");
        if *stage != Stage::EarlyStopping {
            assert!(ids.iter().all(|id| !val.contains(id)), "validation row reached {stage:?}");
        }
    }
}

#[test]
fn optimizers_share_initialisation_and_data_order() {
    let mut cfg = small(6);
    cfg.optimizer.eta = 1e-300;
    cfg.training.max_epochs = 1;
    let data = synthesize_credit_data(cfg.data.synthetic.as_ref().unwrap()).unwrap();
    let split = temporal_split(&data, cfg.split.val_cut, cfg.split.oot_cut).unwrap();
    let (train, val) = (data.subset(&split.train), data.subset(&split.validation));
    let rng = RngStream::new(9);
    let a = run_training(&cfg, &train, &val, &rng, RunContext::default()).unwrap();
    cfg.optimizer.kind = OptimizerKind::SgdMomentum;
    let b = run_training(&cfg, &train, &val, &rng, RunContext::default()).unwrap();
    // with a vanishing step both runs stay at the shared initial weights
    let (pa, pb) = (a.params.params().entries(), b.params.params().entries());
    assert_eq!(pa.len(), pb.len());
    for (x, y) in pa.iter().zip(pb) {
        assert_eq!(x.name, y.name);
        for (u, w) in x.tensor.data().iter().zip(y.tensor.data()) {
            assert!((u - w).abs() <= 1e-250, "{}: {u} vs {w}", x.name);
        }
    }
}

#[test]
fn grid_selects_planted_winner() {
    let mut cfg = small(7);
    cfg.training.max_epochs = 8;
    cfg.grid.eta = vec![1e-9, 0.05];
    cfg.grid.lambda = vec![100.0, 0.0];
    let data = synthesize_credit_data(cfg.data.synthetic.as_ref().unwrap()).unwrap();
    let split = temporal_split(&data, cfg.split.val_cut, cfg.split.oot_cut).unwrap();
    let train = data.subset(&split.train);
    let folds = time_based_folds(&train, cfg.cv.k).unwrap();
    let result = grid_search(&cfg, &train, &folds, RunContext::default()).unwrap();
    assert_eq!(result.rows.len(), 4);
    let best = &result.best_row().cell;
    assert_eq!((best.eta, best.lambda), (0.05, 0.0), "{:#?}", result.rows.iter().map(|r| r.mean_auc).collect::<Vec<_>>());

    let mut single = small(7);
    single.grid.beta = vec![0.8];
    let one = grid_search(&single, &train, &folds, RunContext::default()).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!(one.best_row().cell.beta, 0.8);
}

#[test]
fn no_drift_control_keeps_validation_and_oot_close() {
    let mut cfg = small(8);
    cfg.data.synthetic.as_mut().unwrap().drift_magnitude = 0.0;
    cfg.data.synthetic.as_mut().unwrap().n_rows = 6000;
    cfg.training.max_epochs = 15;
    let out = run_single(&cfg, RunContext::default()).unwrap();
    let gap = (out.report.validation.unwrap().auc - out.report.oot.unwrap().auc).abs();
    assert!(gap <= 0.03, "gap {gap}");
}
