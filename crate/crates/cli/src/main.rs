//! `hamcredit` command-line harness.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, config, data schema),
//! 2 failure while running.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hamcredit::data::{synthesize_credit_data, DriftGenConfig};
use hamcredit::experiment::{
    export_report, parse_config, run_benchmark, run_grid, run_single, score_external, write_outputs, BenchmarkOutcome,
    DataConfig, ExperimentConfig, ReportFormat, RunContext, RunKind, RunReport, REPORT_FILE, SUMMARY_FILE,
};
use hamcredit::integrators::{
    convergence_study, energy_drift, integrate, unit_oscillator_exact, PhaseState, SeparableHamiltonian, StepMethod,
};
use hamcredit::metrics::MetricsReport;
use hamcredit::optim::OptimizerKind;
use hamcredit::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "hamcredit", version, about = "Hamiltonian-normalized optimizer and out-of-time credit-scoring harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic drifting credit dataset as CSV.
    Generate(CommonArgs),
    /// Single fit on the training partition; scores validation and OOT.
    Train(CommonArgs),
    /// Grid search over the configured axes with time-ordered CV.
    Grid(CommonArgs),
    /// Full protocol: CV (or grid), final fit, validation and OOT scoring.
    Benchmark(CommonArgs),
    /// Score an external model's `id,score` file against `id,label`.
    ScoreExternal(ExternalArgs),
    /// Run one of the reference integrators on a test system.
    Integrate(IntegrateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config; defaults to the built-in synthetic setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for data generation, SMOTE and training.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Performance horizon in months for synthetic data.
    #[arg(long, value_parser = ["12", "36", "60"])]
    horizon: Option<String>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    /// Run jobs on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Symplectic,
    Sgd,
}

#[derive(Args)]
struct ExternalArgs {
    /// CSV with columns `id,score`.
    #[arg(long)]
    predictions: PathBuf,
    /// CSV with columns `id,label` (or `id,default_flag`).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Oscillator,
    Pendulum,
}

#[derive(Args)]
struct IntegrateArgs {
    #[arg(long, value_enum, default_value = "oscillator")]
    system: SystemArg,
    /// explicit_euler, symplectic_euler, symplectic_euler_literal, leapfrog or forest_ruth.
    #[arg(long, default_value = "leapfrog")]
    method: String,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    q0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    p0: f64,
    /// Also fit convergence orders of every method on the oscillator.
    #[arg(long)]
    orders: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::with_data(DataConfig {
            csv: None,
            synthetic: Some(DriftGenConfig::default()),
        }),
    };
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(h) = &args.horizon {
        let months: u32 = h.parse().expect("restricted by clap");
        match &mut cfg.data.synthetic {
            Some(gen) => gen.horizon_months = months,
            None => {
                return Err(Error::Validation(vec![
                    "--horizon applies to synthetic data only; the config reads a CSV".into(),
                ]))
            }
        }
    }
    if let Some(kind) = args.optimizer {
        cfg.optimizer.kind = match kind {
            OptimizerArg::Symplectic => OptimizerKind::Symplectic,
            OptimizerArg::Sgd => OptimizerKind::SgdMomentum,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn context(args: &CommonArgs) -> RunContext<'static> {
    RunContext::with_exec(if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    })
}

fn print_metrics(label: &str, m: &MetricsReport) {
    let spread = m.std.map(|s| format!(" ± {:.4}", s.auc)).unwrap_or_default();
    println!(
        "{label:<11} auc {:.4}{spread}  accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  (n={})",
        m.auc, m.accuracy, m.precision, m.recall, m.f1, m.n_rows
    );
}

fn print_report(report: &RunReport, out: &Path) {
    for (label, m) in report.summary_rows() {
        if !label.starts_with("fold_") {
            print_metrics(&label, m);
        }
    }
    if let Some(cell) = &report.selected {
        println!(
            "selected    eta {} beta {} lambda {} hidden {:?}",
            cell.eta, cell.beta, cell.lambda, cell.hidden_dims
        );
    }
    println!("wrote {}", out.display());
}

fn write_report_only(report: &RunReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Runtime(format!("cannot create {}: {e}", out.display())))?;
    export_report(report, &out.join(REPORT_FILE), ReportFormat::Json)?;
    export_report(report, &out.join(SUMMARY_FILE), ReportFormat::CsvSummary)
}

fn finish(outcome: &BenchmarkOutcome, out: &Path) -> Result<()> {
    let report = write_outputs(outcome, out)?;
    print_report(&report, out);
    Ok(())
}

fn cmd_generate(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let gen = cfg.data.synthetic.as_ref().ok_or_else(|| {
        Error::Validation(vec!["generate needs a `[data.synthetic]` section in the config".into()])
    })?;
    let ds = synthesize_credit_data(gen)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let path = args.out.join("data.csv");
    ds.write_csv(&path)?;
    println!(
        "{} rows, {} features, default rate {:.4}, periods {:?} -> {}",
        ds.len(),
        ds.n_features(),
        ds.default_rate(),
        ds.distinct_periods(),
        path.display()
    );
    Ok(())
}

fn cmd_integrate(args: &IntegrateArgs) -> Result<()> {
    let method: StepMethod = args.method.parse()?;
    let sys = match args.system {
        SystemArg::Oscillator => SeparableHamiltonian::unit_oscillator(),
        SystemArg::Pendulum => SeparableHamiltonian::pendulum(1.0),
    };
    let s0 = PhaseState::new(vec![args.q0], vec![args.p0])?;
    let traj = integrate(&sys, &s0, args.dt, args.steps, method)?;
    let drift = energy_drift(&traj)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Runtime(format!("cannot create {}: {e}", args.out.display())))?;
    traj.write_csv(&args.out.join("trajectory.csv"))?;
    let mut report = serde_json::json!({
        "system": sys.name(),
        "method": method.as_str(),
        "dt": args.dt,
        "steps": args.steps,
        "initial_energy": traj.energies[0],
        "final_energy": traj.energies[traj.energies.len() - 1],
        "max_abs_deviation": drift.max_abs_deviation,
        "drift_rate": drift.drift_rate,
    });
    println!(
        "{} {}: H0 {:.6}, max |H-H0| {:.3e}, drift rate {:.3e}",
        sys.name(),
        method,
        traj.energies[0],
        drift.max_abs_deviation,
        drift.drift_rate
    );
    if args.orders {
        let osc = SeparableHamiltonian::unit_oscillator();
        let start = PhaseState::new(vec![1.0], vec![0.0])?;
        let mut orders = serde_json::Map::new();
        for m in StepMethod::ALL {
            let study = convergence_study(
                &osc,
                &start,
                unit_oscillator_exact(1.0, 0.0),
                m,
                2.0 * std::f64::consts::PI,
                32,
                4,
                Execution::Parallel,
            )?;
            println!("order {:<25} {:.3}", m.as_str(), study.fitted_order);
            orders.insert(m.as_str().into(), study.fitted_order.into());
        }
        report["convergence_orders"] = orders.into();
    }
    let path = args.out.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            finish(&run_single(&cfg, context(&args))?, &args.out)
        }
        Command::Benchmark(args) => {
            let cfg = load_config(&args)?;
            finish(&run_benchmark(&cfg, context(&args))?, &args.out)
        }
        Command::Grid(args) => {
            let cfg = load_config(&args)?;
            let report = run_grid(&cfg, context(&args))?;
            write_report_only(&report, &args.out)?;
            print_report(&report, &args.out);
            Ok(())
        }
        Command::ScoreExternal(args) => {
            if !(0.0..=1.0).contains(&args.threshold) {
                return Err(Error::Validation(vec![format!(
                    "--threshold must be in [0, 1], got {}",
                    args.threshold
                )]));
            }
            let metrics = score_external(&args.predictions, &args.labels, args.threshold)?;
            let mut report = RunReport::new(RunKind::External);
            report.external = Some(metrics);
            write_report_only(&report, &args.out)?;
            print_report(&report, &args.out);
            Ok(())
        }
        Command::Integrate(args) => cmd_integrate(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
