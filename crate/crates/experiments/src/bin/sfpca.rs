use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sfpca_core::model::{check_assumptions, AssumptionReport};
use sfpca_core::sampling::{orthonormality_defect_cm, NullspaceWidth};
use sfpca_core::theory::{minimax_lower_bounds, predicted_rates, RatePrediction};
use sfpca_experiments::output::{write_figure1_csv, write_json, write_rates_csv};
use sfpca_experiments::{run_figure1_demo, run_invariant_suite, run_rate_experiment, ExperimentConfig, ExperimentError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "sfpca", version, about = "Sampled functional PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo rate grid.
    Rates {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Four-component demonstration at several fixed β.
    Figure1 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print operator diagnostics, assumption checks and predicted rates for each cell.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the invariant suite.
    Selftest,
}

#[derive(Serialize)]
struct CellDiagnostics {
    n: usize,
    m: usize,
    dm: Option<f64>,
    cm: f64,
    nm: NullspaceWidth,
    assumptions: AssumptionReport,
    all_assumptions_hold: bool,
    predicted: RatePrediction,
    lower_bound: RatePrediction,
}

fn fail(code: u8, err: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn code_for(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) | ExperimentError::Model(_) | ExperimentError::Sampling(_) => EXIT_CONFIG,
        ExperimentError::Io(_) | ExperimentError::Output(_) => 1,
        _ => EXIT_NUMERICAL,
    }
}

fn rates(config: PathBuf, out: PathBuf, csv: Option<PathBuf>, threads: Option<usize>) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(EXIT_CONFIG, e);
        }
    }
    let result = match run_rate_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(code_for(&e), e),
    };
    if let Err(e) = write_json(&result, &out) {
        return fail(1, e);
    }
    if let Some(path) = csv {
        if let Err(e) = write_rates_csv(&result, &path) {
            return fail(1, e);
        }
    }
    for c in &result.cells {
        let mean = c.mean_dist2.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
        println!("n={:<6} m={:<6} mean_dist2={mean} failures={}/{}", c.n, c.m, c.failures, c.trials);
    }
    if let Some(fit) = &result.fit {
        println!("slope={:.4} r2={:.4}", fit.slope, fit.r2);
    }
    if result.any_flagged() {
        return fail(EXIT_NUMERICAL, "one or more cells exceeded the failure threshold");
    }
    ExitCode::SUCCESS
}

fn figure1(seed: u64, out: PathBuf, csv: Option<PathBuf>) -> ExitCode {
    let result = match run_figure1_demo(seed) {
        Ok(r) => r,
        Err(e) => return fail(code_for(&e), e),
    };
    if let Err(e) = write_json(&result, &out) {
        return fail(1, e);
    }
    if let Some(path) = csv {
        if let Err(e) = write_figure1_csv(&result, &path) {
            return fail(1, e);
        }
    }
    for b in &result.blocks {
        println!("beta={:<8} subspace_dist2={:.4e} mean_h_norm={:.4}", b.beta, b.subspace_dist2, b.mean_hilbert_norm);
    }
    ExitCode::SUCCESS
}

fn diagnose(config: PathBuf) -> ExitCode {
    let cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let kernel = cfg.operator.kernel.build();
    let model = match cfg.model.build(&kernel) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let alpha = kernel.decay_alpha();
    let mut seen = Vec::new();
    let mut rows = Vec::new();
    for cell in cfg.cells() {
        if seen.contains(&(cell.n, cell.m())) {
            continue;
        }
        seen.push((cell.n, cell.m()));
        let op = match cell.operator.build() {
            Ok(op) => op,
            Err(e) => return fail(EXIT_CONFIG, e),
        };
        let assumptions = check_assumptions(&model, &op, cell.n, cfg.constants.kappa);
        let kind = cell.operator.variant;
        rows.push(CellDiagnostics {
            n: cell.n,
            m: cell.m(),
            dm: op.defect_dm().ok(),
            cm: orthonormality_defect_cm(&model.zstar(&op)),
            nm: op.nullspace_width_nm(),
            all_assumptions_hold: assumptions.all_hold(),
            assumptions,
            predicted: predicted_rates(kind, alpha, model.r(), model.rho, model.sigma0, cell.m(), cell.n, &cfg.constants),
            lower_bound: minimax_lower_bounds(kind, alpha, model.sigma0, cell.m(), cell.n, &cfg.constants),
        });
    }
    match serde_json::to_string_pretty(&rows) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(1, e),
    }
}

fn selftest() -> ExitCode {
    let checks = run_invariant_suite();
    let mut ok = true;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<28} value={:.3e} tol={:.1e}  {}", c.name, c.value, c.tolerance, c.detail);
        ok &= c.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        fail(EXIT_NUMERICAL, "invariant suite failed")
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Rates { config, out, csv, threads } => rates(config, out, csv, threads),
        Command::Figure1 { seed, out, csv } => figure1(seed, out, csv),
        Command::Diagnose { config } => diagnose(config),
        Command::Selftest => selftest(),
    }
}
