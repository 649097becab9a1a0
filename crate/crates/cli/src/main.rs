use clap::{Args, Parser, Subcommand};
use sgdg2_cli::commands::{
    cmd_compare, cmd_hopt_trace, cmd_order_check, cmd_train, CompareSpec, OrderCheckKind,
    OrderCheckParams,
};
use sgdg2_cli::config::{parse_dims, parse_float_list, Dataset, ExperimentConfig};
use sgdg2_cli::CliError;
use sgdg2_core::optim::OptimizerKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sgdg2",
    about = "Adaptive-step SGD (SGD-G2) experiment harness: training runs, h0 sweeps and order-of-convergence checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write the run record as CSV (optionally SVG curves)
    Train(RunArgs),
    /// Run an (optimizer, h0) grid over one dataset and overlay the curves
    Compare(CompareArgs),
    /// Verify convergence orders (deterministic schemes or one-step moments)
    OrderCheck(OrderCheckArgs),
    /// Run SGD-G2 and dump the rate-controller trace (iteration, p, h_opt, branch)
    HoptTrace(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist | fmnist | blobs | quadratic
    #[arg(long)]
    dataset: Option<Dataset>,
    /// Directory holding the IDX files (fallback: $SGDG2_DATA_DIR, then ./data)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// sgd | sgd-g2
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Initial learning rate
    #[arg(long)]
    h0: Option<f64>,
    /// Rate-blend hyper-parameter in (0, 1)
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate train loss / test accuracy every N iterations (0 = per epoch)
    #[arg(long)]
    eval_every: Option<u64>,
    /// Output directory for CSV/SVG files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit SVG learning curves
    #[arg(long)]
    svg: bool,
    /// Hidden layer widths, e.g. "256,256,256" (empty string: none)
    #[arg(long)]
    hidden: Option<String>,
    /// Curvature of the 1-D quadratic dataset
    #[arg(long)]
    quad_a: Option<f64>,
    /// Offset of the 1-D quadratic dataset
    #[arg(long)]
    quad_b: Option<f64>,
    /// Starting point for the quadratic dataset
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    blob_classes: Option<usize>,
    #[arg(long)]
    blob_per_class: Option<usize>,
    #[arg(long)]
    blob_dim: Option<usize>,
    #[arg(long)]
    blob_separation: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated initial learning rates, e.g. "1e-6,1e-4,1e-2"
    #[arg(long, default_value = "1e-6,1e-4,1e-2")]
    h0_list: String,
    /// Comma-separated optimizers, e.g. "sgd-g2,sgd"
    #[arg(long, default_value = "sgd-g2")]
    optimizers: String,
}

#[derive(Args)]
struct OrderCheckArgs {
    /// ode | moments
    kind: OrderCheckKind,
    /// ode: euler | heun | both; moments: sgd | sh | both
    #[arg(long, default_value = "both")]
    scheme: String,
    /// Problem dimension
    #[arg(long)]
    dim: Option<usize>,
    /// Sample count of the moment-check ensemble
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Final time of the global-error scan
    #[arg(long)]
    t_final: Option<f64>,
    /// Comma-separated decreasing step sizes (>= 4 spanning >= 2 octaves)
    #[arg(long)]
    h_list: Option<String>,
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(v) = args.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = &args.data_dir {
        cfg.data_dir = Some(v.clone());
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = v;
    }
    if let Some(v) = args.h0 {
        cfg.h0 = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    if args.svg {
        cfg.svg = true;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = Some(parse_dims(v).map_err(CliError::Usage)?);
    }
    if let Some(v) = args.quad_a {
        cfg.quad_a = v;
    }
    if let Some(v) = args.quad_b {
        cfg.quad_b = v;
    }
    if let Some(v) = args.x0 {
        cfg.x0 = v;
    }
    if let Some(v) = args.blob_classes {
        cfg.blob_classes = v;
    }
    if let Some(v) = args.blob_per_class {
        cfg.blob_per_class = v;
    }
    if let Some(v) = args.blob_dim {
        cfg.blob_dim = v;
    }
    if let Some(v) = args.blob_separation {
        cfg.blob_separation = v;
    }
    Ok(cfg)
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn run() -> Result<bool, CliError> {
    match Cli::parse().command {
        Command::Train(args) => {
            let cfg = resolve_config(&args)?;
            let report = cmd_train(&cfg)?;
            println!("wrote {}", report.csv_path.display());
            for p in &report.svg_paths {
                println!("wrote {}", p.display());
            }
            if let Some(row) = report.record.rows.last() {
                println!(
                    "iterations={} grad_evals={} final_h={}",
                    row.iteration, row.grad_evals, row.h
                );
            }
            println!(
                "final: train_loss={} train_accuracy={} test_accuracy={}",
                fmt_metric(report.final_train_loss),
                fmt_metric(report.final_train_accuracy),
                fmt_metric(report.final_test_accuracy),
            );
            if let Some(it) = report.diverged_at {
                eprintln!("run diverged at iteration {it}; partial record kept");
                return Ok(false);
            }
            Ok(true)
        }
        Command::Compare(args) => {
            let cfg = resolve_config(&args.run)?;
            let spec = CompareSpec {
                optimizers: args
                    .optimizers
                    .split(',')
                    .map(|s| s.trim().parse::<OptimizerKind>())
                    .collect::<Result<_, _>>()
                    .map_err(CliError::Usage)?,
                h0_list: parse_float_list(&args.h0_list).map_err(CliError::Usage)?,
            };
            let report = cmd_compare(&cfg, &spec)?;
            println!("wrote {}", report.combined_path.display());
            println!("wrote {}", report.summary_path.display());
            for p in &report.svg_paths {
                println!("wrote {}", p.display());
            }
            for cell in &report.cells {
                println!(
                    "{} h0={}: {} train_accuracy={} test_accuracy={}",
                    cell.optimizer.as_str(),
                    cell.h0,
                    cell.diverged_at
                        .map(|i| format!("diverged at iteration {i}"))
                        .unwrap_or_else(|| "completed".into()),
                    fmt_metric(cell.final_train_accuracy),
                    fmt_metric(cell.final_test_accuracy),
                );
            }
            Ok(!report.any_diverged)
        }
        Command::OrderCheck(args) => {
            let mut params = OrderCheckParams::defaults(args.kind);
            params.scheme = args.scheme;
            if let Some(v) = args.dim {
                params.dim = v;
            }
            if let Some(v) = args.samples {
                params.samples = v;
            }
            if let Some(v) = args.seed {
                params.seed = v;
            }
            if let Some(v) = args.t_final {
                params.t_final = v;
            }
            if let Some(v) = &args.h_list {
                params.h_list = parse_float_list(v).map_err(CliError::Usage)?;
            }
            let report = cmd_order_check(&params)?;
            print!("{}", report.table);
            Ok(report.pass)
        }
        Command::HoptTrace(args) => {
            let cfg = resolve_config(&args)?;
            let report = cmd_hopt_trace(&cfg)?;
            println!("wrote {}", report.csv_path.display());
            if let Some(it) = report.diverged_at {
                eprintln!("run diverged at iteration {it}; partial trace kept");
                return Ok(false);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
