//! The four harness commands: train, compare, order-check and hopt-trace.
//!
//! Each command is an ordinary function over a resolved configuration so the
//! integration tests drive them directly; `main` only parses flags, calls in
//! here and maps outcomes to exit codes.

use crate::config::{Dataset, ExperimentConfig};
use crate::csvout::{self, CompareCell};
use crate::svg::{line_chart, ChartOptions, Series};
use crate::CliError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgdg2_core::convlab::{
    moment_residual_scan, ode_global_error, MomentScan, OdeErrorScan, OdeScheme, SlopeOutcome,
    StochasticScheme,
};
use sgdg2_core::data::{load_idx_images, load_idx_labels, make_gaussian_blobs};
use sgdg2_core::linalg::standard_normal;
use sgdg2_core::models::{accuracy, LabeledDataset, MlpModel, MlpObjective};
use sgdg2_core::optim::{run_optimizer, Evaluation, OptimizerKind, RunConfig, RunRecord};
use sgdg2_core::oracle::{ParamVector, QuadraticProblem, StochasticObjective};
use sgdg2_core::CoreError;
use std::path::PathBuf;

/// MNIST-style file names expected inside the data directory.
pub const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

enum BuiltProblem {
    Quadratic {
        prob: QuadraticProblem,
        x0: ParamVector,
    },
    Mlp {
        obj: MlpObjective,
        test: LabeledDataset,
        x0: ParamVector,
    },
}

/// True when all four IDX files exist under the resolved data directory.
pub fn idx_files_present(cfg: &ExperimentConfig) -> bool {
    let dir = cfg.resolved_data_dir();
    IDX_FILES.iter().all(|f| dir.join(f).is_file())
}

fn build_problem(cfg: &ExperimentConfig) -> Result<BuiltProblem, CliError> {
    match cfg.dataset {
        Dataset::Quadratic => {
            let prob = QuadraticProblem::scalar_samples(&[cfg.quad_a], &[cfg.quad_b])?;
            Ok(BuiltProblem::Quadratic {
                prob,
                x0: ParamVector::new(vec![cfg.x0]),
            })
        }
        Dataset::Blobs => {
            let train = make_gaussian_blobs(
                cfg.blob_classes,
                cfg.blob_per_class,
                cfg.blob_dim,
                cfg.blob_separation,
                cfg.seed,
            )?;
            // held-out draw from the same mixture
            let test = make_gaussian_blobs(
                cfg.blob_classes,
                (cfg.blob_per_class / 4).max(1),
                cfg.blob_dim,
                cfg.blob_separation,
                cfg.seed.wrapping_add(0x5eed),
            )?;
            let mut dims = vec![cfg.blob_dim];
            dims.extend(cfg.hidden_dims());
            dims.push(cfg.blob_classes);
            let model = MlpModel::new(dims)?;
            let x0 = model.init_weights(cfg.seed);
            Ok(BuiltProblem::Mlp {
                obj: MlpObjective::new(model, train)?,
                test,
                x0,
            })
        }
        Dataset::Mnist | Dataset::Fmnist => {
            let dir = cfg.resolved_data_dir();
            let missing: Vec<String> = IDX_FILES
                .iter()
                .filter(|f| !dir.join(f).is_file())
                .map(|f| dir.join(f).display().to_string())
                .collect();
            if !missing.is_empty() {
                return Err(CliError::Usage(format!(
                    "dataset {} needs the IDX files below under {} (set --data-dir or ${}):\n  {}",
                    cfg.dataset.as_str(),
                    dir.display(),
                    crate::config::DATA_DIR_ENV,
                    missing.join("\n  ")
                )));
            }
            let train_images = load_idx_images(dir.join(IDX_FILES[0]))?;
            let train_labels = load_idx_labels(dir.join(IDX_FILES[1]), 10)?;
            let test_images = load_idx_images(dir.join(IDX_FILES[2]))?;
            let test_labels = load_idx_labels(dir.join(IDX_FILES[3]), 10)?;
            let input_dim = train_images.rows * train_images.cols;
            let train = LabeledDataset::new(train_images.pixels, input_dim, train_labels, 10)?;
            let test = LabeledDataset::new(test_images.pixels, input_dim, test_labels, 10)?;
            let mut dims = vec![input_dim];
            dims.extend(cfg.hidden_dims());
            dims.push(10);
            let model = MlpModel::new(dims)?;
            let x0 = model.init_weights(cfg.seed);
            Ok(BuiltProblem::Mlp {
                obj: MlpObjective::new(model, train)?,
                test,
                x0,
            })
        }
    }
}

fn run_config(cfg: &ExperimentConfig, optimizer: OptimizerKind, h0: f64, n: usize) -> RunConfig {
    RunConfig {
        optimizer,
        h0,
        beta: cfg.beta,
        batch_size: cfg.batch_size.min(n),
        epochs: cfg.epochs,
        seed: cfg.seed,
        eval_every: cfg.eval_every,
    }
}

struct RunResult {
    record: RunRecord,
    x_final: Option<ParamVector>,
    diverged_at: Option<u64>,
    final_train_loss: Option<f64>,
    final_train_accuracy: Option<f64>,
    final_test_accuracy: Option<f64>,
}

fn execute(
    cfg: &ExperimentConfig,
    problem: &BuiltProblem,
    optimizer: OptimizerKind,
    h0: f64,
) -> Result<RunResult, CliError> {
    let outcome = match problem {
        BuiltProblem::Quadratic { prob, x0 } => {
            let eval = |x: &ParamVector| Evaluation {
                train_loss: prob.full_loss(x).unwrap_or(f64::NAN),
                test_accuracy: None,
            };
            run_optimizer(
                &run_config(cfg, optimizer, h0, prob.sample_count()),
                prob,
                x0.clone(),
                Some(&eval),
                None,
            )
        }
        BuiltProblem::Mlp { obj, test, x0 } => {
            let eval = |x: &ParamVector| Evaluation {
                train_loss: obj.full_loss(x).unwrap_or(f64::NAN),
                test_accuracy: accuracy(obj.model(), x, test).ok(),
            };
            run_optimizer(
                &run_config(cfg, optimizer, h0, obj.sample_count()),
                obj,
                x0.clone(),
                Some(&eval),
                None,
            )
        }
    };

    let (record, x_final, diverged_at) = match outcome {
        Ok(out) => (out.record, Some(out.x_final), None),
        Err(CoreError::Diverged { iteration, record }) => (*record, None, Some(iteration)),
        Err(e) => return Err(e.into()),
    };

    let mut result = RunResult {
        record,
        diverged_at,
        final_train_loss: None,
        final_train_accuracy: None,
        final_test_accuracy: None,
        x_final,
    };
    if let Some(x) = &result.x_final {
        match problem {
            BuiltProblem::Quadratic { prob, .. } => {
                result.final_train_loss = prob.full_loss(x).ok();
            }
            BuiltProblem::Mlp { obj, test, .. } => {
                result.final_train_loss = obj.full_loss(x).ok();
                result.final_train_accuracy = obj.train_accuracy(x).ok();
                result.final_test_accuracy = accuracy(obj.model(), x, test).ok();
            }
        }
    }
    Ok(result)
}

#[derive(Debug)]
pub struct TrainReport {
    pub csv_path: PathBuf,
    pub svg_paths: Vec<PathBuf>,
    pub record: RunRecord,
    pub diverged_at: Option<u64>,
    pub final_params: Option<ParamVector>,
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
}

impl TrainReport {
    pub fn succeeded(&self) -> bool {
        self.diverged_at.is_none()
    }
}

/// Run one training experiment, write its RunRecord CSV (plus optional SVG
/// learning curves) and report the final metrics. A diverged run still
/// writes the partial CSV and reports the divergence iteration.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let problem = build_problem(cfg)?;
    let run = execute(cfg, &problem, cfg.optimizer, cfg.h0)?;

    // Small analytic problems carry their end state in footer comments.
    let mut footer = Vec::new();
    if let (Dataset::Quadratic, Some(x)) = (cfg.dataset, &run.x_final) {
        for (i, v) in x.as_slice().iter().enumerate() {
            footer.push((format!("final_param_{i}"), csvout::fmt_f64(*v)));
        }
    }
    if let Some(it) = run.diverged_at {
        footer.push(("diverged_at_iteration".into(), it.to_string()));
    }

    let csv_path = cfg.out.join(format!(
        "train-{}-{}.csv",
        cfg.dataset.as_str(),
        cfg.optimizer.as_str()
    ));
    std::fs::write(&csv_path, csvout::train_csv(cfg, &run.record, &footer))?;

    let mut svg_paths = Vec::new();
    if cfg.svg && !run.record.rows.is_empty() {
        let stem = format!("train-{}-{}", cfg.dataset.as_str(), cfg.optimizer.as_str());
        let rate = Series {
            label: format!("{} h", cfg.optimizer.as_str()),
            points: run
                .record
                .rows
                .iter()
                .map(|r| (r.grad_evals as f64, r.h))
                .collect(),
        };
        let rate_path = cfg.out.join(format!("{stem}-rate.svg"));
        std::fs::write(
            &rate_path,
            line_chart(
                &[rate],
                &ChartOptions {
                    title: "learning rate".into(),
                    x_label: "gradient evaluations".into(),
                    y_label: "h (log)".into(),
                    log_y: true,
                    ..Default::default()
                },
            ),
        )?;
        svg_paths.push(rate_path);

        let acc_points: Vec<(f64, f64)> = run
            .record
            .rows
            .iter()
            .filter_map(|r| r.test_accuracy.map(|a| (r.grad_evals as f64, a)))
            .collect();
        if !acc_points.is_empty() {
            let acc_path = cfg.out.join(format!("{stem}-accuracy.svg"));
            std::fs::write(
                &acc_path,
                line_chart(
                    &[Series {
                        label: format!("{} test acc", cfg.optimizer.as_str()),
                        points: acc_points,
                    }],
                    &ChartOptions {
                        title: "test accuracy".into(),
                        x_label: "gradient evaluations".into(),
                        y_label: "accuracy".into(),
                        ..Default::default()
                    },
                ),
            )?;
            svg_paths.push(acc_path);
        }
    }

    Ok(TrainReport {
        csv_path,
        svg_paths,
        record: run.record,
        diverged_at: run.diverged_at,
        final_params: run.x_final,
        final_train_loss: run.final_train_loss,
        final_train_accuracy: run.final_train_accuracy,
        final_test_accuracy: run.final_test_accuracy,
    })
}

#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub optimizers: Vec<OptimizerKind>,
    pub h0_list: Vec<f64>,
}

pub struct CompareReport {
    pub combined_path: PathBuf,
    pub summary_path: PathBuf,
    pub svg_paths: Vec<PathBuf>,
    pub cells: Vec<CompareCell>,
    pub any_diverged: bool,
}

/// Run the `(optimizer, h0)` grid over one shared dataset and emit a
/// combined CSV, a per-cell summary and overlay SVG curves. Diverged cells
/// are recorded with their divergence iteration; the grid keeps going.
pub fn cmd_compare(cfg: &ExperimentConfig, spec: &CompareSpec) -> Result<CompareReport, CliError> {
    cfg.validate()?;
    if spec.optimizers.is_empty() || spec.h0_list.is_empty() {
        return Err(CliError::Usage(
            "compare needs at least one optimizer and one h0".into(),
        ));
    }
    for &h0 in &spec.h0_list {
        if !(h0 > 0.0) {
            return Err(CliError::Usage(format!(
                "h0 values must be positive, got {h0}"
            )));
        }
    }
    std::fs::create_dir_all(&cfg.out)?;
    let problem = build_problem(cfg)?;

    let mut cells = Vec::new();
    for &optimizer in &spec.optimizers {
        for &h0 in &spec.h0_list {
            let run = execute(cfg, &problem, optimizer, h0)?;
            cells.push(CompareCell {
                optimizer,
                h0,
                record: run.record,
                diverged_at: run.diverged_at,
                final_train_loss: run.final_train_loss,
                final_train_accuracy: run.final_train_accuracy,
                final_test_accuracy: run.final_test_accuracy,
            });
        }
    }

    let combined_path = cfg.out.join("compare-combined.csv");
    std::fs::write(&combined_path, csvout::compare_combined_csv(cfg, &cells))?;
    let summary_path = cfg.out.join("compare-summary.csv");
    std::fs::write(&summary_path, csvout::compare_summary_csv(cfg, &cells))?;

    let mut svg_paths = Vec::new();
    if cfg.svg {
        let label = |c: &CompareCell| format!("{} h0={}", c.optimizer.as_str(), c.h0);
        let rate_series: Vec<Series> = cells
            .iter()
            .map(|c| Series {
                label: label(c),
                points: c
                    .record
                    .rows
                    .iter()
                    .map(|r| (r.grad_evals as f64, r.h))
                    .collect(),
            })
            .collect();
        let rate_path = cfg.out.join("compare-rate.svg");
        std::fs::write(
            &rate_path,
            line_chart(
                &rate_series,
                &ChartOptions {
                    title: "learning rate".into(),
                    x_label: "gradient evaluations".into(),
                    y_label: "h (log)".into(),
                    log_y: true,
                    ..Default::default()
                },
            ),
        )?;
        svg_paths.push(rate_path);

        let acc_series: Vec<Series> = cells
            .iter()
            .map(|c| Series {
                label: label(c),
                points: c
                    .record
                    .rows
                    .iter()
                    .filter_map(|r| r.test_accuracy.map(|a| (r.grad_evals as f64, a)))
                    .collect(),
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        if !acc_series.is_empty() {
            let acc_path = cfg.out.join("compare-accuracy.svg");
            std::fs::write(
                &acc_path,
                line_chart(
                    &acc_series,
                    &ChartOptions {
                        title: "test accuracy".into(),
                        x_label: "gradient evaluations".into(),
                        y_label: "accuracy".into(),
                        ..Default::default()
                    },
                ),
            )?;
            svg_paths.push(acc_path);
        }
    }

    let any_diverged = cells.iter().any(|c| c.diverged_at.is_some());
    Ok(CompareReport {
        combined_path,
        summary_path,
        svg_paths,
        cells,
        any_diverged,
    })
}

pub struct HoptTraceReport {
    pub csv_path: PathBuf,
    pub record: RunRecord,
    pub diverged_at: Option<u64>,
}

/// Run SGD-G2 and dump only the rate-controller columns
/// (iteration, p, h_opt, branch) for audit.
pub fn cmd_hopt_trace(cfg: &ExperimentConfig) -> Result<HoptTraceReport, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let problem = build_problem(cfg)?;
    let run = execute(cfg, &problem, OptimizerKind::SgdG2, cfg.h0)?;
    let csv_path = cfg.out.join("hopt-trace.csv");
    std::fs::write(&csv_path, csvout::hopt_trace_csv(cfg, &run.record))?;
    Ok(HoptTraceReport {
        csv_path,
        record: run.record,
        diverged_at: run.diverged_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderCheckKind {
    Ode,
    Moments,
}

impl std::str::FromStr for OrderCheckKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ode" => Ok(OrderCheckKind::Ode),
            "moments" => Ok(OrderCheckKind::Moments),
            other => Err(format!(
                "unknown order-check kind {other:?} (ode or moments)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrderCheckParams {
    pub kind: OrderCheckKind,
    /// "euler", "heun", "sgd", "sh" or "both".
    pub scheme: String,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub t_final: f64,
    pub h_list: Vec<f64>,
}

impl OrderCheckParams {
    pub fn defaults(kind: OrderCheckKind) -> Self {
        let h_list = match kind {
            OrderCheckKind::Ode => (3..=8).map(|k| 2f64.powi(-k)).collect(),
            OrderCheckKind::Moments => (4..=9).map(|k| 2f64.powi(-k)).collect(),
        };
        Self {
            kind,
            scheme: "both".into(),
            dim: match kind {
                OrderCheckKind::Ode => 5,
                OrderCheckKind::Moments => 2,
            },
            samples: 4,
            seed: 7,
            t_final: 1.0,
            h_list,
        }
    }
}

/// One checked slope with its (optional) hard bound.
#[derive(Debug)]
pub struct SlopeLine {
    pub label: String,
    pub slope: Option<f64>,
    pub bound: Option<(f64, f64)>,
    pub pass: bool,
}

#[derive(Debug)]
pub struct OrderCheckReport {
    pub table: String,
    pub lines: Vec<SlopeLine>,
    pub pass: bool,
}

fn ode_bounds(scheme: OdeScheme) -> (f64, f64) {
    match scheme {
        OdeScheme::Euler => (0.9, 1.1),
        OdeScheme::Heun => (1.9, 2.1),
    }
}

fn push_ode(table: &mut String, lines: &mut Vec<SlopeLine>, scan: &OdeErrorScan) {
    for p in &scan.points {
        table.push_str(&format!(
            "scheme={} h={} error={:e} stable={}\n",
            scan.scheme.as_str(),
            p.h,
            p.error,
            p.stable
        ));
    }
    let (lo, hi) = ode_bounds(scan.scheme);
    let pass = scan.fit.slope >= lo && scan.fit.slope <= hi;
    table.push_str(&format!(
        "scheme={} slope={:.4} correlation={:.6} bound=[{lo},{hi}] {}\n",
        scan.scheme.as_str(),
        scan.fit.slope,
        scan.fit.correlation,
        if pass { "pass" } else { "FAIL" }
    ));
    lines.push(SlopeLine {
        label: format!("ode {}", scan.scheme.as_str()),
        slope: Some(scan.fit.slope),
        bound: Some((lo, hi)),
        pass,
    });
}

fn push_moments(table: &mut String, lines: &mut Vec<SlopeLine>, scan: &MomentScan) {
    let name = scan.report.scheme.as_str();
    for s in &scan.report.samples {
        table.push_str(&format!(
            "scheme={name} h={} first_residual={:e} second_residual={:e}\n",
            s.h, s.first_residual, s.second_residual
        ));
    }
    let describe = |table: &mut String, which: &str, outcome: &SlopeOutcome| match outcome {
        SlopeOutcome::Fit(f) => {
            table.push_str(&format!(
                "scheme={name} moment={which} slope={:.4} correlation={:.6}\n",
                f.slope, f.correlation
            ));
        }
        SlopeOutcome::ExactMatch { max_residual } => {
            table.push_str(&format!(
                "scheme={name} moment={which} exact-match max_residual={max_residual:e}\n"
            ));
        }
    };
    describe(table, "first", &scan.first_moment);
    describe(table, "second", &scan.second_moment);

    match scan.report.scheme {
        StochasticScheme::Sgd => {
            // first moment misses the h^2 drift term of the limiting SDE
            let slope = scan.first_moment.slope();
            let pass = slope.is_some_and(|s| (1.9..=2.6).contains(&s));
            table.push_str(&format!(
                "scheme=sgd check first-moment slope in [1.9,2.6]: {}\n",
                if pass { "pass" } else { "FAIL" }
            ));
            lines.push(SlopeLine {
                label: "moments sgd first".into(),
                slope,
                bound: Some((1.9, 2.6)),
                pass,
            });
        }
        StochasticScheme::StochasticHeun => {
            let slope = scan.second_moment.slope();
            let pass = slope.is_some_and(|s| s >= 2.9);
            table.push_str(&format!(
                "scheme=sh check second-moment slope >= 2.9: {}\n",
                if pass { "pass" } else { "FAIL" }
            ));
            lines.push(SlopeLine {
                label: "moments sh second".into(),
                slope,
                bound: Some((2.9, f64::INFINITY)),
                pass,
            });
            // measured but not gated (see library docs on the SH first
            // moment expansion)
            lines.push(SlopeLine {
                label: "moments sh first (reported)".into(),
                slope: scan.first_moment.slope(),
                bound: None,
                pass: true,
            });
        }
    }
}

/// Verify the convergence-order claims and report fitted slopes. `pass` is
/// false when a hard slope bound fails; that maps to a nonzero exit status.
pub fn cmd_order_check(params: &OrderCheckParams) -> Result<OrderCheckReport, CliError> {
    let mut table = String::new();
    let mut lines = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    match params.kind {
        OrderCheckKind::Ode => {
            let schemes: Vec<OdeScheme> = match params.scheme.as_str() {
                "euler" => vec![OdeScheme::Euler],
                "heun" => vec![OdeScheme::Heun],
                "both" => vec![OdeScheme::Euler, OdeScheme::Heun],
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown ode scheme {other:?} (euler, heun or both)"
                    )))
                }
            };
            let prob = QuadraticProblem::random_spd_single(params.dim, 0.2, 1.0, &mut rng);
            let x0 = ParamVector::new((0..params.dim).map(|_| standard_normal(&mut rng)).collect());
            for scheme in schemes {
                let scan = ode_global_error(&prob, scheme, &x0, params.t_final, &params.h_list)?;
                push_ode(&mut table, &mut lines, &scan);
            }
        }
        OrderCheckKind::Moments => {
            let schemes: Vec<StochasticScheme> = match params.scheme.as_str() {
                "sgd" => vec![StochasticScheme::Sgd],
                "sh" => vec![StochasticScheme::StochasticHeun],
                "both" => vec![StochasticScheme::Sgd, StochasticScheme::StochasticHeun],
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown moments scheme {other:?} (sgd, sh or both)"
                    )))
                }
            };
            let prob = QuadraticProblem::random_ensemble(params.dim, params.samples, 1.0, &mut rng);
            // any generic point works; avoid accidental critical points
            let x = loop {
                let cand =
                    ParamVector::new((0..params.dim).map(|_| standard_normal(&mut rng)).collect());
                if prob.full_gradient(&cand)?.norm() > 0.1 {
                    break cand;
                }
            };
            for scheme in schemes {
                let scan = moment_residual_scan(&prob, &x, scheme, &params.h_list)?;
                push_moments(&mut table, &mut lines, &scan);
            }
        }
    }

    let pass = lines.iter().all(|l| l.pass);
    Ok(OrderCheckReport { table, lines, pass })
}
