//! CSV emitters. UTF-8, comma-separated, one header row, `.` decimal point,
//! missing evaluations as empty fields. Comment lines start with `#`; the
//! timestamp lives only there so two runs with the same config and seed
//! produce byte-identical bodies.

use crate::config::ExperimentConfig;
use sgdg2_core::optim::RunRecord;
use std::time::{SystemTime, UNIX_EPOCH};

pub const TRAIN_HEADER: &str =
    "iteration,grad_evals,epoch,minibatch_loss,train_loss,test_accuracy,h,h_opt,branch";
pub const HOPT_TRACE_HEADER: &str = "iteration,p,h_opt,branch";
pub const COMPARE_HEADER: &str =
    "optimizer,h0,iteration,grad_evals,epoch,minibatch_loss,train_loss,test_accuracy,h,h_opt,branch";
pub const SUMMARY_HEADER: &str =
    "optimizer,h0,status,diverged_at,final_train_loss,final_train_accuracy,final_test_accuracy";

/// Shortest round-trip decimal representation (Rust's `Display` for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn unix_time_comment() -> String {
    let t = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# unix_time={t}\n")
}

fn row_fields(row: &sgdg2_core::optim::RunRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.iteration,
        row.grad_evals,
        row.epoch,
        fmt_f64(row.minibatch_loss),
        fmt_opt(row.train_loss),
        fmt_opt(row.test_accuracy),
        fmt_f64(row.h),
        fmt_opt(row.h_opt),
        row.branch.map(|b| b.as_str()).unwrap_or_default(),
    )
}

/// Full training-run CSV: config echo in comments, fixed column schema,
/// optional footer comments (e.g. final parameters of small problems).
pub fn train_csv(
    cfg: &ExperimentConfig,
    record: &RunRecord,
    footer: &[(String, String)],
) -> String {
    let mut out = String::new();
    out.push_str("# sgdg2 training run\n");
    out.push_str(&format!("# config: {}\n", cfg.echo()));
    out.push_str(&unix_time_comment());
    out.push_str(TRAIN_HEADER);
    out.push('\n');
    for row in &record.rows {
        out.push_str(&row_fields(row));
        out.push('\n');
    }
    for (key, value) in footer {
        out.push_str(&format!("# {key}={value}\n"));
    }
    out
}

/// Rate-controller audit trail: only the adaptive columns.
pub fn hopt_trace_csv(cfg: &ExperimentConfig, record: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str("# sgdg2 h_opt trace\n");
    out.push_str(&format!("# config: {}\n", cfg.echo()));
    out.push_str(&unix_time_comment());
    out.push_str(HOPT_TRACE_HEADER);
    out.push('\n');
    for row in &record.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.iteration,
            fmt_opt(row.p),
            fmt_opt(row.h_opt),
            row.branch.map(|b| b.as_str()).unwrap_or_default(),
        ));
    }
    out
}

/// One comparison cell: a labelled run, possibly aborted by divergence.
pub struct CompareCell {
    pub optimizer: sgdg2_core::optim::OptimizerKind,
    pub h0: f64,
    pub record: RunRecord,
    pub diverged_at: Option<u64>,
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
}

/// All cells concatenated with `(optimizer, h0)` prefix columns.
pub fn compare_combined_csv(cfg: &ExperimentConfig, cells: &[CompareCell]) -> String {
    let mut out = String::new();
    out.push_str("# sgdg2 comparison run\n");
    out.push_str(&format!("# base config: {}\n", cfg.echo()));
    out.push_str(&unix_time_comment());
    out.push_str(COMPARE_HEADER);
    out.push('\n');
    for cell in cells {
        let prefix = format!("{},{}", cell.optimizer.as_str(), fmt_f64(cell.h0));
        for row in &cell.record.rows {
            out.push_str(&prefix);
            out.push(',');
            out.push_str(&row_fields(row));
            out.push('\n');
        }
    }
    out
}

/// Per-cell outcome summary, divergence iteration included.
pub fn compare_summary_csv(cfg: &ExperimentConfig, cells: &[CompareCell]) -> String {
    let mut out = String::new();
    out.push_str("# sgdg2 comparison summary\n");
    out.push_str(&format!("# base config: {}\n", cfg.echo()));
    out.push_str(&unix_time_comment());
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for cell in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.optimizer.as_str(),
            fmt_f64(cell.h0),
            if cell.diverged_at.is_some() {
                "diverged"
            } else {
                "completed"
            },
            cell.diverged_at.map(|i| i.to_string()).unwrap_or_default(),
            fmt_opt(cell.final_train_loss),
            fmt_opt(cell.final_train_accuracy),
            fmt_opt(cell.final_test_accuracy),
        ));
    }
    out
}

/// Body of a CSV: everything except `#` comment lines.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Read a `# key=value` footer comment back out of a CSV.
pub fn read_footer_value(text: &str, key: &str) -> Option<String> {
    let prefix = format!("# {key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix).map(str::to_string))
}
