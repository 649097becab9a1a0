//! SGD, the stochastic Heun integrator, the optimal-learning-rate estimate,
//! and the adaptive SGD-G2 loop.
//!
//! One SGD-G2 iteration evaluates the mini-batch gradient `g` at the current
//! point and again at the Euler-predicted point `x - h g` (same batch for
//! both). From the pair it estimates the largest stable step size
//! `h_opt = 2 h <g - g_tilde, g> / ||g - g_tilde||^2`, blends the current
//! rate toward it, and then advances with the plain SGD update using the new
//! rate and the old gradient.

use crate::data::EpochSchedule;
use crate::error::{CoreError, CoreResult};
use crate::oracle::{MiniBatch, ParamVector, StochasticObjective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative guard for the critical-point test: the rate controller leaves
/// `h` untouched when `||g - g_tilde||^2 <= tol^2 (1 + ||g||^2)`, preventing
/// a division blow-up when both gradient evaluations coincide.
pub const CRITICAL_POINT_TOLERANCE: f64 = 1e-12;

/// Which rule produced the next learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `p > 0` and `h_opt >= h`: gradual blend upward.
    Increase,
    /// `p > 0` and `h_opt < h`: drastic cut to `(1 - beta) h_opt`.
    Decrease,
    /// `p <= 0`: the local quadratic model is untrustworthy; keep `h`.
    NegativeP,
    /// `g` and `g_tilde` coincide within tolerance; keep `h`.
    CriticalPoint,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Increase => "INCREASE",
            Branch::Decrease => "DECREASE",
            Branch::NegativeP => "NEGATIVE_P",
            Branch::CriticalPoint => "CRITICAL_POINT",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Branch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "INCREASE" => Ok(Branch::Increase),
            "DECREASE" => Ok(Branch::Decrease),
            "NEGATIVE_P" => Ok(Branch::NegativeP),
            "CRITICAL_POINT" => Ok(Branch::CriticalPoint),
            other => Err(format!("unknown branch {other:?}")),
        }
    }
}

/// Mutable state of an adaptive run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    /// Current learning rate `h_n`.
    pub h: f64,
    /// Blend hyper-parameter, in (0, 1).
    pub beta: f64,
    /// Completed iterations.
    pub iteration: u64,
    /// Mini-batch gradient evaluations so far: 1 per SGD step, 2 per SGD-G2 step.
    pub grad_evals: u64,
}

impl OptimizerState {
    pub fn new(h0: f64, beta: f64) -> CoreResult<Self> {
        if !(h0 > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "initial learning rate must be positive, got {h0}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "beta must lie in (0, 1), got {beta}"
            )));
        }
        Ok(Self {
            h: h0,
            beta,
            iteration: 0,
            grad_evals: 0,
        })
    }
}

/// Audit trail of one rate-controller decision.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Mini-batch gradient at the current point.
    pub g: ParamVector,
    /// Same-batch gradient at the Euler-predicted point.
    pub g_tilde: ParamVector,
    /// `<g - g_tilde, g>`.
    pub p: f64,
    pub h_opt: f64,
    pub h_next: f64,
    pub branch: Branch,
}

/// Plain SGD update `x - h g`.
pub fn sgd_step(x: &ParamVector, h: f64, g: &ParamVector) -> CoreResult<ParamVector> {
    if x.dim() != g.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: x.dim(),
            got: g.dim(),
        });
    }
    Ok(x.minus_scaled(h, g))
}

/// One step of the stochastic Heun scheme: an Euler predictor followed by a
/// trapezoidal corrector, both gradients evaluated on the same mini-batch.
/// Returns `(x_predictor, x_next)`.
pub fn heun_step<O: StochasticObjective + ?Sized>(
    obj: &O,
    x: &ParamVector,
    h: f64,
    batch: &MiniBatch,
) -> CoreResult<(ParamVector, ParamVector)> {
    let g = obj.sample_gradient(x, batch)?;
    let predictor = x.minus_scaled(h, &g);
    if !predictor.is_all_finite() {
        return Err(CoreError::NumericOverflow("heun predictor".into()));
    }
    let g_tilde = obj.sample_gradient(&predictor, batch)?;
    let x_next = ParamVector::new(
        x.as_slice()
            .iter()
            .zip(g.as_slice().iter().zip(g_tilde.as_slice()))
            .map(|(xi, (gi, ti))| xi - 0.5 * h * (gi + ti))
            .collect(),
    );
    Ok((predictor, x_next))
}

/// Estimate the largest learning rate that keeps the gradient norm from
/// growing, from two same-batch gradient evaluations a step `h` apart.
pub fn compute_h_opt(
    g: &ParamVector,
    g_tilde: &ParamVector,
    h: f64,
    tolerance: f64,
) -> CoreResult<(f64, Branch)> {
    if g.dim() != g_tilde.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: g.dim(),
            got: g_tilde.dim(),
        });
    }
    let mut diff_sq = 0.0;
    let mut p = 0.0;
    let mut g_sq = 0.0;
    for (gi, ti) in g.as_slice().iter().zip(g_tilde.as_slice()) {
        let d = gi - ti;
        diff_sq += d * d;
        p += d * gi;
        g_sq += gi * gi;
    }
    if diff_sq <= tolerance * tolerance * (1.0 + g_sq) {
        return Ok((h, Branch::CriticalPoint));
    }
    if p > 0.0 {
        let h_opt = 2.0 * h * p / diff_sq;
        let branch = if h_opt >= h {
            Branch::Increase
        } else {
            Branch::Decrease
        };
        Ok((h_opt, branch))
    } else {
        Ok((h, Branch::NegativeP))
    }
}

/// Two-branch rate update: blend upward gradually, cut downward drastically.
pub fn update_learning_rate(h: f64, h_opt: f64, beta: f64) -> f64 {
    if h_opt >= h {
        beta * h + (1.0 - beta) * h_opt
    } else {
        (1.0 - beta) * h_opt
    }
}

/// Outcome of one SGD-G2 iteration.
#[derive(Debug, Clone)]
pub struct SgdG2Step {
    pub x_next: ParamVector,
    pub state: OptimizerState,
    pub report: StepReport,
    /// Mini-batch loss at the *starting* point (free by-product of `g`).
    pub minibatch_loss: f64,
}

/// One full SGD-G2 iteration: two gradient evaluations, rate adaptation, and
/// the SGD update `x - h_{n+1} g_n` (new rate, old gradient).
pub fn sgdg2_step<O: StochasticObjective + ?Sized>(
    state: &OptimizerState,
    obj: &O,
    x: &ParamVector,
    batch: &MiniBatch,
) -> CoreResult<SgdG2Step> {
    let (minibatch_loss, g) = obj.batch_loss_and_gradient(x, batch)?;
    let predictor = x.minus_scaled(state.h, &g);
    if !predictor.is_all_finite() {
        return Err(CoreError::NumericOverflow("sgd-g2 predictor".into()));
    }
    let g_tilde = obj.sample_gradient(&predictor, batch)?;
    let (h_opt, branch) = compute_h_opt(&g, &g_tilde, state.h, CRITICAL_POINT_TOLERANCE)?;
    let h_next = update_learning_rate(state.h, h_opt, state.beta);
    let x_next = x.minus_scaled(h_next, &g);
    let p = g
        .as_slice()
        .iter()
        .zip(g_tilde.as_slice())
        .map(|(gi, ti)| (gi - ti) * gi)
        .sum();
    Ok(SgdG2Step {
        x_next,
        state: OptimizerState {
            h: h_next,
            beta: state.beta,
            iteration: state.iteration + 1,
            grad_evals: state.grad_evals + 2,
        },
        report: StepReport {
            g,
            g_tilde,
            p,
            h_opt,
            h_next,
            branch,
        },
        minibatch_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    SgdG2,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdG2 => "sgd-g2",
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd-g2" | "sgdg2" => Ok(OptimizerKind::SgdG2),
            other => Err(format!(
                "unknown optimizer {other:?} (expected sgd or sgd-g2)"
            )),
        }
    }
}

/// Configuration of a single optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    pub h0: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluation cadence in iterations; 0 means once per epoch.
    pub eval_every: u64,
}

impl RunConfig {
    pub fn validate(&self, sample_count: usize) -> CoreResult<()> {
        if !(self.h0 > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "h0 must be positive, got {}",
                self.h0
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.batch_size == 0 || self.batch_size > sample_count {
            return Err(CoreError::InvalidConfig(format!(
                "batch_size must lie in [1..{}], got {}",
                sample_count, self.batch_size
            )));
        }
        Ok(())
    }
}

/// Periodic full evaluation attached to a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub iteration: u64,
    pub grad_evals: u64,
    pub epoch: u64,
    pub minibatch_loss: f64,
    pub train_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Learning rate at the start of the iteration (`h_n`).
    pub h: f64,
    pub h_opt: Option<f64>,
    pub p: Option<f64>,
    pub branch: Option<Branch>,
}

/// Time series of an optimizer run plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    fn new(config: RunConfig) -> Self {
        Self {
            config,
            rows: Vec::new(),
        }
    }
}

/// Completed run: the record and the final parameter vector.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub x_final: ParamVector,
}

/// Drive the selected optimizer over shuffled epoch partitions.
///
/// Batches are drawn without replacement within each epoch and reshuffled per
/// epoch from a ChaCha stream seeded by `config.seed`. One row is appended
/// per iteration; `evaluator`, when present, is invoked on the configured
/// cadence and its metrics attached to the triggering row. A non-finite
/// mini-batch loss aborts with [`CoreError::Diverged`], which carries the
/// rows recorded so far.
pub fn run_optimizer<O: StochasticObjective + ?Sized>(
    config: &RunConfig,
    obj: &O,
    x0: ParamVector,
    evaluator: Option<&dyn Fn(&ParamVector) -> Evaluation>,
    mut sink: Option<&mut dyn FnMut(&RunRow)>,
) -> CoreResult<RunOutcome> {
    let n = obj.sample_count();
    config.validate(n)?;
    if x0.dim() != obj.dimension() {
        return Err(CoreError::DimensionMismatch {
            expected: obj.dimension(),
            got: x0.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut schedule = EpochSchedule::new(n, config.batch_size)?;
    let total_iterations = config.epochs as u64 * schedule.batches_per_epoch() as u64;

    let mut record = RunRecord::new(config.clone());
    let mut x = x0;
    let mut state = OptimizerState::new(config.h0, config.beta)?;

    for _ in 0..total_iterations {
        let batch = schedule.next_batch(&mut rng);
        let epoch = schedule.epoch();
        let h_before = state.h;

        // Non-finite losses and gradients surface as NumericOverflow from
        // the oracle layer; fold them into a diverged-run abort that keeps
        // the rows recorded so far.
        let stepped = (|| -> CoreResult<_> {
            match config.optimizer {
                OptimizerKind::SgdG2 => {
                    let out = sgdg2_step(&state, obj, &x, &batch)?;
                    Ok((
                        out.x_next,
                        out.state,
                        out.minibatch_loss,
                        Some(out.report.h_opt),
                        Some(out.report.p),
                        Some(out.report.branch),
                    ))
                }
                OptimizerKind::Sgd => {
                    let (loss, g) = obj.batch_loss_and_gradient(&x, &batch)?;
                    let x_next = sgd_step(&x, state.h, &g)?;
                    let mut next = state.clone();
                    next.iteration += 1;
                    next.grad_evals += 1;
                    Ok((x_next, next, loss, None, None, None))
                }
            }
        })();
        let (x_next, state_next, minibatch_loss, h_opt, p, branch) = match stepped {
            Ok(v) => v,
            Err(CoreError::NumericOverflow(_)) => {
                return Err(CoreError::Diverged {
                    iteration: state.iteration + 1,
                    record: Box::new(record),
                });
            }
            Err(e) => return Err(e),
        };
        x = x_next;
        state = state_next;

        let mut row = RunRow {
            iteration: state.iteration,
            grad_evals: state.grad_evals,
            epoch,
            minibatch_loss,
            train_loss: None,
            test_accuracy: None,
            h: h_before,
            h_opt,
            p,
            branch,
        };

        let due = match config.eval_every {
            0 => schedule.at_epoch_end(),
            k => state.iteration % k == 0,
        };
        if due {
            if let Some(eval) = evaluator {
                let metrics = eval(&x);
                if !metrics.train_loss.is_finite() {
                    record.rows.push(row);
                    return Err(CoreError::Diverged {
                        iteration: state.iteration,
                        record: Box::new(record),
                    });
                }
                row.train_loss = Some(metrics.train_loss);
                row.test_accuracy = metrics.test_accuracy;
            }
        }

        if let Some(s) = sink.as_deref_mut() {
            s(&row);
        }
        record.rows.push(row);
    }

    Ok(RunOutcome { record, x_final: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::QuadraticProblem;

    fn unit_quadratic() -> QuadraticProblem {
        QuadraticProblem::scalar_samples(&[1.0], &[0.0]).unwrap()
    }

    #[test]
    fn sgd_step_matches_hand_values() {
        let x = ParamVector::new(vec![1.0, 1.0]);
        let g = ParamVector::new(vec![2.0, 0.0]);
        let next = sgd_step(&x, 0.5, &g).unwrap();
        assert_eq!(next.as_slice(), &[0.0, 1.0]);

        let zero = ParamVector::zeros(2);
        assert_eq!(sgd_step(&x, 0.5, &zero).unwrap(), x);
        assert_eq!(sgd_step(&x, 0.0, &g).unwrap(), x);

        let bad = ParamVector::zeros(3);
        assert!(matches!(
            sgd_step(&x, 0.5, &bad),
            Err(CoreError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn heun_step_matches_hand_values() {
        let p = unit_quadratic();
        let x = ParamVector::new(vec![1.0]);
        let (pred, next) = heun_step(&p, &x, 0.1, &MiniBatch::single(1)).unwrap();
        assert!((pred[0] - 0.9).abs() < 1e-15);
        assert!((next[0] - 0.905).abs() < 1e-15);
    }

    #[test]
    fn heun_reduces_to_sgd_on_constant_gradient() {
        // A_i = 0 makes every gradient the constant -b_i.
        let p = QuadraticProblem::scalar_samples(&[0.0, 0.0], &[2.0, 2.0]).unwrap();
        let x = ParamVector::new(vec![0.5]);
        let batch = MiniBatch::new(vec![1, 2]);
        let g = p.sample_gradient(&x, &batch).unwrap();
        let (_, heun) = heun_step(&p, &x, 0.25, &batch).unwrap();
        let sgd = sgd_step(&x, 0.25, &g).unwrap();
        assert!((heun[0] - sgd[0]).abs() < 1e-15);
    }

    #[test]
    fn heun_fixed_at_critical_point() {
        let p = QuadraticProblem::scalar_samples(&[2.0], &[4.0]).unwrap();
        let xopt = p.minimizer().unwrap();
        let (_, next) = heun_step(&p, &xopt, 0.3, &MiniBatch::single(1)).unwrap();
        assert!((next[0] - xopt[0]).abs() < 1e-14);
    }

    #[test]
    fn h_opt_recovers_curvature_on_scalar_quadratic() {
        // a = 1, x = 1, h = 0.1: g = 1, g_tilde = 0.9, h_opt = 2/a = 2.
        let g = ParamVector::new(vec![1.0]);
        let g_tilde = ParamVector::new(vec![0.9]);
        let (h_opt, branch) = compute_h_opt(&g, &g_tilde, 0.1, CRITICAL_POINT_TOLERANCE).unwrap();
        assert!((h_opt - 2.0).abs() < 1e-12);
        assert_eq!(branch, Branch::Increase);
    }

    #[test]
    fn h_opt_keeps_h_on_negative_p() {
        let g = ParamVector::new(vec![1.0]);
        let g_tilde = ParamVector::new(vec![2.0]);
        let (h_opt, branch) = compute_h_opt(&g, &g_tilde, 0.05, CRITICAL_POINT_TOLERANCE).unwrap();
        assert_eq!(h_opt, 0.05);
        assert_eq!(branch, Branch::NegativeP);
    }

    #[test]
    fn h_opt_flags_critical_point_on_equal_gradients() {
        let g = ParamVector::new(vec![0.3, -0.2]);
        let (h_opt, branch) = compute_h_opt(&g, &g, 0.7, CRITICAL_POINT_TOLERANCE).unwrap();
        assert_eq!(h_opt, 0.7);
        assert_eq!(branch, Branch::CriticalPoint);

        // Zero vectors also land on the critical-point branch.
        let z = ParamVector::zeros(2);
        let (_, branch) = compute_h_opt(&z, &z, 0.7, CRITICAL_POINT_TOLERANCE).unwrap();
        assert_eq!(branch, Branch::CriticalPoint);
    }

    #[test]
    fn rate_update_matches_hand_values() {
        assert!((update_learning_rate(0.001, 0.01, 0.9) - 0.0019).abs() < 1e-15);
        assert!((update_learning_rate(0.01, 0.001, 0.9) - 0.0001).abs() < 1e-15);
        let h = 0.37;
        assert_eq!(update_learning_rate(h, h, 0.9), h);
    }

    #[test]
    fn sgdg2_step_matches_hand_composition() {
        let p = unit_quadratic();
        let state = OptimizerState::new(0.1, 0.9).unwrap();
        let x = ParamVector::new(vec![1.0]);
        let out = sgdg2_step(&state, &p, &x, &MiniBatch::single(1)).unwrap();
        assert!((out.report.h_opt - 2.0).abs() < 1e-12);
        assert!((out.state.h - 0.29).abs() < 1e-12);
        assert!((out.x_next[0] - 0.71).abs() < 1e-12);
        assert_eq!(out.state.iteration, 1);
        assert_eq!(out.state.grad_evals, 2);
        assert!((out.minibatch_loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sgdg2_step_is_identity_at_critical_point() {
        let p = QuadraticProblem::scalar_samples(&[2.0], &[4.0]).unwrap();
        let state = OptimizerState::new(0.1, 0.9).unwrap();
        let xopt = p.minimizer().unwrap();
        let out = sgdg2_step(&state, &p, &xopt, &MiniBatch::single(1)).unwrap();
        assert_eq!(out.report.branch, Branch::CriticalPoint);
        assert_eq!(out.state.h, 0.1);
        assert!((out.x_next[0] - xopt[0]).abs() < 1e-14);
    }

    #[test]
    fn beta_near_one_freezes_the_rate() {
        let p = unit_quadratic();
        let state = OptimizerState::new(0.1, 0.999_999_999).unwrap();
        let x = ParamVector::new(vec![1.0]);
        let out = sgdg2_step(&state, &p, &x, &MiniBatch::single(1)).unwrap();
        // Increase branch with beta -> 1 leaves h essentially unchanged,
        // reducing SGD-G2 to fixed-step SGD.
        assert!((out.state.h - 0.1).abs() < 1e-8);
        let sgd = sgd_step(&x, out.state.h, &out.report.g).unwrap();
        assert!((out.x_next[0] - sgd[0]).abs() < 1e-8);
    }

    #[test]
    fn run_sgd_contracts_geometrically() {
        let p = unit_quadratic();
        let config = RunConfig {
            optimizer: OptimizerKind::Sgd,
            h0: 0.1,
            beta: 0.9,
            batch_size: 1,
            epochs: 10,
            seed: 1,
            eval_every: 0,
        };
        let out = run_optimizer(&config, &p, ParamVector::new(vec![1.0]), None, None).unwrap();
        assert_eq!(out.record.rows.len(), 10);
        assert!((out.x_final[0] - 0.9f64.powi(10)).abs() < 1e-12);
        assert!((out.x_final[0] - 0.3486784401).abs() < 1e-9);
    }

    #[test]
    fn run_sgd_at_marginal_stability_oscillates_with_constant_magnitude() {
        let p = unit_quadratic();
        let config = RunConfig {
            optimizer: OptimizerKind::Sgd,
            h0: 2.0,
            beta: 0.9,
            batch_size: 1,
            epochs: 25,
            seed: 1,
            eval_every: 0,
        };
        let out = run_optimizer(&config, &p, ParamVector::new(vec![1.0]), None, None).unwrap();
        assert!((out.x_final[0].abs() - 1.0).abs() < 1e-12);
        for row in &out.record.rows {
            assert!((row.minibatch_loss - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_cadence_in_iterations_marks_the_right_rows() {
        let p = QuadraticProblem::scalar_samples(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        let config = RunConfig {
            optimizer: OptimizerKind::SgdG2,
            h0: 0.01,
            beta: 0.9,
            batch_size: 1,
            epochs: 5, // 10 iterations at 2 batches per epoch
            seed: 4,
            eval_every: 3,
        };
        let eval = |x: &ParamVector| Evaluation {
            train_loss: p.full_loss(x).unwrap(),
            test_accuracy: None,
        };
        let out =
            run_optimizer(&config, &p, ParamVector::new(vec![1.0]), Some(&eval), None).unwrap();
        for row in &out.record.rows {
            assert_eq!(
                row.train_loss.is_some(),
                row.iteration % 3 == 0,
                "iteration {}",
                row.iteration
            );
        }
    }

    #[test]
    fn branch_labels_round_trip() {
        for b in [
            Branch::Increase,
            Branch::Decrease,
            Branch::NegativeP,
            Branch::CriticalPoint,
        ] {
            assert_eq!(b.to_string().parse::<Branch>().unwrap(), b);
        }
        assert!("SIDEWAYS".parse::<Branch>().is_err());
    }

    #[test]
    fn run_with_zero_epochs_is_empty() {
        let p = unit_quadratic();
        let config = RunConfig {
            optimizer: OptimizerKind::SgdG2,
            h0: 0.1,
            beta: 0.9,
            batch_size: 1,
            epochs: 0,
            seed: 1,
            eval_every: 0,
        };
        let x0 = ParamVector::new(vec![1.0]);
        let out = run_optimizer(&config, &p, x0.clone(), None, None).unwrap();
        assert!(out.record.rows.is_empty());
        assert_eq!(out.x_final, x0);
    }

    #[test]
    fn diverged_run_preserves_partial_record() {
        let p = unit_quadratic();
        let config = RunConfig {
            optimizer: OptimizerKind::Sgd,
            h0: 10.0,
            beta: 0.9,
            batch_size: 1,
            epochs: 400,
            seed: 1,
            eval_every: 0,
        };
        let err = run_optimizer(&config, &p, ParamVector::new(vec![1.0]), None, None).unwrap_err();
        match err {
            CoreError::Diverged { iteration, record } => {
                assert!(iteration > 1);
                assert_eq!(record.rows.len() as u64, iteration - 1);
                // losses recorded before the abort blow up monotonically
                let rows = &record.rows;
                assert!(rows.last().unwrap().minibatch_loss > rows[0].minibatch_loss);
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn sink_streams_every_row_in_order() {
        let p = unit_quadratic();
        let config = RunConfig {
            optimizer: OptimizerKind::SgdG2,
            h0: 0.1,
            beta: 0.9,
            batch_size: 1,
            epochs: 5,
            seed: 3,
            eval_every: 0,
        };
        let mut streamed = Vec::new();
        let mut sink = |row: &RunRow| streamed.push(row.iteration);
        let out = run_optimizer(
            &config,
            &p,
            ParamVector::new(vec![1.0]),
            None,
            Some(&mut sink),
        )
        .unwrap();
        assert_eq!(streamed, vec![1, 2, 3, 4, 5]);
        assert_eq!(out.record.rows.len(), 5);
    }

    #[test]
    fn grad_eval_accounting_is_exact() {
        let p = QuadraticProblem::scalar_samples(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        for (kind, factor) in [(OptimizerKind::Sgd, 1), (OptimizerKind::SgdG2, 2)] {
            let config = RunConfig {
                optimizer: kind,
                h0: 0.01,
                beta: 0.9,
                batch_size: 3,
                epochs: 4,
                seed: 9,
                eval_every: 0,
            };
            let out = run_optimizer(&config, &p, ParamVector::new(vec![1.0]), None, None).unwrap();
            for row in &out.record.rows {
                assert_eq!(row.grad_evals, factor * row.iteration);
            }
        }
    }
}
