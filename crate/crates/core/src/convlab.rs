//! Empirical verification of the schemes' order claims.
//!
//! Two instruments: exact one-step moment matching of the stochastic schemes
//! against their analytic expansions (enumerating the sample index instead of
//! Monte-Carlo sampling, so residuals carry no statistical noise), and global
//! ODE error scans for the deterministic Euler and Heun integrators against
//! the exact gradient flow of a quadratic.

use crate::error::{CoreError, CoreResult};
use crate::linalg::{norm2, Matrix};
use crate::optim::{heun_step, sgd_step};
use crate::oracle::{MiniBatch, ParamVector, QuadraticProblem, StochasticObjective};

/// Largest sample count the exact enumeration accepts.
pub const ENUMERATION_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StochasticScheme {
    Sgd,
    StochasticHeun,
}

impl StochasticScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            StochasticScheme::Sgd => "sgd",
            StochasticScheme::StochasticHeun => "sh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeScheme {
    Euler,
    Heun,
}

impl OdeScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            OdeScheme::Euler => "euler",
            OdeScheme::Heun => "heun",
        }
    }
}

/// First and second moments of a one-step displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub first: Vec<f64>,
    pub second: Matrix,
}

/// Exact one-step moments of the chosen scheme, by enumeration of the
/// uniformly distributed sample index: `E1 = (1/N) sum_g D(g)` and
/// `E2 = (1/N) sum_g D(g) D(g)^T`, with `D(g)` the displacement produced by
/// the actual optimizer step using sample `g`.
pub fn exact_one_step_moments(
    prob: &QuadraticProblem,
    x: &ParamVector,
    h: f64,
    scheme: StochasticScheme,
) -> CoreResult<MomentPair> {
    let n = prob.sample_count();
    if n > ENUMERATION_LIMIT {
        return Err(CoreError::EnumerationLimit {
            n,
            max: ENUMERATION_LIMIT,
        });
    }
    let d = prob.dimension();
    let mut first = vec![0.0; d];
    let mut second = Matrix::zeros(d, d);
    let inv = 1.0 / n as f64;
    for gamma in 1..=n {
        let batch = MiniBatch::single(gamma);
        let x_next = match scheme {
            StochasticScheme::Sgd => {
                let g = prob.sample_gradient(x, &batch)?;
                sgd_step(x, h, &g)?
            }
            StochasticScheme::StochasticHeun => heun_step(prob, x, h, &batch)?.1,
        };
        let disp: Vec<f64> = x_next
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        for (f, v) in first.iter_mut().zip(&disp) {
            *f += inv * v;
        }
        second.add_outer(&disp, &disp, inv);
    }
    Ok(MomentPair { first, second })
}

/// Analytic moment expansions, truncated after the `h^2` terms, with exact
/// derivatives of the quadratic objective.
///
/// For the limiting-SDE expansion (used against SGD):
/// `E1 = -h G + (h^2/2) A G` and `E2 = h^2 (G G^T + V)`, with `G` the full
/// gradient, `A` the mean curvature matrix and `V` the gradient noise
/// covariance. For the stochastic Heun scheme the first moment flips the
/// sign of the `h^2` term and the second moment is the mean outer product of
/// the per-sample gradients, `E2 = h^2 (1/N) sum_l grad f_l grad f_l^T`.
pub fn analytic_moment_expansion(
    prob: &QuadraticProblem,
    x: &ParamVector,
    h: f64,
    scheme: StochasticScheme,
) -> CoreResult<MomentPair> {
    let d = prob.dimension();
    let n = prob.sample_count();
    let grad = prob.full_gradient(x)?;
    let curv_grad = prob.mean_matrix().matvec(grad.as_slice());
    let half_h2 = 0.5 * h * h;
    let first: Vec<f64> = match scheme {
        StochasticScheme::Sgd => grad
            .as_slice()
            .iter()
            .zip(&curv_grad)
            .map(|(g, ag)| -h * g + half_h2 * ag)
            .collect(),
        StochasticScheme::StochasticHeun => grad
            .as_slice()
            .iter()
            .zip(&curv_grad)
            .map(|(g, ag)| -h * g - half_h2 * ag)
            .collect(),
    };
    let second = match scheme {
        StochasticScheme::Sgd => {
            let mut m = prob.noise_covariance(x)?;
            m.add_outer(grad.as_slice(), grad.as_slice(), 1.0);
            m.scale(h * h);
            m
        }
        StochasticScheme::StochasticHeun => {
            let mut m = Matrix::zeros(d, d);
            let mut tmp = vec![0.0; d];
            for i in 1..=n {
                prob.per_sample_gradient_into(i, x.as_slice(), &mut tmp);
                m.add_outer(&tmp, &tmp, 1.0 / n as f64);
            }
            m.scale(h * h);
            m
        }
    };
    Ok(MomentPair { first, second })
}

/// Log-log least-squares fit of an error-versus-step-size series.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    /// `(h, error)` pairs, step sizes strictly decreasing.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub correlation: f64,
}

/// Validate a step-size grid: at least four sizes, strictly decreasing,
/// spanning at least two octaves.
fn validate_grid(h_list: &[f64]) -> CoreResult<()> {
    if h_list.len() < 4 {
        return Err(CoreError::StepGrid(format!(
            "need at least 4 step sizes, got {}",
            h_list.len()
        )));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CoreError::StepGrid(
            "step sizes must be strictly decreasing".into(),
        ));
    }
    if h_list.iter().any(|&h| !(h > 0.0)) {
        return Err(CoreError::StepGrid("step sizes must be positive".into()));
    }
    let span = h_list[0] / h_list[h_list.len() - 1];
    if span < 4.0 {
        return Err(CoreError::StepGrid(format!(
            "step sizes must span >= 2 octaves, got ratio {span}"
        )));
    }
    Ok(())
}

/// Fit `log error ~ slope * log h + c` by least squares.
pub fn fit_order(points: &[(f64, f64)]) -> CoreResult<OrderFit> {
    let hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    validate_grid(&hs)?;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.max(1e-300).ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let correlation = if syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        1.0
    };
    if !slope.is_finite() {
        return Err(CoreError::StepGrid("degenerate fit".into()));
    }
    Ok(OrderFit {
        points: points.to_vec(),
        slope,
        correlation,
    })
}

/// Slope of a residual scan, or the degenerate zero-residual outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum SlopeOutcome {
    Fit(OrderFit),
    /// Residuals vanish to rounding at every step size; the scheme matches
    /// the expansion identically and no order can (or need) be fitted.
    ExactMatch {
        max_residual: f64,
    },
}

impl SlopeOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            SlopeOutcome::Fit(f) => Some(f.slope),
            SlopeOutcome::ExactMatch { .. } => None,
        }
    }
}

/// Moments of one scheme at one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSample {
    pub h: f64,
    pub empirical: MomentPair,
    pub analytic: MomentPair,
    pub first_residual: f64,
    pub second_residual: f64,
}

/// Exact one-step moments versus the analytic expansions, per step size.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub scheme: StochasticScheme,
    pub samples: Vec<MomentSample>,
}

impl MomentReport {
    pub fn step_sizes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.h).collect()
    }
}

/// Residual scan with fitted slopes per moment order.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentScan {
    pub report: MomentReport,
    pub first_moment: SlopeOutcome,
    pub second_moment: SlopeOutcome,
}

/// Scan `h_list`, measuring the distance between the exact enumeration
/// moments and the analytic expansion, and fit the decay order per moment.
pub fn moment_residual_scan(
    prob: &QuadraticProblem,
    x: &ParamVector,
    scheme: StochasticScheme,
    h_list: &[f64],
) -> CoreResult<MomentScan> {
    validate_grid(h_list)?;
    let mut samples = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let empirical = exact_one_step_moments(prob, x, h, scheme)?;
        let analytic = analytic_moment_expansion(prob, x, h, scheme)?;
        let first_residual = {
            let diff: Vec<f64> = empirical
                .first
                .iter()
                .zip(&analytic.first)
                .map(|(a, b)| a - b)
                .collect();
            norm2(&diff)
        };
        let second_residual = {
            let mut diff = empirical.second.clone();
            diff.add_scaled(&analytic.second, -1.0);
            diff.frobenius_norm()
        };
        samples.push(MomentSample {
            h,
            empirical,
            analytic,
            first_residual,
            second_residual,
        });
    }

    let outcome = |residual_of: &dyn Fn(&MomentSample) -> f64,
                   scale_of: &dyn Fn(&MomentSample) -> f64|
     -> CoreResult<SlopeOutcome> {
        let exact = samples
            .iter()
            .all(|s| residual_of(s) <= 1e-14 * (1.0 + scale_of(s)));
        if exact {
            let max = samples.iter().map(residual_of).fold(0.0, f64::max);
            Ok(SlopeOutcome::ExactMatch { max_residual: max })
        } else {
            let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.h, residual_of(s))).collect();
            Ok(SlopeOutcome::Fit(fit_order(&points)?))
        }
    };

    let first_moment = outcome(&|s| s.first_residual, &|s| norm2(&s.analytic.first))?;
    let second_moment = outcome(&|s| s.second_residual, &|s| {
        s.analytic.second.frobenius_norm()
    })?;

    Ok(MomentScan {
        report: MomentReport { scheme, samples },
        first_moment,
        second_moment,
    })
}

/// One step size of a global-error scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdePoint {
    pub h: f64,
    pub error: f64,
    /// False when `h * lambda_max >= 2`, outside the schemes' stability
    /// interval; such points are excluded from the fit.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeErrorScan {
    pub scheme: OdeScheme,
    pub points: Vec<OdePoint>,
    pub fit: OrderFit,
}

/// Exact flow of `x' = -A (x - x_opt)` at time `t`.
pub fn exact_flow(prob: &QuadraticProblem, x0: &ParamVector, t: f64) -> CoreResult<ParamVector> {
    let x_opt = prob.minimizer()?;
    let e = prob.mean_matrix().sym_exp(-t)?;
    let diff: Vec<f64> = x0
        .as_slice()
        .iter()
        .zip(x_opt.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let moved = e.matvec(&diff);
    Ok(ParamVector::new(
        moved
            .iter()
            .zip(x_opt.as_slice())
            .map(|(m, o)| m + o)
            .collect(),
    ))
}

/// Global error of the full-batch Euler or Heun scheme at time `t_final`
/// against the exact flow, per step size, with a fitted order over the
/// stable points.
pub fn ode_global_error(
    prob: &QuadraticProblem,
    scheme: OdeScheme,
    x0: &ParamVector,
    t_final: f64,
    h_list: &[f64],
) -> CoreResult<OdeErrorScan> {
    validate_grid(h_list)?;
    if !(t_final > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "final time must be positive, got {t_final}"
        )));
    }
    let lambda_max = prob.mean_matrix().sym_lambda_max()?;
    let reference = exact_flow(prob, x0, t_final)?;
    let full = MiniBatch::full(prob.sample_count());

    let mut points = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let steps = ((t_final / h).round() as usize).max(1);
        let h_eff = t_final / steps as f64;
        let mut x = x0.clone();
        for _ in 0..steps {
            x = match scheme {
                OdeScheme::Euler => {
                    let g = prob.sample_gradient(&x, &full)?;
                    sgd_step(&x, h_eff, &g)?
                }
                OdeScheme::Heun => heun_step(prob, &x, h_eff, &full)?.1,
            };
        }
        let diff: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(reference.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        points.push(OdePoint {
            h: h_eff,
            error: norm2(&diff),
            stable: h_eff * lambda_max < 2.0,
        });
    }

    let stable_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.stable)
        .map(|p| (p.h, p.error))
        .collect();
    let fit = fit_order(&stable_points)?;

    Ok(OdeErrorScan {
        scheme,
        points,
        fit,
    })
}
