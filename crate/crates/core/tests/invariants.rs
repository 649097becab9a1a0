//! Cross-module properties of the rate controller and the SGD-G2 trajectory.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgdg2_core::linalg::standard_normal;
use sgdg2_core::optim::{
    compute_h_opt, heun_step, sgdg2_step, Branch, OptimizerState, CRITICAL_POINT_TOLERANCE,
};
use sgdg2_core::oracle::{MiniBatch, ParamVector, QuadraticProblem, StochasticObjective};

/// Full-batch h_opt on an SPD quadratic lies in [2/lambda_max, 2/lambda_min]
/// (Rayleigh-quotient bound).
#[test]
fn h_opt_is_bracketed_by_spectral_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..25 {
        let d = rng.gen_range(1..=6);
        let (lo, hi) = (rng.gen_range(0.1..0.5), rng.gen_range(1.0..4.0));
        let prob = QuadraticProblem::random_spd_single(d, lo, hi, &mut rng);
        let (eigs, _) = prob.mean_matrix().sym_eigen().unwrap();
        let lambda_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lambda_min = eigs.iter().copied().fold(f64::INFINITY, f64::min);

        let x = ParamVector::new((0..d).map(|_| standard_normal(&mut rng)).collect());
        let g = prob.full_gradient(&x).unwrap();
        if g.norm() < 1e-9 {
            continue;
        }
        let h = 0.01;
        let predictor = x.minus_scaled(h, &g);
        let g_tilde = prob.full_gradient(&predictor).unwrap();
        let (h_opt, branch) = compute_h_opt(&g, &g_tilde, h, CRITICAL_POINT_TOLERANCE).unwrap();
        assert_ne!(branch, Branch::NegativeP);
        assert!(
            h_opt >= 2.0 / lambda_max * (1.0 - 1e-9),
            "h_opt {h_opt} below 2/lambda_max {}",
            2.0 / lambda_max
        );
        assert!(
            h_opt <= 2.0 / lambda_min * (1.0 + 1e-9),
            "h_opt {h_opt} above 2/lambda_min {}",
            2.0 / lambda_min
        );
    }
}

/// Along a full-batch SGD-G2 trajectory started inside the stability region,
/// the gradient norm never grows.
#[test]
fn gradient_norm_is_monotone_along_sgdg2_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for case in 0..20 {
        let d = rng.gen_range(1..=6);
        let prob = QuadraticProblem::random_spd_single(d, 0.2, 2.0, &mut rng);
        let lambda_max = prob.mean_matrix().sym_lambda_max().unwrap();
        let h0 = if case % 2 == 0 {
            1e-6
        } else {
            rng.gen_range(0.1..1.9) / lambda_max
        };
        let mut state = OptimizerState::new(h0, 0.9).unwrap();
        let mut x = ParamVector::new((0..d).map(|_| standard_normal(&mut rng)).collect());
        let batch = MiniBatch::full(1);
        let initial = prob.full_gradient(&x).unwrap().norm();
        let mut prev_norm = initial;
        for _ in 0..150 {
            // below 12 orders of contraction the evaluated norm is pure
            // rounding noise; the trajectory has converged
            if prev_norm <= 1e-12 * initial {
                break;
            }
            let out = sgdg2_step(&state, &prob, &x, &batch).unwrap();
            x = out.x_next;
            state = out.state;
            let norm = prob.full_gradient(&x).unwrap().norm();
            assert!(
                norm <= prev_norm * (1.0 + 1e-9),
                "gradient norm grew: {prev_norm} -> {norm} (h = {})",
                state.h
            );
            prev_norm = norm;
        }
    }
}

/// On the 1-D full-batch quadratic the rate converges to 2/a geometrically
/// with ratio beta.
#[test]
fn learning_rate_converges_geometrically_to_curvature_limit() {
    // Curvatures >= 2 keep the first-step cancellation noise in h_opt
    // (order u / (h0 a^2) at h0 = 1e-6) well below the 1e-12 slack.
    for a in [2.0, 4.0, 10.0] {
        let prob = QuadraticProblem::scalar_samples(&[a], &[0.0]).unwrap();
        let target = 2.0 / a;
        let beta: f64 = 0.9;
        let h0 = 1e-6;
        let mut state = OptimizerState::new(h0, beta).unwrap();
        let mut x = ParamVector::new(vec![1.0]);
        let batch = MiniBatch::single(1);
        for n in 1..=300u32 {
            let out = sgdg2_step(&state, &prob, &x, &batch).unwrap();
            x = out.x_next;
            state = out.state;
            let bound = beta.powi(n as i32) * (h0 - target).abs() + 1e-12;
            assert!(
                (state.h - target).abs() <= bound,
                "a={a} n={n}: |h - 2/a| = {} > {bound}",
                (state.h - target).abs()
            );
        }
    }
}

/// With a single sample the stochastic Heun step coincides with the
/// classical deterministic Heun step, coded here independently.
#[test]
fn heun_step_matches_classical_heun_for_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for _ in 0..10 {
        let d = rng.gen_range(1..=5);
        let prob = QuadraticProblem::random_spd_single(d, 0.2, 1.5, &mut rng);
        let x = ParamVector::new((0..d).map(|_| standard_normal(&mut rng)).collect());
        let h = rng.gen_range(0.01..0.5);

        let (_, got) = heun_step(&prob, &x, h, &MiniBatch::single(1)).unwrap();

        // classical Heun on x' = -grad f, textbook form
        let f = |p: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; d];
            prob.per_sample_gradient_into(1, p, &mut g);
            g.iter().map(|v| -v).collect()
        };
        let k1 = f(x.as_slice());
        let mid: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(&k1)
            .map(|(xi, k)| xi + h * k)
            .collect();
        let k2 = f(&mid);
        let want: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(k1.iter().zip(&k2))
            .map(|(xi, (a, b))| xi + 0.5 * h * (a + b))
            .collect();

        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-15 * (1.0 + w.abs()));
        }
    }
}

proptest! {
    /// compute_h_opt answers with exactly one branch for every finite input,
    /// zero vectors included, and the result upholds the branch contract.
    #[test]
    fn branch_totality(
        g in proptest::collection::vec(-1e6f64..1e6, 1..5),
        gt in proptest::collection::vec(-1e6f64..1e6, 1..5),
        h in 1e-9f64..10.0,
    ) {
        let n = g.len().min(gt.len());
        let g = ParamVector::new(g[..n].to_vec());
        let gt = ParamVector::new(gt[..n].to_vec());
        let (h_opt, branch) = compute_h_opt(&g, &gt, h, CRITICAL_POINT_TOLERANCE).unwrap();
        prop_assert!(h_opt.is_finite());
        match branch {
            Branch::Increase => prop_assert!(h_opt >= h),
            Branch::Decrease => prop_assert!(h_opt < h && h_opt > 0.0),
            Branch::NegativeP | Branch::CriticalPoint => prop_assert_eq!(h_opt, h),
        }
    }

    /// Scaling both gradients by a power of two leaves h_opt bit-identical
    /// (the formula is homogeneous of degree zero and binary scaling is
    /// exact in floating point).
    #[test]
    fn h_opt_scale_covariance_exact_for_binary_scales(
        g in proptest::collection::vec(0.1f64..100.0, 1..5),
        gt_shift in proptest::collection::vec(-0.9f64..0.9, 1..5),
        h in 1e-6f64..1.0,
        exponent in -20i32..20,
    ) {
        let n = g.len().min(gt_shift.len());
        let g: Vec<f64> = g[..n].to_vec();
        let gt: Vec<f64> = g.iter().zip(&gt_shift[..n]).map(|(a, s)| a * (1.0 - s)).collect();
        let lambda = 2f64.powi(exponent);

        let base = compute_h_opt(
            &ParamVector::new(g.clone()),
            &ParamVector::new(gt.clone()),
            h,
            0.0,
        ).unwrap();
        let scaled = compute_h_opt(
            &ParamVector::new(g.iter().map(|v| v * lambda).collect()),
            &ParamVector::new(gt.iter().map(|v| v * lambda).collect()),
            h,
            0.0,
        ).unwrap();
        prop_assert_eq!(base.0, scaled.0);
        prop_assert_eq!(base.1, scaled.1);
    }

    /// Arbitrary non-zero scalings preserve h_opt up to rounding.
    #[test]
    fn h_opt_scale_covariance_approximate(
        g in proptest::collection::vec(0.1f64..100.0, 1..5),
        gt_shift in proptest::collection::vec(-0.9f64..0.9, 1..5),
        h in 1e-6f64..1.0,
        lambda in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        let n = g.len().min(gt_shift.len());
        let g: Vec<f64> = g[..n].to_vec();
        let gt: Vec<f64> = g.iter().zip(&gt_shift[..n]).map(|(a, s)| a * (1.0 - s)).collect();

        let base = compute_h_opt(
            &ParamVector::new(g.clone()),
            &ParamVector::new(gt.clone()),
            h,
            0.0,
        ).unwrap();
        let scaled = compute_h_opt(
            &ParamVector::new(g.iter().map(|v| v * lambda).collect()),
            &ParamVector::new(gt.iter().map(|v| v * lambda).collect()),
            h,
            0.0,
        ).unwrap();
        prop_assert!((base.0 - scaled.0).abs() <= 1e-10 * base.0.abs());
        prop_assert_eq!(base.1, scaled.1);
    }
}
