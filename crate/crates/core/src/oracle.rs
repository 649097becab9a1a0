//! The stochastic objective abstraction and the analytic quadratic test problem.
//!
//! An objective is a finite family of per-sample losses `f_1, ..., f_N`; the
//! optimizers only ever see mini-batch averages of per-sample gradients.
//! Sample indices are 1-based throughout the domain model.

use crate::error::{CoreError, CoreResult};
use crate::linalg::{self, Matrix};
use rand::Rng;

/// Flat dense vector of model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    entries: Vec<f64>,
}

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    pub fn is_all_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        linalg::dot(&self.entries, &other.entries)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm2(&self.entries)
    }

    /// `self - scale * dir`, the basic descent update.
    pub fn minus_scaled(&self, scale: f64, dir: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.dim(), dir.dim());
        ParamVector::new(
            self.entries
                .iter()
                .zip(&dir.entries)
                .map(|(x, g)| x - scale * g)
                .collect(),
        )
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(entries: Vec<f64>) -> Self {
        Self::new(entries)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

/// A list of 1-based sample indices whose gradients are averaged into one
/// stochastic gradient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    indices: Vec<usize>,
}

impl MiniBatch {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// The full batch `{1, ..., n}`.
    pub fn full(n: usize) -> Self {
        Self {
            indices: (1..=n).collect(),
        }
    }

    pub fn single(index: usize) -> Self {
        Self {
            indices: vec![index],
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Validate the batch against a sample count of `n`: non-empty, at most
    /// `n` indices, every index in `[1..n]`.
    pub fn validate(&self, n: usize) -> CoreResult<()> {
        if self.indices.is_empty() {
            return Err(CoreError::InvalidBatch("empty batch".into()));
        }
        if self.indices.len() > n {
            return Err(CoreError::InvalidBatch(format!(
                "batch of {} indices exceeds sample count {n}",
                self.indices.len()
            )));
        }
        for &i in &self.indices {
            if i == 0 || i > n {
                return Err(CoreError::InvalidBatch(format!(
                    "index {i} outside [1..{n}]"
                )));
            }
        }
        Ok(())
    }
}

fn check_dim(expected: usize, got: usize) -> CoreResult<()> {
    if expected != got {
        return Err(CoreError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_finite_slice(v: &[f64], what: &str) -> CoreResult<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NumericOverflow(what.into()));
    }
    Ok(())
}

/// A finite-sample stochastic objective `f(x) = (1/N) sum_i f_i(x)`.
///
/// Implementors provide per-sample losses and gradients; the mini-batch and
/// full-objective quantities come from the provided methods, which validate
/// batches and check results for finiteness. The `per_sample_*` contract:
/// `index` is in `1..=sample_count()` and `x.len() == dimension()`.
pub trait StochasticObjective: Sync {
    fn dimension(&self) -> usize;
    fn sample_count(&self) -> usize;
    fn per_sample_loss(&self, index: usize, x: &[f64]) -> f64;
    fn per_sample_gradient_into(&self, index: usize, x: &[f64], out: &mut [f64]);

    /// Mini-batch gradient `(1/M) sum_m grad f_{batch[m]}(x)`.
    fn sample_gradient(&self, x: &ParamVector, batch: &MiniBatch) -> CoreResult<ParamVector> {
        check_dim(self.dimension(), x.dim())?;
        batch.validate(self.sample_count())?;
        let d = self.dimension();
        let mut acc = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        for &i in batch.indices() {
            self.per_sample_gradient_into(i, x.as_slice(), &mut tmp);
            for (a, t) in acc.iter_mut().zip(&tmp) {
                *a += t;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        check_finite_slice(&acc, "sample_gradient")?;
        Ok(ParamVector::new(acc))
    }

    /// Gradient of the full objective, i.e. `sample_gradient` over `{1..N}`.
    fn full_gradient(&self, x: &ParamVector) -> CoreResult<ParamVector> {
        self.sample_gradient(x, &MiniBatch::full(self.sample_count()))
    }

    /// Mini-batch average loss.
    fn batch_loss(&self, x: &ParamVector, batch: &MiniBatch) -> CoreResult<f64> {
        check_dim(self.dimension(), x.dim())?;
        batch.validate(self.sample_count())?;
        let sum: f64 = batch
            .indices()
            .iter()
            .map(|&i| self.per_sample_loss(i, x.as_slice()))
            .sum();
        let loss = sum / batch.len() as f64;
        if !loss.is_finite() {
            return Err(CoreError::NumericOverflow("batch_loss".into()));
        }
        Ok(loss)
    }

    /// `(1/N) sum_i f_i(x)`.
    fn full_loss(&self, x: &ParamVector) -> CoreResult<f64> {
        self.batch_loss(x, &MiniBatch::full(self.sample_count()))
    }

    /// Mini-batch loss and gradient in one pass. Implementations that share
    /// work between the two (e.g. one forward/backward sweep) override this.
    fn batch_loss_and_gradient(
        &self,
        x: &ParamVector,
        batch: &MiniBatch,
    ) -> CoreResult<(f64, ParamVector)> {
        let loss = self.batch_loss(x, batch)?;
        let grad = self.sample_gradient(x, batch)?;
        Ok((loss, grad))
    }

    /// Covariance of the per-sample gradients around the full gradient:
    /// `(1/N) sum_k (grad f_k - grad f)(grad f_k - grad f)^T`.
    fn noise_covariance(&self, x: &ParamVector) -> CoreResult<Matrix> {
        check_dim(self.dimension(), x.dim())?;
        let d = self.dimension();
        let n = self.sample_count();
        let mean = self.full_gradient(x)?;
        let mut cov = Matrix::zeros(d, d);
        let mut tmp = vec![0.0; d];
        for i in 1..=n {
            self.per_sample_gradient_into(i, x.as_slice(), &mut tmp);
            for (t, m) in tmp.iter_mut().zip(mean.as_slice()) {
                *t -= m;
            }
            cov.add_outer(&tmp, &tmp, 1.0);
        }
        cov.scale(1.0 / n as f64);
        check_finite_slice(cov.data(), "noise_covariance")?;
        Ok(cov)
    }
}

/// Finite family of quadratic sample losses
/// `f_i(x) = 1/2 <A_i x, x> - <b_i, x>` with symmetric `A_i`.
///
/// The mean matrix `A` and mean vector `b` give the full objective; when `A`
/// is positive definite the analytic minimizer solves `A x = b`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    dim: usize,
    matrices: Vec<Matrix>,
    vectors: Vec<Vec<f64>>,
    mean_matrix: Matrix,
    mean_vector: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(matrices: Vec<Matrix>, vectors: Vec<Vec<f64>>) -> CoreResult<Self> {
        if matrices.is_empty() || matrices.len() != vectors.len() {
            return Err(CoreError::InvalidData(
                "need the same positive number of matrices and vectors".into(),
            ));
        }
        let dim = matrices[0].rows();
        if dim == 0 {
            return Err(CoreError::InvalidData("dimension must be >= 1".into()));
        }
        let mut mean_matrix = Matrix::zeros(dim, dim);
        let mut mean_vector = vec![0.0; dim];
        let inv = 1.0 / matrices.len() as f64;
        for (a, b) in matrices.iter().zip(&vectors) {
            if !a.is_square() || a.rows() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: a.rows(),
                });
            }
            if !a.is_symmetric(1e-12) {
                return Err(CoreError::InvalidData(
                    "per-sample matrices must be symmetric".into(),
                ));
            }
            check_dim(dim, b.len())?;
            mean_matrix.add_scaled(a, inv);
            for (m, v) in mean_vector.iter_mut().zip(b) {
                *m += inv * v;
            }
        }
        Ok(Self {
            dim,
            matrices,
            vectors,
            mean_matrix,
            mean_vector,
        })
    }

    /// One-dimensional problem from per-sample curvatures and offsets.
    pub fn scalar_samples(a: &[f64], b: &[f64]) -> CoreResult<Self> {
        Self::new(
            a.iter().map(|&v| Matrix::scalar(v)).collect(),
            b.iter().map(|&v| vec![v]).collect(),
        )
    }

    /// Single-sample SPD problem with eigenvalues in `[lambda_min, lambda_max]`
    /// and a random offset vector; the deterministic full-batch test problem.
    pub fn random_spd_single<R: Rng + ?Sized>(
        dim: usize,
        lambda_min: f64,
        lambda_max: f64,
        rng: &mut R,
    ) -> Self {
        let a = linalg::random_spd(dim, lambda_min, lambda_max, rng);
        let b = (0..dim).map(|_| linalg::standard_normal(rng)).collect();
        Self::new(vec![a], vec![b]).expect("construction from generated data")
    }

    /// `n`-sample ensemble of random symmetric (not necessarily definite)
    /// quadratics; the generic input for the moment-matching lab.
    pub fn random_ensemble<R: Rng + ?Sized>(dim: usize, n: usize, scale: f64, rng: &mut R) -> Self {
        let matrices = (0..n)
            .map(|_| linalg::random_symmetric(dim, scale, rng))
            .collect();
        let vectors = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| scale * linalg::standard_normal(rng))
                    .collect()
            })
            .collect();
        Self::new(matrices, vectors).expect("construction from generated data")
    }

    pub fn mean_matrix(&self) -> &Matrix {
        &self.mean_matrix
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.mean_vector
    }

    pub fn sample_matrix(&self, index: usize) -> &Matrix {
        &self.matrices[index - 1]
    }

    /// True when the mean matrix is positive definite (Cholesky succeeds).
    pub fn is_convex(&self) -> bool {
        self.mean_matrix.cholesky().is_some()
    }

    /// Analytic minimizer `x` of the full objective, solving `A x = b`.
    pub fn minimizer(&self) -> CoreResult<ParamVector> {
        let x = self.mean_matrix.solve(&self.mean_vector)?;
        Ok(ParamVector::new(x))
    }
}

impl StochasticObjective for QuadraticProblem {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn sample_count(&self) -> usize {
        self.matrices.len()
    }

    fn per_sample_loss(&self, index: usize, x: &[f64]) -> f64 {
        let ax = self.matrices[index - 1].matvec(x);
        0.5 * linalg::dot(&ax, x) - linalg::dot(&self.vectors[index - 1], x)
    }

    fn per_sample_gradient_into(&self, index: usize, x: &[f64], out: &mut [f64]) {
        self.matrices[index - 1].matvec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.vectors[index - 1]) {
            *o -= b;
        }
    }
}

/// Analytic minimizer of a quadratic problem; errors on singular mean matrix.
pub fn quadratic_minimizer(prob: &QuadraticProblem) -> CoreResult<ParamVector> {
    prob.minimizer()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_sample_problem() -> QuadraticProblem {
        // f_1 = x^2/2, f_2 = 3x^2/2
        QuadraticProblem::scalar_samples(&[1.0, 3.0], &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn sample_gradient_matches_hand_values() {
        let p = two_sample_problem();
        let x = ParamVector::new(vec![1.0]);
        let g = p.sample_gradient(&x, &MiniBatch::new(vec![1, 2])).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);

        let at_zero = p
            .sample_gradient(&ParamVector::new(vec![0.0]), &MiniBatch::new(vec![1, 2]))
            .unwrap();
        assert_eq!(at_zero[0], 0.0);

        let single = p.sample_gradient(&x, &MiniBatch::single(2)).unwrap();
        assert!((single[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sample_gradient_rejects_bad_batches() {
        let p = two_sample_problem();
        let x = ParamVector::new(vec![1.0]);
        assert!(matches!(
            p.sample_gradient(&x, &MiniBatch::new(vec![0])),
            Err(CoreError::InvalidBatch(_))
        ));
        assert!(matches!(
            p.sample_gradient(&x, &MiniBatch::new(vec![3])),
            Err(CoreError::InvalidBatch(_))
        ));
        assert!(matches!(
            p.sample_gradient(&x, &MiniBatch::new(vec![])),
            Err(CoreError::InvalidBatch(_))
        ));
    }

    #[test]
    fn full_gradient_matches_hand_values() {
        let p = two_sample_problem();
        let g = p.full_gradient(&ParamVector::new(vec![1.0])).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-15);

        // At the minimizer the gradient vanishes.
        let spd = QuadraticProblem::scalar_samples(&[2.0], &[4.0]).unwrap();
        let xopt = spd.minimizer().unwrap();
        let g = spd.full_gradient(&xopt).unwrap();
        assert!(g[0].abs() < 1e-14);

        // N=1 degenerates to the single-sample gradient.
        let single = QuadraticProblem::scalar_samples(&[2.0], &[1.0]).unwrap();
        let x = ParamVector::new(vec![0.5]);
        let a = single.full_gradient(&x).unwrap();
        let b = single.sample_gradient(&x, &MiniBatch::single(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_loss_matches_hand_values() {
        let p = two_sample_problem();
        let loss = p.full_loss(&ParamVector::new(vec![1.0])).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
        assert_eq!(p.full_loss(&ParamVector::new(vec![0.0])).unwrap(), 0.0);

        let single = QuadraticProblem::scalar_samples(&[3.0], &[0.0]).unwrap();
        let x = ParamVector::new(vec![2.0]);
        assert!(
            (single.full_loss(&x).unwrap() - single.per_sample_loss(1, x.as_slice())).abs() < 1e-15
        );
    }

    #[test]
    fn noise_covariance_matches_hand_values() {
        // gradients {1, 3} at x=1, mean 2 -> variance 1
        let p = two_sample_problem();
        let v = p.noise_covariance(&ParamVector::new(vec![1.0])).unwrap();
        assert!((v.get(0, 0) - 1.0).abs() < 1e-15);

        // single sample: no dispersion
        let single = QuadraticProblem::scalar_samples(&[2.0], &[1.0]).unwrap();
        let v = single
            .noise_covariance(&ParamVector::new(vec![0.3]))
            .unwrap();
        assert_eq!(v.get(0, 0), 0.0);

        // identical samples: zero matrix
        let same = QuadraticProblem::scalar_samples(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        let v = same.noise_covariance(&ParamVector::new(vec![0.7])).unwrap();
        assert_eq!(v.get(0, 0), 0.0);
    }

    #[test]
    fn minimizer_matches_hand_values() {
        let p = QuadraticProblem::scalar_samples(&[2.0], &[4.0]).unwrap();
        let x = quadratic_minimizer(&p).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);

        let zero_b = QuadraticProblem::scalar_samples(&[5.0], &[0.0]).unwrap();
        assert_eq!(zero_b.minimizer().unwrap()[0], 0.0);

        let ident =
            QuadraticProblem::new(vec![Matrix::identity(3)], vec![vec![1.0, -2.0, 0.5]]).unwrap();
        let x = ident.minimizer().unwrap();
        assert_eq!(x.as_slice(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn minimizer_residual_within_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let p = QuadraticProblem::random_spd_single(5, 0.3, 2.0, &mut rng);
            let x = p.minimizer().unwrap();
            let ax = p.mean_matrix().matvec(x.as_slice());
            let resid: f64 = ax
                .iter()
                .zip(p.mean_vector())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let bnorm = linalg::norm2(p.mean_vector());
            assert!(resid <= 1e-10 * (1.0 + bnorm));
        }
    }

    #[test]
    fn singular_mean_matrix_is_an_error() {
        let p = QuadraticProblem::scalar_samples(&[1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(p.minimizer(), Err(CoreError::SingularSystem)));
        assert!(!p.is_convex());
    }

    #[test]
    fn convexity_flag_follows_mean_matrix() {
        assert!(two_sample_problem().is_convex());
        let concave = QuadraticProblem::scalar_samples(&[-1.0], &[0.0]).unwrap();
        assert!(!concave.is_convex());
    }

    #[test]
    fn full_gradient_equals_mean_of_sample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = QuadraticProblem::random_ensemble(4, 6, 1.0, &mut rng);
        for _ in 0..100 {
            let x = ParamVector::new((0..4).map(|_| linalg::standard_normal(&mut rng)).collect());
            let full = p.full_gradient(&x).unwrap();
            let mut acc = [0.0; 4];
            for i in 1..=6 {
                let g = p.sample_gradient(&x, &MiniBatch::single(i)).unwrap();
                for (a, v) in acc.iter_mut().zip(g.as_slice()) {
                    *a += v / 6.0;
                }
            }
            let scale = 1.0 + full.norm();
            for (a, b) in acc.iter().zip(full.as_slice()) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn noise_covariance_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = rng.gen_range(1..=5);
            let n = rng.gen_range(1..=8);
            let p = QuadraticProblem::random_ensemble(d, n, 1.0, &mut rng);
            let x = ParamVector::new((0..d).map(|_| linalg::standard_normal(&mut rng)).collect());
            let v = p.noise_covariance(&x).unwrap();
            assert!(v.is_symmetric(1e-12));
            let (eigs, _) = v.sym_eigen().unwrap();
            let trace: f64 = (0..d).map(|i| v.get(i, i)).sum();
            for e in eigs {
                assert!(e >= -1e-10 * trace.max(1.0));
            }
        }
    }

    #[test]
    fn gradient_is_mean_matrix_times_offset_from_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let p = QuadraticProblem::random_spd_single(4, 0.5, 3.0, &mut rng);
            let xopt = p.minimizer().unwrap();
            let x = ParamVector::new((0..4).map(|_| linalg::standard_normal(&mut rng)).collect());
            let g = p.full_gradient(&x).unwrap();
            let diff: Vec<f64> = x
                .as_slice()
                .iter()
                .zip(xopt.as_slice())
                .map(|(a, b)| a - b)
                .collect();
            let expected = p.mean_matrix().matvec(&diff);
            let scale = 1.0 + linalg::norm2(&expected);
            for (a, b) in g.as_slice().iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }
}
