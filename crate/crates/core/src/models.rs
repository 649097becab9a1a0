//! Dense feed-forward MLP with ReLU hidden layers, softmax output and
//! cross-entropy loss, with hand-coded backpropagation.
//!
//! All weights and biases live packed in one flat [`ParamVector`], layer by
//! layer: the `d_out x d_in` weight block in row-major order, then the
//! `d_out` bias block. The ReLU subgradient at exactly zero is defined as 0.

use crate::error::{CoreError, CoreResult};
use crate::oracle::{MiniBatch, ParamVector, StochasticObjective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Floor applied to the predicted probability of the true class before the
/// log, so confident wrong predictions cannot produce an infinite loss.
pub const PROBABILITY_FLOOR: f64 = 1e-30;

/// Labeled classification dataset with features scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> CoreResult<Self> {
        if feature_dim == 0 || class_count == 0 {
            return Err(CoreError::InvalidData(
                "feature_dim and class_count must be >= 1".into(),
            ));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(CoreError::InvalidData(format!(
                "feature buffer holds {} values, expected {} x {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(v) = features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::InvalidData(format!(
                "feature value {v} outside [0, 1]"
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(CoreError::InvalidData(format!(
                "label {l} outside [0..{}]",
                class_count - 1
            )));
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// 0-based row access.
    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }
}

/// Feed-forward topology; parameters themselves travel separately.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    offsets: Vec<usize>,
}

/// Scratch space for one forward/backward sweep, reusable across samples.
#[derive(Debug, Clone)]
pub struct MlpWorkspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl MlpModel {
    pub fn new(layer_dims: Vec<usize>) -> CoreResult<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(CoreError::InvalidConfig(format!(
                "layer dims must list >= 2 positive sizes, got {layer_dims:?}"
            )));
        }
        let mut offsets = Vec::with_capacity(layer_dims.len());
        let mut off = 0;
        for w in layer_dims.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        Ok(Self {
            layer_dims,
            offsets,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Total packed parameter length: sum of `d_in*d_out + d_out` per layer.
    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn weights<'a>(&self, params: &'a [f64], layer: usize) -> &'a [f64] {
        let (din, dout) = (self.layer_dims[layer], self.layer_dims[layer + 1]);
        let off = self.offsets[layer];
        &params[off..off + din * dout]
    }

    fn biases<'a>(&self, params: &'a [f64], layer: usize) -> &'a [f64] {
        let (din, dout) = (self.layer_dims[layer], self.layer_dims[layer + 1]);
        let off = self.offsets[layer] + din * dout;
        &params[off..off + dout]
    }

    pub fn workspace(&self) -> MlpWorkspace {
        let mk = || {
            self.layer_dims[1..]
                .iter()
                .map(|&d| vec![0.0; d])
                .collect::<Vec<_>>()
        };
        MlpWorkspace {
            pre: mk(),
            act: mk(),
            delta: mk(),
        }
    }

    fn check_shapes(&self, params: &[f64], input: &[f64]) -> CoreResult<()> {
        if params.len() != self.param_count() {
            return Err(CoreError::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if input.len() != self.input_dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn forward_ws(&self, params: &[f64], input: &[f64], ws: &mut MlpWorkspace) {
        fn dense(w: &[f64], b: &[f64], din: usize, prev: &[f64], pre: &mut [f64]) {
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &w[o * din..(o + 1) * din];
                let mut acc = b[o];
                for (wi, ai) in row.iter().zip(prev) {
                    acc += wi * ai;
                }
                *z = acc;
            }
        }
        let layers = self.layer_count();
        for l in 0..layers {
            let din = self.layer_dims[l];
            let w = self.weights(params, l);
            let b = self.biases(params, l);
            if l == 0 {
                dense(w, b, din, input, &mut ws.pre[0]);
            } else {
                dense(w, b, din, &ws.act[l - 1], &mut ws.pre[l]);
            }
            if l + 1 < layers {
                for (a, z) in ws.act[l].iter_mut().zip(&ws.pre[l]) {
                    *a = z.max(0.0);
                }
            } else {
                softmax_into(&ws.pre[l], &mut ws.act[l]);
            }
        }
    }

    /// Forward pass returning output-class probabilities (softmax, sums to 1).
    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> CoreResult<Vec<f64>> {
        self.check_shapes(params.as_slice(), input)?;
        let mut ws = self.workspace();
        self.forward_ws(params.as_slice(), input, &mut ws);
        Ok(ws.act.last().unwrap().clone())
    }

    /// Cross-entropy loss of one sample and its exact parameter gradient,
    /// *added* into `grad_acc` (callers accumulate over a batch).
    pub fn loss_and_gradient_accumulate(
        &self,
        params: &[f64],
        input: &[f64],
        label: usize,
        grad_acc: &mut [f64],
        ws: &mut MlpWorkspace,
    ) -> f64 {
        debug_assert_eq!(grad_acc.len(), self.param_count());
        debug_assert!(label < self.output_dim());
        self.forward_ws(params, input, ws);
        let layers = self.layer_count();
        let probs = &ws.act[layers - 1];
        let loss = -probs[label].max(PROBABILITY_FLOOR).ln();

        // softmax + cross-entropy collapses to p - onehot at the output
        for (o, d) in ws.delta[layers - 1].iter_mut().enumerate() {
            *d = probs[o] - if o == label { 1.0 } else { 0.0 };
        }
        for l in (0..layers).rev() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w_off = self.offsets[l];
            let b_off = w_off + din * dout;
            let prev: &[f64] = if l == 0 { input } else { &ws.act[l - 1] };
            for o in 0..dout {
                let d = ws.delta[l][o];
                if d != 0.0 {
                    let grad_row = &mut grad_acc[w_off + o * din..w_off + (o + 1) * din];
                    for (gw, ai) in grad_row.iter_mut().zip(prev) {
                        *gw += d * ai;
                    }
                }
                grad_acc[b_off + o] += d;
            }
            if l > 0 {
                let (head, tail) = ws.delta.split_at_mut(l);
                let delta_prev = &mut head[l - 1];
                let delta_cur = &tail[0];
                let w = self.weights(params, l);
                for i in 0..din {
                    let mut s = 0.0;
                    for o in 0..dout {
                        s += w[o * din + i] * delta_cur[o];
                    }
                    // subgradient 0 at exactly 0
                    delta_prev[i] = if ws.pre[l - 1][i] > 0.0 { s } else { 0.0 };
                }
            }
        }
        loss
    }

    /// One-sample cross-entropy loss and gradient, freshly allocated.
    pub fn loss_and_gradient(
        &self,
        params: &ParamVector,
        input: &[f64],
        label: usize,
    ) -> CoreResult<(f64, ParamVector)> {
        self.check_shapes(params.as_slice(), input)?;
        if label >= self.output_dim() {
            return Err(CoreError::InvalidData(format!(
                "label {label} outside [0..{}]",
                self.output_dim() - 1
            )));
        }
        let mut grad = vec![0.0; self.param_count()];
        let mut ws = self.workspace();
        let loss =
            self.loss_and_gradient_accumulate(params.as_slice(), input, label, &mut grad, &mut ws);
        Ok((loss, ParamVector::new(grad)))
    }

    /// Glorot-style uniform initialization: weights drawn from
    /// `U(-sqrt(6/(d_in+d_out)), +sqrt(6/(d_in+d_out)))`, biases zero.
    pub fn init_weights(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.param_count()];
        for l in 0..self.layer_count() {
            let (din, dout) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let bound = (6.0 / (din + dout) as f64).sqrt();
            let off = self.offsets[l];
            for w in &mut params[off..off + din * dout] {
                *w = rng.gen_range(-bound..bound);
            }
            // bias block stays zero
        }
        ParamVector::new(params)
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Fraction of samples whose most probable class matches the label.
pub fn accuracy(model: &MlpModel, params: &ParamVector, data: &LabeledDataset) -> CoreResult<f64> {
    if data.is_empty() {
        return Err(CoreError::InvalidData("empty dataset".into()));
    }
    let mut ws = model.workspace();
    let mut hits = 0usize;
    for i in 0..data.len() {
        model.forward_ws(params.as_slice(), data.feature_row(i), &mut ws);
        let probs = ws.act.last().unwrap();
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        if argmax == data.labels()[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// An MLP bound to a labeled dataset, exposed as a stochastic objective:
/// sample `i` contributes the cross-entropy loss of the `i`-th data row.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    model: MlpModel,
    data: LabeledDataset,
}

impl MlpObjective {
    pub fn new(model: MlpModel, data: LabeledDataset) -> CoreResult<Self> {
        if model.input_dim() != data.feature_dim() {
            return Err(CoreError::DimensionMismatch {
                expected: model.input_dim(),
                got: data.feature_dim(),
            });
        }
        if model.output_dim() != data.class_count() {
            return Err(CoreError::DimensionMismatch {
                expected: model.output_dim(),
                got: data.class_count(),
            });
        }
        Ok(Self { model, data })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn train_accuracy(&self, params: &ParamVector) -> CoreResult<f64> {
        accuracy(&self.model, params, &self.data)
    }
}

impl StochasticObjective for MlpObjective {
    fn dimension(&self) -> usize {
        self.model.param_count()
    }

    fn sample_count(&self) -> usize {
        self.data.len()
    }

    fn per_sample_loss(&self, index: usize, x: &[f64]) -> f64 {
        let row = self.data.feature_row(index - 1);
        let label = self.data.labels()[index - 1];
        let mut ws = self.model.workspace();
        self.model.forward_ws(x, row, &mut ws);
        -ws.act.last().unwrap()[label].max(PROBABILITY_FLOOR).ln()
    }

    fn per_sample_gradient_into(&self, index: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut ws = self.model.workspace();
        self.model.loss_and_gradient_accumulate(
            x,
            self.data.feature_row(index - 1),
            self.data.labels()[index - 1],
            out,
            &mut ws,
        );
    }

    // One fused forward/backward sweep per sample, sharing the workspace
    // across the whole batch.
    fn batch_loss_and_gradient(
        &self,
        x: &ParamVector,
        batch: &MiniBatch,
    ) -> CoreResult<(f64, ParamVector)> {
        if x.dim() != self.dimension() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dimension(),
                got: x.dim(),
            });
        }
        batch.validate(self.sample_count())?;
        let mut grad = vec![0.0; self.dimension()];
        let mut ws = self.model.workspace();
        let mut loss_sum = 0.0;
        for &i in batch.indices() {
            loss_sum += self.model.loss_and_gradient_accumulate(
                x.as_slice(),
                self.data.feature_row(i - 1),
                self.data.labels()[i - 1],
                &mut grad,
                &mut ws,
            );
        }
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        let loss = loss_sum * inv;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::NumericOverflow("mlp batch".into()));
        }
        Ok((loss, ParamVector::new(grad)))
    }
}
