//! Forward passes and the reconstruction loss.

use ndarray::{Array1, Array2, Axis};

use super::model::{Branch, ModelError, UmModel, PROB_CLAMP};
use crate::masking::EncodedSample;

/// Activations cached by a training-mode forward pass, consumed by
/// [`super::backward`] and by the running-statistics update.
#[derive(Debug, Clone)]
pub struct TrainCache {
    pub(crate) input: Array2<f64>,
    pub(crate) branches: Vec<BranchCache>,
}

#[derive(Debug, Clone)]
pub(crate) struct BranchCache {
    pub layers: Vec<LayerCache>,
    /// Softmax outputs, `(batch, 2 * nodes)`.
    pub softmax: Array2<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub s_out: Array2<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine -> per-node pair softmax for one branch's head.
fn head_softmax(branch: &Branch, hidden_out: &Array2<f64>) -> Array2<f64> {
    let mut z = hidden_out.dot(&branch.output.w);
    z += &branch.output.b;
    for mut row in z.rows_mut() {
        for m in 0..branch.nodes {
            let (z0, z1) = (row[2 * m], row[2 * m + 1]);
            let max = z0.max(z1);
            let e0 = (z0 - max).exp();
            let e1 = (z1 - max).exp();
            let total = e0 + e1;
            row[2 * m] = e0 / total;
            row[2 * m + 1] = e1 / total;
        }
    }
    z
}

impl UmModel {
    /// Evaluation-mode forward pass over packed inputs `(batch, 2n)`,
    /// normalising with the running statistics. Returns `P(X_i = 1 | input)`
    /// per sample; never mutates the model.
    pub fn forward_eval(&self, input: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(input)?;
        let batch = input.nrows();
        let mut probs = Array2::zeros((batch, self.num_nodes()));
        let mut offset = 0;
        for branch in &self.branches {
            let mut x = input.clone();
            for block in &branch.hidden {
                let mut a = x.dot(&block.affine.w);
                a += &block.affine.b;
                let inv_std = block.norm.running_var.mapv(|v| 1.0 / (v + self.bn_eps).sqrt());
                a -= &block.norm.running_mean;
                a *= &inv_std;
                a *= &block.norm.gamma;
                a += &block.norm.beta;
                a.mapv_inplace(sigmoid);
                x = a;
            }
            let softmax = head_softmax(branch, &x);
            for m in 0..branch.nodes {
                probs
                    .column_mut(offset + m)
                    .assign(&softmax.column(2 * m + 1));
            }
            offset += branch.nodes;
        }
        Ok(probs)
    }

    /// Convenience wrapper over [`UmModel::forward_eval`] for unpacked
    /// samples.
    pub fn forward_eval_samples(
        &self,
        samples: &[EncodedSample],
    ) -> Result<Array2<f64>, ModelError> {
        self.forward_eval(&EncodedSample::pack(samples))
    }

    /// Training-mode forward pass: normalises with batch statistics and
    /// caches every activation needed by the backward pass.
    ///
    /// This variant is pure — it does *not* fold the batch statistics into
    /// the running averages. [`UmModel::forward_train`] does both.
    pub fn forward_train_stats(
        &self,
        input: &Array2<f64>,
    ) -> Result<(Array2<f64>, TrainCache), ModelError> {
        self.check_input(input)?;
        let batch = input.nrows();
        if batch < 2 {
            return Err(ModelError::BatchTooSmall(batch));
        }
        let mut probs = Array2::zeros((batch, self.num_nodes()));
        let mut branch_caches = Vec::with_capacity(self.branches.len());
        let mut offset = 0;
        for branch in &self.branches {
            let mut layers: Vec<LayerCache> = Vec::with_capacity(branch.hidden.len());
            for block in &branch.hidden {
                let x_in = layers.last().map_or(input, |l| &l.s_out);
                let mut a = x_in.dot(&block.affine.w);
                a += &block.affine.b;
                let batch_mean = a.mean_axis(Axis(0)).expect("non-empty batch");
                let batch_var = a.var_axis(Axis(0), 0.0); // biased
                let inv_std = batch_var.mapv(|v| 1.0 / (v + self.bn_eps).sqrt());
                a -= &batch_mean;
                a *= &inv_std;
                let xhat = a;
                let mut s_out = xhat.clone();
                s_out *= &block.norm.gamma;
                s_out += &block.norm.beta;
                s_out.mapv_inplace(sigmoid);
                layers.push(LayerCache {
                    xhat,
                    inv_std,
                    s_out,
                    batch_mean,
                    batch_var,
                });
            }
            let last = &layers.last().expect("hidden layers").s_out;
            let softmax = head_softmax(branch, last);
            for m in 0..branch.nodes {
                probs
                    .column_mut(offset + m)
                    .assign(&softmax.column(2 * m + 1));
            }
            offset += branch.nodes;
            branch_caches.push(BranchCache { layers, softmax });
        }
        let cache = TrainCache {
            input: input.clone(),
            branches: branch_caches,
        };
        Ok((probs, cache))
    }

    /// Training-mode forward pass that also updates the running batch-norm
    /// statistics (exponential averages; the variance update uses the
    /// unbiased batch variance).
    pub fn forward_train(
        &mut self,
        input: &Array2<f64>,
    ) -> Result<(Array2<f64>, TrainCache), ModelError> {
        let (probs, cache) = self.forward_train_stats(input)?;
        let batch = input.nrows() as f64;
        let correction = batch / (batch - 1.0);
        let momentum = self.bn_momentum;
        for (branch, bcache) in self.branches.iter_mut().zip(&cache.branches) {
            for (block, lcache) in branch.hidden.iter_mut().zip(&bcache.layers) {
                block.norm.running_mean.zip_mut_with(&lcache.batch_mean, |r, &m| {
                    *r = momentum * *r + (1.0 - momentum) * m;
                });
                block.norm.running_var.zip_mut_with(&lcache.batch_var, |r, &v| {
                    *r = momentum * *r + (1.0 - momentum) * v * correction;
                });
            }
        }
        Ok((probs, cache))
    }
}

/// Mean over samples of the summed per-node binary cross entropy between
/// predicted `P(X_i = 1)` and the full target assignment. Probabilities are
/// clamped away from 0 and 1 so the logs stay finite.
pub fn cross_entropy_loss(probs: &Array2<f64>, targets: &Array2<f64>) -> Result<f64, ModelError> {
    if probs.dim() != targets.dim() {
        let (rows, cols) = targets.dim();
        let (batch, nodes) = probs.dim();
        return Err(ModelError::TargetShape {
            rows,
            cols,
            batch,
            nodes,
        });
    }
    let batch = probs.nrows() as f64;
    let mut total = 0.0;
    for (&q, &x) in probs.iter().zip(targets.iter()) {
        let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= x * q.ln() + (1.0 - x) * (1.0 - q).ln();
    }
    Ok(total / batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::LayerSizes;
    use ndarray::array;

    fn tiny_model() -> UmModel {
        UmModel::init(LayerSizes::new(1, 1, 1).unwrap(), 7)
    }

    fn all_masked_input(batch: usize, width: usize) -> Array2<f64> {
        Array2::zeros((batch, width))
    }

    #[test]
    fn softmax_pairs_sum_to_one() {
        let model = UmModel::init(LayerSizes::new(2, 3, 2).unwrap(), 9);
        let input = all_masked_input(4, model.input_width());
        let (_, cache) = model.forward_train_stats(&input).unwrap();
        for bcache in &cache.branches {
            for row in bcache.softmax.rows() {
                for pair in row.as_slice().unwrap().chunks(2) {
                    assert!((pair[0] + pair[1] - 1.0).abs() < 1e-7);
                    assert!(pair[0] >= 0.0 && pair[1] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn fresh_model_outputs_interior_probabilities() {
        let model = tiny_model();
        let input = all_masked_input(1, model.input_width());
        let probs = model.forward_eval(&input).unwrap();
        for &p in probs.iter() {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn eval_forward_is_pure_and_repeatable() {
        let model = tiny_model();
        let before = model.clone();
        let input = all_masked_input(3, model.input_width());
        let a = model.forward_eval(&input).unwrap();
        let b = model.forward_eval(&input).unwrap();
        assert_eq!(a, b);
        assert_eq!(model, before);
    }

    #[test]
    fn train_forward_updates_running_stats_but_stats_variant_does_not() {
        let mut model = tiny_model();
        let frozen = model.clone();
        let input = Array2::from_shape_fn((4, model.input_width()), |(r, c)| {
            f64::from(u8::from((r + c) % 3 == 0))
        });
        let _ = frozen.forward_train_stats(&input).unwrap();
        assert_eq!(model, frozen);
        let _ = model.forward_train(&input).unwrap();
        assert_ne!(model, frozen);
        // Parameters themselves are untouched; only running stats moved.
        for (a, b) in model.param_views().iter().zip(frozen.param_views().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn train_forward_rejects_batches_of_one() {
        let mut model = tiny_model();
        let input = all_masked_input(1, model.input_width());
        assert!(matches!(
            model.forward_train(&input),
            Err(ModelError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let model = tiny_model();
        let input = all_masked_input(2, model.input_width() + 2);
        assert!(matches!(
            model.forward_eval(&input),
            Err(ModelError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn loss_of_uniform_predictor_is_n_log_two() {
        let probs = array![[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]];
        let targets = array![[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let loss = cross_entropy_loss(&probs, &targets).unwrap();
        assert!((loss - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_at_perfect_prediction_is_nearly_zero() {
        let probs = array![[1.0, 0.0], [0.0, 1.0]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = cross_entropy_loss(&probs, &targets).unwrap();
        // Clamping turns exact predictions into 1 - 1e-12.
        assert!(loss >= 0.0 && loss < 1e-11);
    }

    #[test]
    fn loss_matches_independent_computation() {
        // Re-derive the clamped cross entropy with scalar code.
        let probs = array![[0.3, 0.9], [0.6, 0.2]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let mut expected = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let q: f64 = probs[[r, c]];
                let x: f64 = targets[[r, c]];
                expected += if x > 0.5 { -q.ln() } else { -(1.0 - q).ln() };
            }
        }
        expected /= 2.0;
        let loss = cross_entropy_loss(&probs, &targets).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }
}
