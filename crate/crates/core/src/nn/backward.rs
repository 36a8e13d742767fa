//! Analytic gradients of the reconstruction loss.

use ndarray::{Array2, Axis};

use super::forward::TrainCache;
use super::model::{ModelError, UmModel};
use super::UmGradients;

/// Exact gradients of the cross-entropy loss with respect to every
/// trainable tensor, in the model's canonical parameter order. Requires the
/// cache of a training-mode forward pass on the same batch.
pub fn backward(
    model: &UmModel,
    cache: &TrainCache,
    targets: &Array2<f64>,
) -> Result<UmGradients, ModelError> {
    backward_impl(model, cache, targets, None)
}

/// Backward pass with an optional 0/1 per-node loss weight, used by tests
/// to restrict the loss to a subset of nodes.
pub(crate) fn backward_impl(
    model: &UmModel,
    cache: &TrainCache,
    targets: &Array2<f64>,
    node_weights: Option<&[f64]>,
) -> Result<UmGradients, ModelError> {
    let batch = cache.input.nrows();
    let nodes = model.num_nodes();
    if targets.dim() != (batch, nodes) {
        let (rows, cols) = targets.dim();
        return Err(ModelError::TargetShape {
            rows,
            cols,
            batch,
            nodes,
        });
    }
    let scale = 1.0 / batch as f64;

    let mut tensors = Vec::new();
    let mut offset = 0;
    for (branch, bcache) in model.branches.iter().zip(&cache.branches) {
        // Softmax + cross entropy: d loss / d logit = (softmax - one-hot).
        let mut dz = Array2::zeros((batch, 2 * branch.nodes));
        for r in 0..batch {
            for m in 0..branch.nodes {
                let x = targets[[r, offset + m]];
                let weight = node_weights.map_or(1.0, |w| w[offset + m]);
                let p1 = bcache.softmax[[r, 2 * m + 1]];
                let p0 = bcache.softmax[[r, 2 * m]];
                dz[[r, 2 * m]] = weight * scale * (p0 - (1.0 - x));
                dz[[r, 2 * m + 1]] = weight * scale * (p1 - x);
            }
        }

        let last_hidden = &bcache.layers.last().expect("hidden layers").s_out;
        let d_out_w = last_hidden.t().dot(&dz);
        let d_out_b = dz.sum_axis(Axis(0));
        let mut d_s = dz.dot(&branch.output.w.t());

        // Per-branch gradients are collected output-first, then reversed so
        // the final layout matches the canonical parameter order.
        let mut rev: Vec<ndarray::ArrayD<f64>> = Vec::with_capacity(4 * branch.hidden.len() + 2);
        rev.push(d_out_b.into_dyn());
        rev.push(d_out_w.into_dyn());

        for (l, (block, lcache)) in branch.hidden.iter().zip(&bcache.layers).enumerate().rev() {
            // Sigmoid: s' = s (1 - s), folded into the incoming gradient.
            let mut dy = d_s;
            dy.zip_mut_with(&lcache.s_out, |d, &s| *d *= s * (1.0 - s));
            let d_gamma = (&dy * &lcache.xhat).sum_axis(Axis(0));
            let d_beta = dy.sum_axis(Axis(0));
            let mut d_xhat = dy;
            d_xhat *= &block.norm.gamma;

            // Batch-norm backward over the batch statistics (biased
            // variance): dA = istd/B (B dxhat - Σdxhat - xhat Σ(dxhat xhat)).
            let sum_dxhat = d_xhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&d_xhat * &lcache.xhat).sum_axis(Axis(0));
            let b_f = batch as f64;
            let mut da = d_xhat;
            da *= b_f;
            da -= &sum_dxhat;
            da -= &(&lcache.xhat * &sum_dxhat_xhat);
            da *= &lcache.inv_std.mapv(|v| v / b_f);

            let x_in = if l == 0 {
                &cache.input
            } else {
                &bcache.layers[l - 1].s_out
            };
            let d_w = x_in.t().dot(&da);
            let d_b = da.sum_axis(Axis(0));
            d_s = da.dot(&block.affine.w.t());
            rev.push(d_beta.into_dyn());
            rev.push(d_gamma.into_dyn());
            rev.push(d_b.into_dyn());
            rev.push(d_w.into_dyn());
        }
        tensors.extend(rev.into_iter().rev());
        offset += branch.nodes;
    }

    Ok(UmGradients { tensors })
}
