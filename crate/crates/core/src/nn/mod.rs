//! The universal marginaliser network and its from-scratch training kit.
//!
//! The model is a branched multi-layer perceptron over the two-slot Boolean
//! encoding of a masked sample: one branch per network layer (risk factors,
//! diseases, symptoms), each reading the full input. A branch stacks three
//! hidden blocks of 512 units (affine, batch normalisation, sigmoid) and
//! ends in an affine head of two logits per node, normalised by a per-node
//! softmax so the two outputs are the node's false/true probabilities.
//!
//! Forward, backward, the cross-entropy loss and Adam are implemented
//! directly on `ndarray` in 64-bit floats, which keeps analytic gradients
//! checkable against finite differences.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod model;

pub use adam::{adam_step, adam_update_slice, AdamHyper, AdamState};
pub use backward::backward;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use forward::{cross_entropy_loss, TrainCache};
pub use model::{ModelError, UmModel, HIDDEN_LAYERS, HIDDEN_WIDTH, PROB_CLAMP};

/// Gradients of every trainable tensor, laid out exactly like the model's
/// parameters (see [`UmModel::param_views`]).
#[derive(Debug, Clone)]
pub struct UmGradients {
    pub(crate) tensors: Vec<ndarray::ArrayD<f64>>,
}

impl UmGradients {
    pub fn tensors(&self) -> &[ndarray::ArrayD<f64>] {
        &self.tensors
    }
}
