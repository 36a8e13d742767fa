//! Model structure, initialisation and parameter traversal.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bn::LayerSizes;

/// Width of every hidden block.
pub const HIDDEN_WIDTH: usize = 512;
/// Hidden blocks per branch.
pub const HIDDEN_LAYERS: usize = 3;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Batch-norm running averages: exponential with this momentum.
pub(crate) const BN_MOMENTUM: f64 = 0.99;
pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("forward pass needs a non-empty batch")]
    EmptyBatch,
    #[error("training forward pass needs a batch of at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("input width {got} does not match the model's {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("target shape ({rows}, {cols}) does not match batch {batch} x nodes {nodes}")]
    TargetShape {
        rows: usize,
        cols: usize,
        batch: usize,
        nodes: usize,
    },
    #[error("gradient/state tensor count {got} does not match the model's {expected}")]
    TensorCount { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    UnsupportedVersion { found: u32, expected: u32 },
}

/// Affine layer, weights stored `(fan_in, fan_out)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((fan_in, fan_out), || {
                rng.random_range(-scale..scale)
            }),
            b: Array1::zeros(fan_out),
        }
    }
}

/// Batch normalisation: learned scale/shift plus running statistics used in
/// evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn init(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HiddenBlock {
    pub affine: Affine,
    pub norm: BatchNorm,
}

/// One branch: hidden blocks plus the two-logits-per-node output head.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Branch {
    pub hidden: Vec<HiddenBlock>,
    pub output: Affine,
    pub nodes: usize,
}

/// The universal marginaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct UmModel {
    pub(crate) branches: Vec<Branch>,
    pub(crate) input_width: usize,
    pub(crate) bn_momentum: f64,
    pub(crate) bn_eps: f64,
    pub(crate) init_seed: u64,
}

impl UmModel {
    /// Initialises a model for a network of the given layer sizes,
    /// deterministically from `seed`.
    ///
    /// Affine weights are uniform in `±1/sqrt(fan_in)`, biases zero;
    /// batch-norm scale starts at 1, shift at 0, running mean at 0 and
    /// running variance at 1.
    pub fn init(shape: LayerSizes, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input_width = 2 * shape.total();
        let branches = [shape.risk_factors, shape.diseases, shape.symptoms]
            .into_iter()
            .map(|nodes| {
                let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
                let mut fan_in = input_width;
                for _ in 0..HIDDEN_LAYERS {
                    hidden.push(HiddenBlock {
                        affine: Affine::init(fan_in, HIDDEN_WIDTH, &mut rng),
                        norm: BatchNorm::init(HIDDEN_WIDTH),
                    });
                    fan_in = HIDDEN_WIDTH;
                }
                Branch {
                    hidden,
                    output: Affine::init(HIDDEN_WIDTH, 2 * nodes, &mut rng),
                    nodes,
                }
            })
            .collect();
        Self {
            branches,
            input_width,
            bn_momentum: BN_MOMENTUM,
            bn_eps: BN_EPS,
            init_seed: seed,
        }
    }

    /// Node count across all branches.
    pub fn num_nodes(&self) -> usize {
        self.branches.iter().map(|b| b.nodes).sum()
    }

    /// Expected input width, `2n`.
    pub fn input_width(&self) -> usize {
        self.input_width
    }

    /// Per-branch node counts `(risk factors, diseases, symptoms)`.
    pub fn branch_nodes(&self) -> Vec<usize> {
        self.branches.iter().map(|b| b.nodes).collect()
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.param_views().iter().map(|v| v.len()).sum()
    }

    /// Trainable tensors in their canonical order: per branch, per hidden
    /// block `[weights, bias, gamma, beta]`, then the output `[weights,
    /// bias]`. Gradient and optimiser state follow the same order.
    pub fn param_views(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut views = Vec::new();
        for branch in &self.branches {
            for block in &branch.hidden {
                views.push(block.affine.w.view().into_dyn());
                views.push(block.affine.b.view().into_dyn());
                views.push(block.norm.gamma.view().into_dyn());
                views.push(block.norm.beta.view().into_dyn());
            }
            views.push(branch.output.w.view().into_dyn());
            views.push(branch.output.b.view().into_dyn());
        }
        views
    }

    /// Mutable counterpart of [`UmModel::param_views`].
    pub fn param_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut views = Vec::new();
        for branch in &mut self.branches {
            for block in &mut branch.hidden {
                views.push(block.affine.w.view_mut().into_dyn());
                views.push(block.affine.b.view_mut().into_dyn());
                views.push(block.norm.gamma.view_mut().into_dyn());
                views.push(block.norm.beta.view_mut().into_dyn());
            }
            views.push(branch.output.w.view_mut().into_dyn());
            views.push(branch.output.b.view_mut().into_dyn());
        }
        views
    }

    /// Running batch-norm statistics in canonical order (mean, variance per
    /// hidden block per branch); serialised alongside the parameters.
    pub(crate) fn running_stat_views(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut views = Vec::new();
        for branch in &self.branches {
            for block in &branch.hidden {
                views.push(block.norm.running_mean.view().into_dyn());
                views.push(block.norm.running_var.view().into_dyn());
            }
        }
        views
    }

    pub(crate) fn running_stat_views_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut views = Vec::new();
        for branch in &mut self.branches {
            for block in &mut branch.hidden {
                views.push(block.norm.running_mean.view_mut().into_dyn());
                views.push(block.norm.running_var.view_mut().into_dyn());
            }
        }
        views
    }

    pub(crate) fn check_input(&self, input: &Array2<f64>) -> Result<(), ModelError> {
        if input.nrows() == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if input.ncols() != self.input_width {
            return Err(ModelError::WidthMismatch {
                expected: self.input_width,
                got: input.ncols(),
            });
        }
        Ok(())
    }
}
