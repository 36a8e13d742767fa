//! Universal marginaliser training and evaluation on noisy-OR networks.
//!
//! The crate covers the full pipeline:
//!
//! * [`bn`] — a three-layer noisy-OR Bayesian network (risk factors →
//!   diseases → symptoms) with ancestral sampling, Markov blankets and a
//!   value-exact text file format;
//! * [`inference`] — exact conditional marginals by layered enumeration,
//!   plus a brute-force cross-check;
//! * [`masking`] — five masking distributions over observation vectors and
//!   the two-slot Boolean input encoding;
//! * [`nn`] — the branched marginaliser network with batch normalisation,
//!   analytic backpropagation and Adam, all in `f64` on `ndarray`;
//! * [`trainer`] — the online denoising training loop;
//! * [`eval`] — prediction-versus-oracle error reports under uniform and
//!   Markov-blanket observation models;
//! * [`stats`] — chi-square goodness-of-fit helpers for the masking
//!   diagnostics.

pub mod bn;
pub mod eval;
pub mod inference;
pub mod masking;
pub mod nn;
pub mod stats;
pub mod trainer;

pub use bn::{
    generate_random_network, Assignment, LayerSizes, NetworkError, NodeRole, NoisyOrNetwork,
    ParamRanges,
};
pub use inference::{
    brute_force_marginals, evidence_log_probability, exact_conditional_marginals, Evidence,
    InferenceError, MarginalVector,
};
pub use masking::{
    apply_mask, mask_size_histogram, sample_markov_mask, sample_nodewise_mask,
    sample_sizewise_mask, sample_uniform_mask, EncodedSample, Mask, MaskSizeHistogram,
    MaskingError, MaskingScheme,
};
pub use nn::{
    adam_step, backward, cross_entropy_loss, AdamHyper, AdamState, Checkpoint, ModelError,
    UmGradients, UmModel,
};
pub use trainer::{
    generate_training_batch, train, train_with_observer, EpochRecord, TrainError, TrainingBatch,
    TrainingConfig, TrainingMetrics, TrainingOutcome,
};
pub use eval::{
    build_report, build_test_set, evaluate, export_report, linear_fit, model_predictions,
    oracle_predictions, ErrorRow, EvalError, EvaluationQuery, EvaluationReport, ExportFormat,
    LinearFit, ObservationModel, ReportMeta,
};
