//! Online training loop: sample, mask, encode, descend.
//!
//! Training data is generated on the fly — a joint sample from the network,
//! a mask from the chosen scheme, the masked encoding as input and the full
//! assignment as the reconstruction target. Schemes with a per-batch
//! observation probability draw exactly one `p` per batch.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bn::{Assignment, NetworkError, NoisyOrNetwork};
use crate::masking::{apply_mask, EncodedSample, MaskingError, MaskingScheme};
use crate::nn::{
    adam_step, backward, cross_entropy_loss, AdamHyper, AdamState, Checkpoint, ModelError, UmModel,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    Config(String),
    #[error("loss became non-finite ({loss}) at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a training run needs; two runs with equal configs produce
/// identical models.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub scheme: MaskingScheme,
    pub samples_per_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub data_seed: u64,
    pub init_seed: u64,
    /// Write a checkpoint into `checkpoint_dir` every this many epochs.
    pub checkpoint_every_epochs: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainingConfig {
    /// Defaults for a desk-scale run: the scheme's own defaults, 400k
    /// samples per epoch for 5 epochs in batches of 512, learning rate 1e-4.
    pub fn desk_scale(scheme: MaskingScheme, data_seed: u64, init_seed: u64) -> Self {
        Self {
            scheme,
            samples_per_epoch: 400_000,
            epochs: 5,
            batch_size: 512,
            learning_rate: 1e-4,
            data_seed,
            init_seed,
            checkpoint_every_epochs: None,
            checkpoint_dir: None,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::Config(
                "batch_size must be at least 2 for batch normalisation".into(),
            ));
        }
        if self.samples_per_epoch % self.batch_size == 1 {
            return Err(TrainError::Config(
                "samples_per_epoch leaves a final batch of 1, which batch \
                 normalisation cannot handle"
                    .into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning_rate {} must be positive and finite",
                self.learning_rate
            )));
        }
        if self.checkpoint_every_epochs == Some(0) {
            return Err(TrainError::Config(
                "checkpoint_every_epochs must be at least 1".into(),
            ));
        }
        if self.checkpoint_every_epochs.is_some() && self.checkpoint_dir.is_none() {
            return Err(TrainError::Config(
                "checkpoint cadence set without a checkpoint directory".into(),
            ));
        }
        Ok(())
    }

    /// Batch sizes of one epoch: full batches plus a final partial batch
    /// when the epoch size is not a multiple (never of size 1).
    fn epoch_batches(&self) -> Vec<usize> {
        let full = self.samples_per_epoch / self.batch_size;
        let rem = self.samples_per_epoch % self.batch_size;
        let mut sizes = vec![self.batch_size; full];
        if rem > 0 {
            sizes.push(rem);
        }
        sizes
    }
}

/// One epoch's aggregate record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub median_loss: f64,
    pub samples: usize,
    pub wall_clock: Duration,
    /// Per-batch observation probabilities drawn this epoch, if the scheme
    /// uses them.
    pub p_drawn: usize,
    pub p_mean: Option<f64>,
}

/// Per-epoch records of a completed run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingMetrics {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingMetrics {
    pub fn samples_consumed(&self) -> usize {
        self.epochs.iter().map(|e| e.samples).sum()
    }

    /// One log line per epoch: `epoch=.. mean_loss=.. samples=.. p_values=..`.
    pub fn log_line(record: &EpochRecord) -> String {
        let p_summary = match record.p_mean {
            Some(mean) => format!("{}:{:.6}", record.p_drawn, mean),
            None => "-".to_string(),
        };
        format!(
            "epoch={} mean_loss={:.12e} samples={} p_values={}",
            record.epoch, record.mean_loss, record.samples, p_summary
        )
    }

    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&Self::log_line(record));
            out.push('\n');
        }
        out
    }
}

/// A generated batch: encoded inputs, full-assignment targets and the
/// per-batch observation probability, when the scheme draws one.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub samples: Vec<EncodedSample>,
    pub targets: Vec<Assignment>,
    pub batch_probability: Option<f64>,
}

/// Draws one batch: the batch-level `p` first (when the scheme uses one),
/// then per sample a joint assignment, a mask, and the masked encoding.
/// Targets are always the full assignments.
pub fn generate_training_batch<R: Rng + ?Sized>(
    net: &NoisyOrNetwork,
    scheme: &mut MaskingScheme,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainingBatch, TrainError> {
    let p = scheme.next_batch_probability(rng);
    let mut samples = Vec::with_capacity(batch_size);
    let mut targets = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let assignment = net.ancestral_sample(rng);
        let mask = scheme.sample_mask(net.n(), Some(net), p, rng)?;
        samples.push(apply_mask(&assignment, &mask)?);
        targets.push(assignment);
    }
    Ok(TrainingBatch {
        samples,
        targets,
        batch_probability: p,
    })
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: UmModel,
    pub adam: AdamState,
    pub metrics: TrainingMetrics,
}

impl TrainingOutcome {
    /// Checkpoint view of the outcome.
    pub fn checkpoint(&self, config: &TrainingConfig) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: Some(self.adam.clone()),
            data_seed: config.data_seed,
            samples_consumed: self.metrics.samples_consumed() as u64,
            scheme: config.scheme.name().to_string(),
        }
    }
}

/// Runs the full optimisation loop. See [`train_with_observer`].
pub fn train(net: &NoisyOrNetwork, config: &TrainingConfig) -> Result<TrainingOutcome, TrainError> {
    train_with_observer(net, config, |_| Ok(()))
}

/// Runs `epochs x (samples_per_epoch / batch_size)` steps of
/// generate → forward → loss → backward → Adam, calling `on_epoch` after
/// each epoch (the hook is for streaming logs; it cannot observe the model).
///
/// The run is fully reproducible from `(data_seed, init_seed)` and aborts
/// with a diagnostic if the loss stops being finite.
pub fn train_with_observer(
    net: &NoisyOrNetwork,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<(), TrainError>,
) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    if config.scheme.requires_network() && net.num_diseases() == 0 {
        return Err(TrainError::Config(
            "markov masking needs a network with diseases".into(),
        ));
    }

    let mut model = UmModel::init(net.layer_sizes(), config.init_seed);
    let mut adam = AdamState::new(&model, AdamHyper::with_learning_rate(config.learning_rate));
    let mut scheme = config.scheme.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed);
    let mut metrics = TrainingMetrics::default();

    let batches = config.epoch_batches();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mut losses = Vec::with_capacity(batches.len());
        let mut p_drawn = 0usize;
        let mut p_sum = 0.0f64;
        for (step, &batch_size) in batches.iter().enumerate() {
            let batch = generate_training_batch(net, &mut scheme, batch_size, &mut rng)?;
            if let Some(p) = batch.batch_probability {
                p_drawn += 1;
                p_sum += p;
            }
            let inputs = EncodedSample::pack(&batch.samples);
            let targets = Assignment::pack(&batch.targets);
            let (probs, cache) = model.forward_train(&inputs)?;
            let loss = cross_entropy_loss(&probs, &targets)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step, loss });
            }
            losses.push(loss);
            let grads = backward(&model, &cache, &targets)?;
            adam_step(&mut model, &grads, &mut adam)?;
        }

        let record = EpochRecord {
            epoch,
            mean_loss: mean(&losses),
            median_loss: median(&losses),
            samples: config.samples_per_epoch,
            wall_clock: started.elapsed(),
            p_drawn,
            p_mean: (p_drawn > 0).then(|| p_sum / p_drawn as f64),
        };
        on_epoch(&record)?;
        metrics.epochs.push(record);

        if let (Some(every), Some(dir)) = (config.checkpoint_every_epochs, &config.checkpoint_dir)
        {
            if epoch % every == 0 {
                let ck = Checkpoint {
                    model: model.clone(),
                    adam: Some(adam.clone()),
                    data_seed: config.data_seed,
                    samples_consumed: (epoch * config.samples_per_epoch) as u64,
                    scheme: config.scheme.name().to_string(),
                };
                ck.save(&dir.join(format!("checkpoint-epoch-{epoch}.umck")))?;
            }
        }
    }

    Ok(TrainingOutcome {
        model,
        adam,
        metrics,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}
