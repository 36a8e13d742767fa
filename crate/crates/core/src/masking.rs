//! Masking distributions and the two-slot Boolean input encoding.
//!
//! A mask `b` decides which node values stay visible in a training sample:
//! `b_i = 1` means node `i` is observed. Five schemes are supported:
//!
//! * `uniform` — masks drawn uniformly from the whole power set;
//! * `sizewise` — a uniform size `k ~ {0..n}` first, then a uniform
//!   arrangement of `k` ones;
//! * `nodewise` — bits set independently with probability `p`, where `p` is
//!   redrawn from `Uniform[0, p_max]` once per batch;
//! * `cycle` — nodewise, but `p` walks a preset list of values instead of
//!   being sampled;
//! * `markov` — a random disease's Markov blanket is unmasked nodewise with
//!   a per-batch `p`; everything else, including the disease, stays masked.
//!
//! The first four ignore the network structure, the last depends on it.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::bn::{Assignment, NoisyOrNetwork};
use crate::inference::Evidence;

#[derive(Debug, Error)]
pub enum MaskingError {
    #[error("nodewise p_max {0} must lie in (0, 1]")]
    BadPMax(f64),
    #[error("observation probability {0} must lie in [0, 1]")]
    BadProbability(f64),
    #[error("deterministic cycle needs a non-empty value list")]
    EmptyCycle,
    #[error("cycle value {0} must lie in [0, 1]")]
    BadCycleValue(f64),
    #[error("operation needs the `{expected}` scheme, got `{found}`")]
    WrongScheme {
        expected: &'static str,
        found: &'static str,
    },
    #[error("mask length {mask} does not match assignment length {assignment}")]
    LengthMismatch { mask: usize, assignment: usize },
    #[error("markov masking needs a network with at least one disease")]
    NoDiseases,
    #[error("scheme `{0}` needs a network to sample from")]
    MissingNetwork(String),
    #[error("scheme `{0}` needs a per-batch observation probability")]
    MissingBatchProbability(String),
    #[error("unknown masking scheme `{0}`")]
    UnknownScheme(String),
    #[error("evidence node {index} out of range for {n} nodes")]
    EvidenceRange { index: usize, n: usize },
}

/// A binary observation vector with its popcount cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    ones: usize,
}

impl Mask {
    pub fn new(bits: Vec<bool>) -> Self {
        let ones = bits.iter().filter(|&&b| b).count();
        Self { bits, ones }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of observed (one) bits.
    pub fn size(&self) -> usize {
        self.ones
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Indices of the observed bits, ascending.
    pub fn ones(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.bits[i]).collect()
    }
}

/// Mutable per-scheme state lives inside the variant (the cycle cursor);
/// everything else is configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskingScheme {
    Uniform,
    Sizewise,
    Nodewise { p_max: f64 },
    DeterministicCycle { values: Vec<f64>, cursor: usize },
    MarkovBlanket,
}

impl MaskingScheme {
    pub fn uniform() -> Self {
        Self::Uniform
    }

    pub fn sizewise() -> Self {
        Self::Sizewise
    }

    pub fn nodewise(p_max: f64) -> Result<Self, MaskingError> {
        if !(p_max > 0.0 && p_max <= 1.0) {
            return Err(MaskingError::BadPMax(p_max));
        }
        Ok(Self::Nodewise { p_max })
    }

    pub fn deterministic_cycle(values: Vec<f64>) -> Result<Self, MaskingError> {
        if values.is_empty() {
            return Err(MaskingError::EmptyCycle);
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MaskingError::BadCycleValue(v));
        }
        Ok(Self::DeterministicCycle { values, cursor: 0 })
    }

    /// The default cycle: 21 evenly spaced values from 0 to 1.
    pub fn default_cycle() -> Self {
        let values = (0..=20).map(|i| i as f64 / 20.0).collect();
        Self::DeterministicCycle { values, cursor: 0 }
    }

    pub fn markov_blanket() -> Self {
        Self::MarkovBlanket
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Sizewise => "sizewise",
            Self::Nodewise { .. } => "nodewise",
            Self::DeterministicCycle { .. } => "cycle",
            Self::MarkovBlanket => "markov",
        }
    }

    /// Parses a scheme name with its default parameters.
    pub fn parse(name: &str) -> Result<Self, MaskingError> {
        match name {
            "uniform" => Ok(Self::uniform()),
            "sizewise" => Ok(Self::sizewise()),
            "nodewise" => Self::nodewise(1.0),
            "cycle" => Ok(Self::default_cycle()),
            "markov" => Ok(Self::markov_blanket()),
            other => Err(MaskingError::UnknownScheme(other.to_string())),
        }
    }

    /// All five scheme names in canonical order.
    pub fn all_names() -> [&'static str; 5] {
        ["uniform", "sizewise", "nodewise", "cycle", "markov"]
    }

    pub fn requires_network(&self) -> bool {
        matches!(self, Self::MarkovBlanket)
    }

    /// Draws the per-batch observation probability for schemes that use one
    /// (`nodewise`, `cycle`, `markov`); `None` for the rest.
    pub fn next_batch_probability<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        match self {
            Self::Uniform | Self::Sizewise => None,
            Self::Nodewise { p_max } => Some(rng.random_range(0.0..=*p_max)),
            Self::DeterministicCycle { .. } => Some(
                self.next_deterministic_cycle_probability()
                    .expect("cycle scheme"),
            ),
            Self::MarkovBlanket => Some(rng.random_range(0.0..=1.0)),
        }
    }

    /// Fresh `p ~ Uniform[0, p_max]`; errors unless the scheme is nodewise.
    pub fn next_nodewise_probability<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<f64, MaskingError> {
        match self {
            Self::Nodewise { p_max } => Ok(rng.random_range(0.0..=*p_max)),
            other => Err(MaskingError::WrongScheme {
                expected: "nodewise",
                found: other.name(),
            }),
        }
    }

    /// Returns the value under the cursor and advances it cyclically.
    pub fn next_deterministic_cycle_probability(&mut self) -> Result<f64, MaskingError> {
        match self {
            Self::DeterministicCycle { values, cursor } => {
                let v = values[*cursor];
                *cursor = (*cursor + 1) % values.len();
                Ok(v)
            }
            other => Err(MaskingError::WrongScheme {
                expected: "cycle",
                found: other.name(),
            }),
        }
    }

    /// Samples one mask. `net` is required for the markov scheme, `p` for
    /// the schemes that draw a per-batch probability.
    pub fn sample_mask<R: Rng + ?Sized>(
        &self,
        n: usize,
        net: Option<&NoisyOrNetwork>,
        p: Option<f64>,
        rng: &mut R,
    ) -> Result<Mask, MaskingError> {
        match self {
            Self::Uniform => Ok(sample_uniform_mask(n, rng)),
            Self::Sizewise => Ok(sample_sizewise_mask(n, rng)),
            Self::Nodewise { .. } | Self::DeterministicCycle { .. } => {
                let p = p.ok_or_else(|| {
                    MaskingError::MissingBatchProbability(self.name().to_string())
                })?;
                sample_nodewise_mask(n, p, rng)
            }
            Self::MarkovBlanket => {
                let net =
                    net.ok_or_else(|| MaskingError::MissingNetwork(self.name().to_string()))?;
                let p = p.ok_or_else(|| {
                    MaskingError::MissingBatchProbability(self.name().to_string())
                })?;
                sample_markov_mask(net, p, rng)
            }
        }
    }
}

/// Uniform over the power set: `n` independent fair bits.
pub fn sample_uniform_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mask {
    Mask::new((0..n).map(|_| rng.random_bool(0.5)).collect())
}

/// Uniform over mask sizes: draw `k ~ Uniform{0..n}`, then shuffle a
/// template of `k` ones and `n - k` zeros.
pub fn sample_sizewise_mask<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mask {
    let k = rng.random_range(0..=n);
    let mut bits: Vec<bool> = (0..n).map(|i| i < k).collect();
    bits.shuffle(rng);
    Mask::new(bits)
}

/// Independent bits, each observed with probability `p`.
pub fn sample_nodewise_mask<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<Mask, MaskingError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MaskingError::BadProbability(p));
    }
    Ok(Mask::new((0..n).map(|_| rng.random_bool(p)).collect()))
}

/// Unmasks a random disease's Markov blanket nodewise with probability `p`.
/// Bits outside the blanket, including the chosen disease itself, stay 0.
pub fn sample_markov_mask<R: Rng + ?Sized>(
    net: &NoisyOrNetwork,
    p: f64,
    rng: &mut R,
) -> Result<Mask, MaskingError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(MaskingError::BadProbability(p));
    }
    if net.num_diseases() == 0 {
        return Err(MaskingError::NoDiseases);
    }
    let disease = net.disease_global(rng.random_range(0..net.num_diseases()));
    let blanket = net
        .markov_blanket(disease)
        .expect("disease index is in range");
    let mut bits = vec![false; net.n()];
    for i in blanket {
        bits[i] = rng.random_bool(p);
    }
    Ok(Mask::new(bits))
}

/// A masked assignment in the two-slot Boolean encoding: node `i` occupies
/// slots `(2i, 2i+1)` with `(0,0)` masked, `(1,0)` observed-false and
/// `(0,1)` observed-true. `(1,1)` never occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    slots: Vec<f64>,
}

impl EncodedSample {
    /// Number of nodes (half the slot count).
    pub fn num_nodes(&self) -> usize {
        self.slots.len() / 2
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    /// The `(false-slot, true-slot)` code of node `i`.
    pub fn node_code(&self, i: usize) -> (f64, f64) {
        (self.slots[2 * i], self.slots[2 * i + 1])
    }

    /// Encodes evidence over `n` nodes, all other nodes masked.
    pub fn from_evidence(n: usize, ev: &Evidence) -> Result<Self, MaskingError> {
        let mut slots = vec![0.0; 2 * n];
        for &(i, v) in ev.items() {
            if i >= n {
                return Err(MaskingError::EvidenceRange { index: i, n });
            }
            slots[2 * i + usize::from(v)] = 1.0;
        }
        Ok(Self { slots })
    }

    /// True when every node code is one of the three legal patterns.
    pub fn is_valid_encoding(&self) -> bool {
        self.slots.chunks(2).all(|c| {
            let pattern = (c[0], c[1]);
            pattern == (0.0, 0.0) || pattern == (1.0, 0.0) || pattern == (0.0, 1.0)
        })
    }

    /// Packs samples into a `(batch, 2n)` network input matrix.
    pub fn pack(batch: &[EncodedSample]) -> Array2<f64> {
        let rows = batch.len();
        let cols = batch.first().map_or(0, |s| s.slots.len());
        let mut out = Array2::zeros((rows, cols));
        for (r, s) in batch.iter().enumerate() {
            for (c, &v) in s.slots.iter().enumerate() {
                out[[r, c]] = v;
            }
        }
        out
    }
}

/// Applies a mask to an assignment, producing the encoded network input.
pub fn apply_mask(a: &Assignment, b: &Mask) -> Result<EncodedSample, MaskingError> {
    if a.len() != b.len() {
        return Err(MaskingError::LengthMismatch {
            mask: b.len(),
            assignment: a.len(),
        });
    }
    let mut slots = vec![0.0; 2 * a.len()];
    for i in 0..a.len() {
        if b.is_set(i) {
            slots[2 * i + usize::from(a.get(i))] = 1.0;
        }
    }
    Ok(EncodedSample { slots })
}

/// Empirical histogram of mask sizes under a scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSizeHistogram {
    counts: Vec<u64>,
}

impl MaskSizeHistogram {
    /// Count of masks with exactly `k` ones.
    pub fn count(&self, k: usize) -> u64 {
        self.counts[k]
    }

    /// Counts indexed by size `0..=n`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Two-column plot data `(size, count)` with a header naming the run.
    pub fn to_plot_data(&self, scheme: &str, n: usize, samples: usize, seed: u64) -> String {
        let mut out = format!("# scheme={scheme} n={n} samples={samples} seed={seed}\n");
        for (size, count) in self.counts.iter().enumerate() {
            out.push_str(&format!("{size} {count}\n"));
        }
        out
    }
}

/// Draws `samples` masks from the scheme and tallies their sizes. Schemes
/// with a per-batch probability redraw it for every mask, so the histogram
/// reflects the scheme's marginal size distribution (a full pass over the
/// value list for the cycle scheme when `samples` is a multiple of its
/// length).
pub fn mask_size_histogram<R: Rng + ?Sized>(
    scheme: &mut MaskingScheme,
    n: usize,
    net: Option<&NoisyOrNetwork>,
    samples: usize,
    rng: &mut R,
) -> Result<MaskSizeHistogram, MaskingError> {
    let mut counts = vec![0u64; n + 1];
    for _ in 0..samples {
        let p = scheme.next_batch_probability(rng);
        let mask = scheme.sample_mask(n, net, p, rng)?;
        counts[mask.size()] += 1;
    }
    Ok(MaskSizeHistogram { counts })
}
