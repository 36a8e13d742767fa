//! Seeded random network generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerSizes, NetworkError, NoisyOrNetwork};

/// Sampling intervals for the network parameters, one per role.
///
/// Defaults lean towards diagnosis-like rarity: risk factors are usually
/// false and leaks are high, so most nodes stay off most of the time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRanges {
    /// Interval for `P(RF = 0)` priors.
    pub rf_prior: (f64, f64),
    /// Interval for disease and symptom leak probabilities.
    pub leak: (f64, f64),
    /// Interval for edge inhibition weights.
    pub weight: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            rf_prior: (0.5, 0.95),
            leak: (0.7, 0.99),
            weight: (0.1, 0.9),
        }
    }
}

impl ParamRanges {
    fn validate(&self) -> Result<(), NetworkError> {
        for (name, (lo, hi)) in [
            ("rf_prior", self.rf_prior),
            ("leak", self.leak),
            ("weight", self.weight),
        ] {
            // Intervals touching 0 or 1 would break the positivity invariant.
            if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
                return Err(NetworkError::BadInterval { name, lo, hi });
            }
        }
        Ok(())
    }
}

/// Generates a random three-layer network, deterministically from `seed`.
///
/// Edges are drawn independently with probability `edge_probability`; a
/// child's parent row is redrawn until it is non-empty, so every disease has
/// at least one risk factor and every symptom at least one disease.
pub fn generate_random_network(
    seed: u64,
    layers: LayerSizes,
    edge_probability: f64,
    ranges: &ParamRanges,
) -> Result<NoisyOrNetwork, NetworkError> {
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(NetworkError::BadEdgeProbability(edge_probability));
    }
    ranges.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rf_priors = draw_vec(&mut rng, layers.risk_factors, ranges.rf_prior);
    let disease_leaks = draw_vec(&mut rng, layers.diseases, ranges.leak);
    let disease_parents = draw_edges(
        &mut rng,
        layers.risk_factors,
        layers.diseases,
        edge_probability,
        ranges.weight,
    );
    let symptom_leaks = draw_vec(&mut rng, layers.symptoms, ranges.leak);
    let symptom_parents = draw_edges(
        &mut rng,
        layers.diseases,
        layers.symptoms,
        edge_probability,
        ranges.weight,
    );

    NoisyOrNetwork::new(
        layers,
        rf_priors,
        disease_leaks,
        disease_parents,
        symptom_leaks,
        symptom_parents,
        Some(seed),
    )
}

fn draw_vec(rng: &mut ChaCha8Rng, count: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(lo..=hi)).collect()
}

fn draw_edges(
    rng: &mut ChaCha8Rng,
    parent_count: usize,
    child_count: usize,
    edge_probability: f64,
    weight_range: (f64, f64),
) -> Vec<Vec<(usize, f64)>> {
    (0..child_count)
        .map(|_| {
            let parents = loop {
                let row: Vec<usize> = (0..parent_count)
                    .filter(|_| rng.random_bool(edge_probability))
                    .collect();
                if !row.is_empty() {
                    break row;
                }
            };
            parents
                .into_iter()
                .map(|p| (p, rng.random_range(weight_range.0..=weight_range.1)))
                .collect()
        })
        .collect()
}
