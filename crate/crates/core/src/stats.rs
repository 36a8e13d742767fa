//! Goodness-of-fit helpers for the masking diagnostics.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("observed and expected lengths differ: {observed} vs {expected}")]
    LengthMismatch { observed: usize, expected: usize },
    #[error("need at least two merged bins, got {0}")]
    TooFewBins(usize),
    #[error("expected probabilities must be positive and sum to 1, got {0}")]
    BadProbabilities(f64),
}

/// Outcome of a chi-square test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    /// True when the data are consistent with the hypothesis at level `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Bins with expected count below this are merged with their neighbour
/// before the statistic is computed.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Merges adjacent cells left to right until each group's expected count
/// reaches the floor; a trailing underfull group is folded into the last.
fn merge_bins(observed: &[u64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected.iter()) {
        acc_obs += o as f64;
        acc_exp += e;
        if acc_exp >= MIN_EXPECTED_COUNT {
            merged.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc_obs;
                last.1 += acc_exp;
            }
            None => merged.push((acc_obs, acc_exp)),
        }
    }
    merged
}

fn chi_square_from_cells(cells: &[(f64, f64)]) -> Result<ChiSquareTest, StatsError> {
    if cells.len() < 2 {
        return Err(StatsError::TooFewBins(cells.len()));
    }
    let statistic: f64 = cells
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let degrees_of_freedom = cells.len() - 1;
    let dist = ChiSquared::new(degrees_of_freedom as f64).expect("positive dof");
    let p_value = 1.0 - dist.cdf(statistic);
    Ok(ChiSquareTest {
        statistic,
        degrees_of_freedom,
        p_value,
    })
}

/// Chi-square goodness of fit of observed counts against cell
/// probabilities. Sparse cells are merged first.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareTest, StatsError> {
    if observed.len() != probs.len() {
        return Err(StatsError::LengthMismatch {
            observed: observed.len(),
            expected: probs.len(),
        });
    }
    let total_p: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0) || (total_p - 1.0).abs() > 1e-9 {
        return Err(StatsError::BadProbabilities(total_p));
    }
    let total: u64 = observed.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|&p| p * total as f64).collect();
    chi_square_from_cells(&merge_bins(observed, &expected))
}

/// Two-sample chi-square test of homogeneity: do two count histograms come
/// from the same distribution? Cells sparse under the pooled estimate are
/// merged first.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            observed: a.len(),
            expected: b.len(),
        });
    }
    let total_a: f64 = a.iter().sum::<u64>() as f64;
    let total_b: f64 = b.iter().sum::<u64>() as f64;
    let total = total_a + total_b;

    // Merge on pooled expected counts, tracking both samples.
    let mut cells: Vec<(f64, f64, f64)> = Vec::new(); // (obs_a, obs_b, pooled_p)
    let mut acc = (0.0, 0.0, 0.0);
    for (&oa, &ob) in a.iter().zip(b.iter()) {
        acc.0 += oa as f64;
        acc.1 += ob as f64;
        acc.2 += (oa + ob) as f64 / total;
        let min_expected = (acc.2 * total_a).min(acc.2 * total_b);
        if min_expected >= MIN_EXPECTED_COUNT {
            cells.push(acc);
            acc = (0.0, 0.0, 0.0);
        }
    }
    if acc.2 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
                last.2 += acc.2;
            }
            None => cells.push(acc),
        }
    }
    if cells.len() < 2 {
        return Err(StatsError::TooFewBins(cells.len()));
    }

    let mut statistic = 0.0;
    for &(oa, ob, p) in &cells {
        let ea = p * total_a;
        let eb = p * total_b;
        statistic += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
    }
    let degrees_of_freedom = cells.len() - 1;
    let dist = ChiSquared::new(degrees_of_freedom as f64).expect("positive dof");
    Ok(ChiSquareTest {
        statistic,
        degrees_of_freedom,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Probability mass function of `Binomial(n, p)` over `0..=n`.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let dist = Binomial::new(p, n as u64).expect("valid binomial");
    (0..=n as u64).map(|k| dist.pmf(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_pmf_sums_to_one() {
        let pmf = binomial_pmf(24, 0.5);
        assert_eq!(pmf.len(), 25);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Symmetry at p = 0.5.
        assert!((pmf[3] - pmf[21]).abs() < 1e-15);
    }

    #[test]
    fn gof_accepts_matching_counts() {
        // Exactly proportional counts give statistic 0.
        let observed = [250u64, 250, 250, 250];
        let probs = [0.25; 4];
        let test = chi_square_gof(&observed, &probs).unwrap();
        assert!(test.statistic.abs() < 1e-12);
        assert!(test.passes(0.01));
    }

    #[test]
    fn gof_rejects_grossly_skewed_counts() {
        let observed = [900u64, 50, 25, 25];
        let probs = [0.25; 4];
        let test = chi_square_gof(&observed, &probs).unwrap();
        assert!(!test.passes(0.01));
    }

    #[test]
    fn sparse_tails_are_merged() {
        // Binomial(24, .5) has vanishing tail mass; with only 100 samples
        // most tail bins fall below the floor and must merge rather than
        // blow up the statistic.
        let probs = binomial_pmf(24, 0.5);
        let mut observed = vec![0u64; 25];
        observed[12] = 100;
        let test = chi_square_gof(&observed, &probs).unwrap();
        assert!(test.degrees_of_freedom < 24);
    }

    #[test]
    fn homogeneity_accepts_identical_histograms() {
        let a = [100u64, 200, 300, 150];
        let test = chi_square_homogeneity(&a, &a).unwrap();
        assert!(test.statistic.abs() < 1e-12);
        assert!(test.passes(0.01));
    }

    #[test]
    fn homogeneity_rejects_disjoint_histograms() {
        let a = [1000u64, 0, 0, 1000];
        let b = [0u64, 1000, 1000, 0];
        let test = chi_square_homogeneity(&a, &b).unwrap();
        assert!(!test.passes(0.01));
    }

    #[test]
    fn input_validation() {
        assert!(chi_square_gof(&[1, 2], &[0.5]).is_err());
        assert!(chi_square_gof(&[1, 2], &[0.9, 0.3]).is_err());
        assert!(chi_square_homogeneity(&[1], &[1, 2]).is_err());
    }
}
