use rand::distributions::Distribution;
use rand_distr::WeightedAliasIndex;

use super::{Corpus, CorpusError};
use crate::neuralcore::RngStream;

const SUM_TOL: f64 = 1e-9;

/// Probability distribution over token ids with an alias table for O(1) draws.
#[derive(Debug, Clone)]
pub struct UnigramDist {
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl PartialEq for UnigramDist {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl UnigramDist {
    /// Validates `probs`: non-negative, finite, summing to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self, CorpusError> {
        if probs.is_empty() {
            return Err(CorpusError::InvalidDistribution("empty support".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CorpusError::InvalidDistribution("negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(CorpusError::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        let alias = WeightedAliasIndex::new(probs.clone())
            .map_err(|e| CorpusError::InvalidDistribution(format!("alias table: {e}")))?;
        Ok(Self { probs, alias })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, CorpusError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(CorpusError::InvalidDistribution("weights must have a positive finite sum".into()));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self, CorpusError> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&w)
    }

    /// Empirical unigram distribution of a corpus over its whole vocabulary.
    pub fn from_corpus(corpus: &Corpus) -> Result<Self, CorpusError> {
        Self::from_counts(&corpus.counts())
    }

    pub fn uniform(v: usize) -> Result<Self, CorpusError> {
        if v == 0 {
            return Err(CorpusError::InvalidDistribution("empty support".into()));
        }
        Self::new(vec![1.0 / v as f64; v])
    }

    /// Power law `p(rank) ~ rank^-exponent` over `v` ids, id 0 most likely.
    pub fn zipf(v: usize, exponent: f64) -> Result<Self, CorpusError> {
        let w: Vec<f64> = (1..=v).map(|r| (r as f64).powf(-exponent)).collect();
        Self::from_weights(&w)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        let first = self.probs[0];
        self.probs.iter().all(|&p| (p - first).abs() <= 1e-12)
    }

    /// Distribution of `perm[id]`: mass of id `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &super::Permutation) -> Result<Self, CorpusError> {
        if perm.len() != self.len() {
            return Err(CorpusError::NotBijection("permutation size differs from support".into()));
        }
        let mut out = vec![0.0; self.len()];
        for (i, &p) in self.probs.iter().enumerate() {
            out[perm.apply(i as u32) as usize] = p;
        }
        Self::new(out)
    }
}

/// Draws one token id; `i` is returned with probability `probs[i]`.
#[inline]
pub fn sample_unigram(dist: &UnigramDist, rng: &mut RngStream) -> u32 {
    dist.alias.sample(rng) as u32
}

/// Distribution of pair distances for the flat parentheses generator.
#[derive(Debug, Clone)]
pub struct LengthDist {
    support: Vec<usize>,
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl PartialEq for LengthDist {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support && self.probs == other.probs
    }
}

impl LengthDist {
    pub fn new(support: Vec<usize>, probs: Vec<f64>) -> Result<Self, CorpusError> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(CorpusError::InvalidDistribution("support and probabilities differ in length".into()));
        }
        if support.iter().any(|&d| d == 0) {
            return Err(CorpusError::InvalidDistribution("distances must be >= 1".into()));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != support.len() {
            return Err(CorpusError::InvalidDistribution("repeated distance in support".into()));
        }
        let check = UnigramDist::new(probs)?;
        Ok(Self {
            support,
            probs: check.probs,
            alias: check.alias,
        })
    }

    /// From `(distance, count)` pairs as found in a histogram file.
    pub fn from_counts(pairs: &[(usize, u64)]) -> Result<Self, CorpusError> {
        let total: u64 = pairs.iter().map(|p| p.1).sum();
        if total == 0 {
            return Err(CorpusError::InvalidDistribution("histogram has no mass".into()));
        }
        let (support, probs) = pairs.iter().map(|&(d, c)| (d, c as f64 / total as f64)).unzip();
        Self::new(support, probs)
    }

    /// `P(d) ~ p (1-p)^(d-1)` on `1..=max`, renormalized.
    pub fn truncated_geometric(p: f64, max: usize) -> Result<Self, CorpusError> {
        if !(p > 0.0 && p < 1.0) || max == 0 {
            return Err(CorpusError::InvalidDistribution("geometric needs 0 < p < 1 and max >= 1".into()));
        }
        let w: Vec<f64> = (1..=max).map(|d| p * (1.0 - p).powi(d as i32 - 1)).collect();
        let sum: f64 = w.iter().sum();
        Self::new((1..=max).collect(), w.iter().map(|x| x / sum).collect())
    }

    /// Default histogram: truncated geometric, p = 0.3, support 1..=50.
    pub fn default_dependency_lengths() -> Self {
        Self::truncated_geometric(0.3, 50).expect("valid constants")
    }

    /// All mass on a single distance.
    pub fn point(d: usize) -> Result<Self, CorpusError> {
        Self::new(vec![d], vec![1.0])
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max(&self) -> usize {
        *self.support.iter().max().expect("non-empty")
    }

    pub fn prob_of(&self, d: usize) -> f64 {
        self.support.iter().position(|&s| s == d).map_or(0.0, |i| self.probs[i])
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        self.support[self.alias.sample(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_outcome_always_zero() {
        let d = UnigramDist::new(vec![1.0]).unwrap();
        let mut rng = RngStream::new(3);
        assert!((0..1000).all(|_| sample_unigram(&d, &mut rng) == 0));
    }

    #[test]
    fn counts_give_exact_probabilities() {
        // "a a b"
        let d = UnigramDist::from_counts(&[2, 1]).unwrap();
        assert_eq!(d.probs(), &[2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(UnigramDist::new(vec![0.5, 0.4]).is_err());
        assert!(UnigramDist::new(vec![1.5, -0.5]).is_err());
        assert!(UnigramDist::new(vec![]).is_err());
        assert!(LengthDist::new(vec![0, 1], vec![0.5, 0.5]).is_err());
        assert!(LengthDist::new(vec![2, 2], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn geometric_default_shape() {
        let d = LengthDist::default_dependency_lengths();
        assert_eq!(d.support().len(), 50);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d.prob_of(2) / d.prob_of(1) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_ids_never_drawn() {
        let d = UnigramDist::new(vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let mut rng = RngStream::new(1);
        for _ in 0..10_000 {
            let x = sample_unigram(&d, &mut rng);
            assert!(x == 1 || x == 3);
        }
    }
}
