use super::{sample_unigram, Corpus, CorpusError, SourceKind, UnigramDist};
use crate::neuralcore::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomKind {
    Uniform,
    Zipf,
}

/// `n` independent draws from `dist`.
///
/// For [`RandomKind::Uniform`] the distribution must itself be uniform;
/// [`RandomKind::Zipf`] accepts any unigram distribution (typically the
/// empirical one of the evaluation language).
pub fn gen_random_corpus(kind: RandomKind, dist: &UnigramDist, n: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if n == 0 {
        return Err(CorpusError::EmptyLength);
    }
    if kind == RandomKind::Uniform && !dist.is_uniform() {
        return Err(CorpusError::NotUniform);
    }
    let mut rng = RngStream::new(seed);
    let tokens = (0..n).map(|_| sample_unigram(dist, &mut rng)).collect();
    let source = match kind {
        RandomKind::Uniform => SourceKind::Uniform,
        RandomKind::Zipf => SourceKind::Zipf,
    };
    Corpus::new(tokens, dist.len(), source, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_from_seed() {
        let d = UnigramDist::new(vec![0.75, 0.25]).unwrap();
        let a = gen_random_corpus(RandomKind::Zipf, &d, 4, 99).unwrap();
        let b = gen_random_corpus(RandomKind::Zipf, &d, 4, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let c = gen_random_corpus(RandomKind::Zipf, &d, 64, 100).unwrap();
        let e = gen_random_corpus(RandomKind::Zipf, &d, 64, 101).unwrap();
        assert_ne!(c.tokens(), e.tokens());
    }

    #[test]
    fn rejects_zero_length_and_non_uniform() {
        let d = UnigramDist::new(vec![0.75, 0.25]).unwrap();
        assert!(matches!(gen_random_corpus(RandomKind::Zipf, &d, 0, 1), Err(CorpusError::EmptyLength)));
        assert!(matches!(gen_random_corpus(RandomKind::Uniform, &d, 5, 1), Err(CorpusError::NotUniform)));
    }

    #[test]
    fn zipf_sample_contains_unk_when_it_has_mass() {
        // id 2 plays the unknown-word token
        let d = UnigramDist::new(vec![0.5, 0.3, 0.2]).unwrap();
        let c = gen_random_corpus(RandomKind::Zipf, &d, 1000, 5).unwrap();
        assert!(c.tokens().contains(&2));
    }
}
