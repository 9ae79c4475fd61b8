use super::{
    gen_flat_parens, gen_nesting_parens, gen_random_corpus, Corpus, CorpusError, LengthDist, NestGenConfig, PairTrace,
    RandomKind, UnigramDist,
};

/// Declarative description of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum GenSpec {
    Uniform { vocab_size: usize },
    Zipf { unigram: UnigramDist },
    Nest { p_open: f64, unigram: UnigramDist },
    Flat { unigram: UnigramDist, lengths: LengthDist },
}

impl GenSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GenSpec::Uniform { .. } => "uniform",
            GenSpec::Zipf { .. } => "zipf",
            GenSpec::Nest { .. } => "nest",
            GenSpec::Flat { .. } => "flat",
        }
    }

    /// Generates `length` tokens; parentheses kinds also return their trace.
    pub fn generate(&self, length: usize, seed: u64) -> Result<(Corpus, Option<PairTrace>), CorpusError> {
        match self {
            GenSpec::Uniform { vocab_size } => {
                let d = UnigramDist::uniform(*vocab_size)?;
                Ok((gen_random_corpus(RandomKind::Uniform, &d, length, seed)?, None))
            }
            GenSpec::Zipf { unigram } => Ok((gen_random_corpus(RandomKind::Zipf, unigram, length, seed)?, None)),
            GenSpec::Nest { p_open, unigram } => {
                let cfg = NestGenConfig::new(*p_open, length, unigram.clone())?;
                let (c, t) = gen_nesting_parens(&cfg, seed)?;
                Ok((c, Some(t)))
            }
            GenSpec::Flat { unigram, lengths } => {
                let (c, t) = gen_flat_parens(unigram, lengths, length, seed)?;
                Ok((c, Some(t)))
            }
        }
    }
}
