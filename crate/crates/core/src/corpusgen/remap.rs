use rand::seq::SliceRandom;

use super::{Corpus, CorpusError};
use crate::neuralcore::RngStream;

/// A bijection on `0..V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<u32>,
}

impl Permutation {
    pub fn new(map: Vec<u32>) -> Result<Self, CorpusError> {
        let mut seen = vec![false; map.len()];
        for (i, &m) in map.iter().enumerate() {
            match seen.get_mut(m as usize) {
                None => {
                    return Err(CorpusError::NotBijection(format!(
                        "entry {i} maps to {m}, outside 0..{}",
                        map.len()
                    )))
                }
                Some(s) if *s => return Err(CorpusError::NotBijection(format!("{m} is hit twice"))),
                Some(s) => *s = true,
            }
        }
        Ok(Self { map })
    }

    pub fn identity(v: usize) -> Self {
        Self {
            map: (0..v as u32).collect(),
        }
    }

    /// Uniformly random permutation (Fisher-Yates).
    pub fn random(v: usize, rng: &mut RngStream) -> Self {
        let mut map: Vec<u32> = (0..v as u32).collect();
        map.shuffle(rng);
        Self { map }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn apply(&self, id: u32) -> u32 {
        self.map[id as usize]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u32; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m as usize] = i as u32;
        }
        Self { map: inv }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.map
    }
}

/// Relabels every token through `perm`, e.g. to give each language a
/// disjoint word-to-index mapping.
pub fn remap_vocab(corpus: &Corpus, perm: &Permutation) -> Result<Corpus, CorpusError> {
    if perm.len() != corpus.vocab_size() {
        return Err(CorpusError::NotBijection(format!(
            "permutation over {} ids applied to vocabulary of {}",
            perm.len(),
            corpus.vocab_size()
        )));
    }
    let tokens = corpus.tokens().iter().map(|&t| perm.apply(t)).collect();
    Corpus::new(tokens, corpus.vocab_size(), corpus.source_kind, corpus.seed)
}
