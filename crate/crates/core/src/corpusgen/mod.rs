//! Corpus generation, ingestion, vocabulary remapping and persistence.
//!
//! Every corpus is a flat sequence of `u32` token ids below `vocab_size`.
//! Generators are pure functions of `(config, seed)`.

mod dist;
mod generate;
pub mod grammar;
pub mod io;
mod parens;
mod random;
mod remap;
mod text;

pub use dist::{sample_unigram, LengthDist, UnigramDist};
pub use generate::GenSpec;
pub use parens::{
    gen_flat_parens, gen_nesting_parens, infer_flat_pairs, infer_nesting_pairs, validate_flat, validate_nesting,
    NestGenConfig, PairTrace,
};
pub use random::{gen_random_corpus, RandomKind};
pub use remap::{remap_vocab, Permutation};
pub use text::{detokenize, ingest_text, IngestOptions, UNK_TOKEN};

use std::collections::HashMap;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus length must be positive")]
    EmptyLength,
    #[error("balanced parentheses corpora need an even length, got {0}")]
    OddLength(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("uniform corpus requested with a non-uniform distribution")]
    NotUniform,
    #[error("P(open) must lie in (0, 0.5), got {0}")]
    InvalidOpenProbability(f64),
    #[error("mapping is not a bijection: {0}")]
    NotBijection(String),
    #[error("input text contains no tokens")]
    EmptyInput,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("token id {id} at position {pos} out of range for vocabulary size {vocab_size}")]
    IdOutOfRange { pos: u64, id: u32, vocab_size: u32 },
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated payload: expected {expected} tokens, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("unexpected trailing bytes after payload")]
    TrailingData,
    #[error("malformed line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("structure check failed at position {pos}: {msg}")]
    Structure { pos: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    /// Stable short code, distinct for every file-format failure.
    pub fn code(&self) -> &'static str {
        match self {
            CorpusError::EmptyLength => "empty-length",
            CorpusError::OddLength(_) => "odd-length",
            CorpusError::InvalidDistribution(_) => "invalid-distribution",
            CorpusError::NotUniform => "not-uniform",
            CorpusError::InvalidOpenProbability(_) => "invalid-p-open",
            CorpusError::NotBijection(_) => "not-bijection",
            CorpusError::EmptyInput => "empty-input",
            CorpusError::InvalidVocab(_) => "invalid-vocab",
            CorpusError::IdOutOfRange { .. } => "id-out-of-range",
            CorpusError::BadMagic(_) => "bad-magic",
            CorpusError::UnsupportedVersion(_) => "unsupported-version",
            CorpusError::Truncated { .. } => "truncated",
            CorpusError::TrailingData => "trailing-data",
            CorpusError::Parse { .. } => "parse",
            CorpusError::Structure { .. } => "structure",
            CorpusError::Io(_) => "io",
        }
    }
}

/// Where a corpus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Uniform,
    Zipf,
    NestParens,
    FlatParens,
    Text,
    /// Sentences from the built-in agreement grammar.
    Grammar,
    /// Read from a corpus file; the file header carries no provenance.
    External,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceKind::Uniform => "uniform",
            SourceKind::Zipf => "zipf",
            SourceKind::NestParens => "nest",
            SourceKind::FlatParens => "flat",
            SourceKind::Text => "text",
            SourceKind::Grammar => "grammar",
            SourceKind::External => "external",
        };
        f.write_str(s)
    }
}

/// Token ids plus the vocabulary size they are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    tokens: Vec<u32>,
    vocab_size: usize,
    pub source_kind: SourceKind,
    pub seed: u64,
}

impl Corpus {
    pub fn new(tokens: Vec<u32>, vocab_size: usize, source_kind: SourceKind, seed: u64) -> Result<Self, CorpusError> {
        if vocab_size == 0 || vocab_size > u32::MAX as usize {
            return Err(CorpusError::InvalidVocab(format!("vocabulary size {vocab_size}")));
        }
        if let Some((pos, &id)) = tokens.iter().enumerate().find(|(_, &t)| t as usize >= vocab_size) {
            return Err(CorpusError::IdOutOfRange {
                pos: pos as u64,
                id,
                vocab_size: vocab_size as u32,
            });
        }
        Ok(Self {
            tokens,
            vocab_size,
            source_kind,
            seed,
        })
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<u32> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Same tokens, declared against a larger vocabulary.
    pub fn widen_vocab(mut self, vocab_size: usize) -> Result<Self, CorpusError> {
        if vocab_size < self.vocab_size {
            return Err(CorpusError::InvalidVocab(format!(
                "cannot shrink vocabulary from {} to {vocab_size}",
                self.vocab_size
            )));
        }
        self.vocab_size = vocab_size;
        Ok(self)
    }

    /// Splits off the last `n` tokens as a second corpus.
    pub fn split_tail(mut self, n: usize) -> (Corpus, Corpus) {
        let cut = self.tokens.len().saturating_sub(n);
        let tail = self.tokens.split_off(cut);
        let tail = Corpus {
            tokens: tail,
            vocab_size: self.vocab_size,
            source_kind: self.source_kind,
            seed: self.seed,
        };
        (self, tail)
    }

    /// Contiguous sub-range `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Corpus {
        Corpus {
            tokens: self.tokens[start..end].to_vec(),
            vocab_size: self.vocab_size,
            source_kind: self.source_kind,
            seed: self.seed,
        }
    }

    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.vocab_size];
        for &t in &self.tokens {
            counts[t as usize] += 1;
        }
        counts
    }
}

/// Ordered token strings; a token's id is its index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    unk_id: u32,
}

impl Vocab {
    pub fn new(entries: Vec<String>, unk_id: u32) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::InvalidVocab("empty vocabulary".into()));
        }
        if unk_id as usize >= entries.len() {
            return Err(CorpusError::InvalidVocab(format!(
                "unk id {unk_id} outside vocabulary of {}",
                entries.len()
            )));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() || e.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidVocab(format!("entry {i} is empty or contains whitespace")));
            }
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(CorpusError::InvalidVocab(format!("duplicate entry {e:?}")));
            }
        }
        Ok(Self { entries, index, unk_id })
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(self.unk_id)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }
}
