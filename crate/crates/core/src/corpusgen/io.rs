//! File formats.
//!
//! Corpus file (all integers little-endian):
//!
//! ```text
//! "TILT" | version: u8 = 1 | V: u32 | count: u64 | count x token: u32
//! ```
//!
//! Pair trace sidecar: `"TILP" | version: u8 = 1 | count: u64 |
//! count x (open: u64, close: u64, token: u32)`.
//!
//! Vocabulary file: UTF-8, one token per line, line number = id; the line
//! `<unk>` marks the unknown token. Length histogram file: lines of
//! `distance count`; blank lines and `#` comments are skipped.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Corpus, CorpusError, LengthDist, PairTrace, SourceKind, Vocab, UNK_TOKEN};

pub const CORPUS_MAGIC: [u8; 4] = *b"TILT";
pub const TRACE_MAGIC: [u8; 4] = *b"TILP";
pub const FORMAT_VERSION: u8 = 1;

const READ_BUF: usize = 64 * 1024;

pub fn write_corpus_to<W: Write>(mut w: W, corpus: &Corpus) -> Result<(), CorpusError> {
    w.write_all(&CORPUS_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(corpus.vocab_size() as u32).to_le_bytes())?;
    w.write_all(&(corpus.len() as u64).to_le_bytes())?;
    for &t in corpus.tokens() {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<(), CorpusError> {
    let f = File::create(path)?;
    write_corpus_to(BufWriter::new(f), corpus)
}

/// Streaming reader over a corpus file; holds only a fixed-size buffer.
pub struct CorpusReader<R> {
    inner: R,
    vocab_size: u32,
    count: u64,
    read: u64,
    finished: bool,
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, io::Error> {
    match r.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(e),
    }
}

impl<R: Read> CorpusReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CorpusError> {
        let mut magic = [0u8; 4];
        if !read_exact_or(&mut inner, &mut magic)? {
            return Err(CorpusError::BadMagic(magic));
        }
        if magic != CORPUS_MAGIC {
            return Err(CorpusError::BadMagic(magic));
        }
        let mut header = [0u8; 13];
        if !read_exact_or(&mut inner, &mut header[..1])? {
            return Err(CorpusError::Truncated { expected: 0, found: 0 });
        }
        if header[0] != FORMAT_VERSION {
            return Err(CorpusError::UnsupportedVersion(header[0]));
        }
        if !read_exact_or(&mut inner, &mut header[1..])? {
            return Err(CorpusError::Truncated { expected: 0, found: 0 });
        }
        let vocab_size = u32::from_le_bytes(header[1..5].try_into().unwrap());
        let count = u64::from_le_bytes(header[5..13].try_into().unwrap());
        if vocab_size == 0 {
            return Err(CorpusError::InvalidVocab("declared vocabulary size 0".into()));
        }
        Ok(Self {
            inner,
            vocab_size,
            count,
            read: 0,
            finished: false,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    /// Token count declared in the header.
    pub fn declared_len(&self) -> u64 {
        self.count
    }

    fn next_token(&mut self) -> Result<Option<u32>, CorpusError> {
        if self.read == self.count {
            if !self.finished {
                self.finished = true;
                let mut probe = [0u8; 1];
                if self.inner.read(&mut probe)? != 0 {
                    return Err(CorpusError::TrailingData);
                }
            }
            return Ok(None);
        }
        let mut b = [0u8; 4];
        if !read_exact_or(&mut self.inner, &mut b)? {
            return Err(CorpusError::Truncated {
                expected: self.count,
                found: self.read,
            });
        }
        let id = u32::from_le_bytes(b);
        if id >= self.vocab_size {
            return Err(CorpusError::IdOutOfRange {
                pos: self.read,
                id,
                vocab_size: self.vocab_size,
            });
        }
        self.read += 1;
        Ok(Some(id))
    }
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::new(BufReader::with_capacity(READ_BUF, File::open(path)?))
    }
}

impl<R: Read> Iterator for CorpusReader<R> {
    type Item = Result<u32, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_token() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => None,
            Err(e) => {
                self.read = self.count;
                self.finished = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_corpus_from<R: Read>(r: R) -> Result<Corpus, CorpusError> {
    let reader = CorpusReader::new(r)?;
    let v = reader.vocab_size() as usize;
    // cap the up-front reservation so a corrupt header cannot force a huge allocation
    let mut tokens = Vec::with_capacity(reader.declared_len().min(1 << 24) as usize);
    for t in reader {
        tokens.push(t?);
    }
    Corpus::new(tokens, v, SourceKind::External, 0)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    read_corpus_from(BufReader::with_capacity(READ_BUF, File::open(path)?))
}

pub fn write_vocab(path: impl AsRef<Path>, vocab: &Vocab) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in vocab.entries() {
        writeln!(w, "{e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vocab, CorpusError> {
    let r = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in r.lines() {
        entries.push(line?);
    }
    let unk = entries
        .iter()
        .position(|e| e == UNK_TOKEN)
        .ok_or_else(|| CorpusError::InvalidVocab(format!("no {UNK_TOKEN} line")))?;
    Vocab::new(entries, unk as u32)
}

pub fn parse_length_hist<R: BufRead>(r: R) -> Result<LengthDist, CorpusError> {
    let mut pairs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let parse_err = |msg: &str| CorpusError::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let d: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("expected integer distance"))?;
        let c: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("expected integer count"))?;
        if parts.next().is_some() {
            return Err(parse_err("expected exactly two fields"));
        }
        pairs.push((d, c));
    }
    LengthDist::from_counts(&pairs)
}

pub fn read_length_hist(path: impl AsRef<Path>) -> Result<LengthDist, CorpusError> {
    parse_length_hist(BufReader::new(File::open(path)?))
}

pub fn write_trace(path: impl AsRef<Path>, trace: &PairTrace) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(trace.len() as u64).to_le_bytes())?;
    for &(o, c, t) in &trace.pairs {
        w.write_all(&o.to_le_bytes())?;
        w.write_all(&c.to_le_bytes())?;
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<PairTrace, CorpusError> {
    let mut r = BufReader::with_capacity(READ_BUF, File::open(path)?);
    let mut magic = [0u8; 4];
    if !read_exact_or(&mut r, &mut magic)? || magic != TRACE_MAGIC {
        return Err(CorpusError::BadMagic(magic));
    }
    let mut head = [0u8; 9];
    if !read_exact_or(&mut r, &mut head)? {
        return Err(CorpusError::Truncated { expected: 0, found: 0 });
    }
    if head[0] != FORMAT_VERSION {
        return Err(CorpusError::UnsupportedVersion(head[0]));
    }
    let count = u64::from_le_bytes(head[1..9].try_into().unwrap());
    let mut pairs = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; 20];
    for i in 0..count {
        if !read_exact_or(&mut r, &mut rec)? {
            return Err(CorpusError::Truncated { expected: count, found: i });
        }
        pairs.push((
            u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            u64::from_le_bytes(rec[8..16].try_into().unwrap()),
            u32::from_le_bytes(rec[16..20].try_into().unwrap()),
        ));
    }
    Ok(PairTrace { pairs })
}
