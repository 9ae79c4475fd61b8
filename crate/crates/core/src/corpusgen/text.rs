use std::collections::HashMap;
use std::io::BufRead;

use super::{Corpus, CorpusError, SourceKind, Vocab};

/// String used for, and recognized as, the unknown token.
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Maximum number of real word types kept; the unknown token is extra.
    pub v_max: usize,
    pub lowercase: bool,
}

impl IngestOptions {
    pub fn new(v_max: usize) -> Self {
        Self { v_max, lowercase: false }
    }
}

/// Whitespace-tokenizes `input` into a corpus.
///
/// Without an existing vocabulary, the `v_max` most frequent words (ties
/// broken by first occurrence) get ids in that order and `<unk>` takes the
/// next id; all other words map to it. With `existing`, words are looked up
/// and unknown ones map to its unk id. A literal `<unk>` in the text is
/// always the unknown token.
pub fn ingest_text<R: BufRead>(
    input: R,
    opts: IngestOptions,
    existing: Option<&Vocab>,
) -> Result<(Corpus, Vocab), CorpusError> {
    // Intern words to provisional ids while reading so the text is only held once.
    let mut intern: HashMap<String, u32> = HashMap::new();
    let mut words: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut provisional: Vec<u32> = Vec::new();
    const UNK_MARK: u32 = u32::MAX;

    for line in input.lines() {
        let line = line?;
        for raw in line.split_whitespace() {
            let word = if opts.lowercase { raw.to_lowercase() } else { raw.to_string() };
            if word == UNK_TOKEN {
                provisional.push(UNK_MARK);
                continue;
            }
            let id = match intern.get(&word) {
                Some(&id) => id,
                None => {
                    let id = words.len() as u32;
                    intern.insert(word.clone(), id);
                    words.push(word);
                    counts.push(0);
                    id
                }
            };
            counts[id as usize] += 1;
            provisional.push(id);
        }
    }
    if provisional.is_empty() {
        return Err(CorpusError::EmptyInput);
    }

    let (vocab, mapping) = match existing {
        Some(v) => {
            let mapping: Vec<u32> = words.iter().map(|w| v.id_or_unk(w)).collect();
            (v.clone(), mapping)
        }
        None => {
            // provisional ids are in first-occurrence order, so a stable sort
            // by descending count breaks ties by first occurrence
            let mut order: Vec<u32> = (0..words.len() as u32).collect();
            order.sort_by(|a, b| counts[*b as usize].cmp(&counts[*a as usize]));
            order.truncate(opts.v_max);
            let unk_id = order.len() as u32;
            let mut mapping = vec![unk_id; words.len()];
            let mut entries: Vec<String> = Vec::with_capacity(order.len() + 1);
            for (new_id, &old) in order.iter().enumerate() {
                mapping[old as usize] = new_id as u32;
                entries.push(words[old as usize].clone());
            }
            entries.push(UNK_TOKEN.to_string());
            (Vocab::new(entries, unk_id)?, mapping)
        }
    };

    let unk = vocab.unk_id();
    let tokens = provisional
        .into_iter()
        .map(|p| if p == UNK_MARK { unk } else { mapping[p as usize] })
        .collect();
    let corpus = Corpus::new(tokens, vocab.size(), SourceKind::Text, 0)?;
    Ok((corpus, vocab))
}

/// Joins token strings with single spaces.
pub fn detokenize(corpus: &Corpus, vocab: &Vocab) -> String {
    let mut out = String::new();
    for (i, &t) in corpus.tokens().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(vocab.token(t).unwrap_or(UNK_TOKEN));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(s: &str, v: usize) -> (Corpus, Vocab) {
        ingest_text(s.as_bytes(), IngestOptions::new(v), None).unwrap()
    }

    #[test]
    fn first_occurrence_order() {
        let (c, v) = ingest("a b a", 2);
        assert_eq!(c.tokens(), &[0, 1, 0]);
        assert_eq!(v.entries(), &["a", "b", "<unk>"]);
    }

    #[test]
    fn cutoff_maps_to_unk() {
        let (c, v) = ingest("a b a", 1);
        assert_eq!(v.unk_id(), 1);
        assert_eq!(c.tokens(), &[0, 1, 0]);
        assert_eq!(detokenize(&c, &v), "a <unk> a");
    }

    #[test]
    fn frequency_beats_first_occurrence() {
        let (c, v) = ingest("x y y z z z", 2);
        assert_eq!(v.entries(), &["z", "y", "<unk>"]);
        assert_eq!(c.tokens(), &[2, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            ingest_text("  \n\t ".as_bytes(), IngestOptions::new(5), None),
            Err(CorpusError::EmptyInput)
        ));
    }

    #[test]
    fn existing_vocab_reused() {
        let (_, v) = ingest("a b a", 1);
        let (c, v2) = ingest_text("b a c".as_bytes(), IngestOptions::new(1), Some(&v)).unwrap();
        assert_eq!(v2, v);
        assert_eq!(c.tokens(), &[1, 0, 1]);
    }

    #[test]
    fn lowercase_option() {
        let opts = IngestOptions {
            v_max: 5,
            lowercase: true,
        };
        let (c, v) = ingest_text("A a".as_bytes(), opts, None).unwrap();
        assert_eq!(c.tokens(), &[0, 0]);
        assert_eq!(v.size(), 2);
        let (c, _) = ingest("A a", 5);
        assert_eq!(c.tokens(), &[0, 1]);
    }
}
