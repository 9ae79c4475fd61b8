//! Nesting and flat parentheses corpora.
//!
//! Both emit pairs of identical token ids. In the nesting corpus pairs are
//! produced by a stack and never cross; in the flat corpus each pair is
//! placed at a sampled distance independently of the others and arcs may
//! cross. Both return a [`PairTrace`] of every realized pair.

use std::collections::HashMap;

use super::{sample_unigram, Corpus, CorpusError, LengthDist, SourceKind, UnigramDist};
use crate::neuralcore::RngStream;

/// Realized `(open_pos, close_pos, token)` pairs of a parentheses corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairTrace {
    pub pairs: Vec<(u64, u64, u32)>,
}

impl PairTrace {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Rebuilds the token sequence of length `n` from the pairs alone.
    /// Positions not covered by any pair are `None`.
    pub fn reconstruct(&self, n: usize) -> Vec<Option<u32>> {
        let mut out = vec![None; n];
        for &(o, c, tok) in &self.pairs {
            if let Some(slot) = out.get_mut(o as usize) {
                *slot = Some(tok);
            }
            if let Some(slot) = out.get_mut(c as usize) {
                *slot = Some(tok);
            }
        }
        out
    }

    /// `close - open` for every pair.
    pub fn distances(&self) -> impl Iterator<Item = u64> + '_ {
        self.pairs.iter().map(|&(o, c, _)| c - o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestGenConfig {
    pub p_open: f64,
    pub length: usize,
    pub unigram: UnigramDist,
}

impl NestGenConfig {
    pub fn new(p_open: f64, length: usize, unigram: UnigramDist) -> Result<Self, CorpusError> {
        let cfg = Self { p_open, length, unigram };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.p_open > 0.0 && self.p_open < 0.5) {
            return Err(CorpusError::InvalidOpenProbability(self.p_open));
        }
        check_length(self.length)
    }
}

fn check_length(n: usize) -> Result<(), CorpusError> {
    if n == 0 {
        Err(CorpusError::EmptyLength)
    } else if n % 2 == 1 {
        Err(CorpusError::OddLength(n))
    } else {
        Ok(())
    }
}

/// Stack grammar: open a new pair with probability `p_open`, otherwise close
/// the top of the stack.
///
/// Two moves are forced and consume no coin flip: an empty stack always
/// opens, and once the remaining budget equals the stack depth every step
/// closes. The result is a fully balanced corpus of exactly `length` tokens.
/// Trace pairs are listed in closing order.
pub fn gen_nesting_parens(cfg: &NestGenConfig, seed: u64) -> Result<(Corpus, PairTrace), CorpusError> {
    cfg.validate()?;
    let n = cfg.length;
    let mut rng = RngStream::new(seed);
    let mut tokens = Vec::with_capacity(n);
    let mut stack: Vec<(u64, u32)> = Vec::new();
    let mut trace = PairTrace {
        pairs: Vec::with_capacity(n / 2),
    };
    for t in 0..n {
        let remaining = n - t;
        let open = if stack.is_empty() {
            true
        } else if remaining == stack.len() {
            false
        } else {
            rng.bernoulli(cfg.p_open)
        };
        if open {
            let x = sample_unigram(&cfg.unigram, &mut rng);
            stack.push((t as u64, x));
            tokens.push(x);
        } else {
            let (open_pos, x) = stack.pop().expect("close with non-empty stack");
            tokens.push(x);
            trace.pairs.push((open_pos, t as u64, x));
        }
    }
    debug_assert!(stack.is_empty());
    let corpus = Corpus::new(tokens, cfg.unigram.len(), SourceKind::NestParens, seed)?;
    Ok((corpus, trace))
}

/// Independent pairs at sampled distances.
///
/// Scans positions left to right keeping a schedule of forced future
/// tokens. A scheduled position emits its token; a free position samples a
/// token `x` and a distance `d`, emits `x` and schedules the close at the
/// first free slot at or after `t + d`. If that slot would fall past the
/// end, the close goes to the last free slot instead (one always exists
/// because occupied slots come in pairs and `length` is even). Trace pairs
/// are listed in opening order.
pub fn gen_flat_parens(
    unigram: &UnigramDist,
    lengths: &LengthDist,
    length: usize,
    seed: u64,
) -> Result<(Corpus, PairTrace), CorpusError> {
    check_length(length)?;
    let n = length;
    let mut rng = RngStream::new(seed);
    let mut tokens = Vec::with_capacity(n);
    let mut scheduled: HashMap<usize, u32> = HashMap::new();
    let mut trace = PairTrace {
        pairs: Vec::with_capacity(n / 2),
    };
    for t in 0..n {
        if let Some(x) = scheduled.remove(&t) {
            tokens.push(x);
            continue;
        }
        let x = sample_unigram(unigram, &mut rng);
        let d = lengths.sample(&mut rng);
        let mut slot = t + d;
        while slot < n && scheduled.contains_key(&slot) {
            slot += 1;
        }
        if slot >= n {
            slot = n - 1;
            while scheduled.contains_key(&slot) {
                slot -= 1;
            }
            debug_assert!(slot > t);
        }
        scheduled.insert(slot, x);
        tokens.push(x);
        trace.pairs.push((t as u64, slot as u64, x));
    }
    debug_assert!(scheduled.is_empty());
    let corpus = Corpus::new(tokens, unigram.len(), SourceKind::FlatParens, seed)?;
    Ok((corpus, trace))
}

fn covers_each_position_once(tokens: &[u32], trace: &PairTrace) -> Result<Vec<i8>, CorpusError> {
    // role: 0 unset, 1 open, -1 close
    let mut role = vec![0i8; tokens.len()];
    for &(o, c, x) in &trace.pairs {
        let (o, c) = (o as usize, c as usize);
        if o >= c {
            return Err(CorpusError::Structure {
                pos: o,
                msg: format!("pair opens at {o} but closes at {c}"),
            });
        }
        if c >= tokens.len() {
            return Err(CorpusError::Structure {
                pos: c,
                msg: "pair position past end of corpus".into(),
            });
        }
        for (p, r) in [(o, 1i8), (c, -1i8)] {
            if role[p] != 0 {
                return Err(CorpusError::Structure {
                    pos: p,
                    msg: "position used by two pairs".into(),
                });
            }
            if tokens[p] != x {
                return Err(CorpusError::Structure {
                    pos: p,
                    msg: format!("token {} does not match pair token {x}", tokens[p]),
                });
            }
            role[p] = r;
        }
    }
    if let Some(p) = role.iter().position(|&r| r == 0) {
        return Err(CorpusError::Structure {
            pos: p,
            msg: "position not covered by any pair".into(),
        });
    }
    Ok(role)
}

/// Checks a nesting corpus against its trace: every position belongs to
/// exactly one pair, every prefix has at least as many opens as closes, each
/// close matches the most recent unmatched open, and the final depth is 0.
pub fn validate_nesting(tokens: &[u32], trace: &PairTrace) -> Result<(), CorpusError> {
    covers_each_position_once(tokens, trace)?;
    let mut close_of = vec![usize::MAX; tokens.len()];
    for &(o, c, _) in &trace.pairs {
        close_of[o as usize] = c as usize;
    }
    let mut stack: Vec<usize> = Vec::new();
    for (t, &x) in tokens.iter().enumerate() {
        if close_of[t] != usize::MAX {
            stack.push(t);
            continue;
        }
        match stack.pop() {
            Some(o) if close_of[o] == t && tokens[o] == x => {}
            Some(_) => {
                return Err(CorpusError::Structure {
                    pos: t,
                    msg: "crossing arc: close does not match the top of the stack".into(),
                })
            }
            None => {
                return Err(CorpusError::Structure {
                    pos: t,
                    msg: "close with empty stack".into(),
                })
            }
        }
    }
    if !stack.is_empty() {
        return Err(CorpusError::Structure {
            pos: tokens.len(),
            msg: format!("{} unclosed at end of corpus", stack.len()),
        });
    }
    Ok(())
}

/// Checks a flat corpus: the trace rebuilds the corpus exactly and every pair
/// occupies exactly two positions. Crossing arcs are allowed.
pub fn validate_flat(tokens: &[u32], trace: &PairTrace) -> Result<(), CorpusError> {
    covers_each_position_once(tokens, trace)?;
    let rebuilt = trace.reconstruct(tokens.len());
    for (t, (&x, r)) in tokens.iter().zip(&rebuilt).enumerate() {
        if *r != Some(x) {
            return Err(CorpusError::Structure {
                pos: t,
                msg: "reconstruction mismatch".into(),
            });
        }
    }
    Ok(())
}

/// Recovers a nesting trace from tokens alone: a token closes when it equals
/// the top of the stack, otherwise it opens.
pub fn infer_nesting_pairs(tokens: &[u32]) -> Result<PairTrace, CorpusError> {
    let mut stack: Vec<(usize, u32)> = Vec::new();
    let mut trace = PairTrace::default();
    for (t, &x) in tokens.iter().enumerate() {
        match stack.last() {
            Some(&(o, top)) if top == x => {
                stack.pop();
                trace.pairs.push((o as u64, t as u64, x));
            }
            _ => stack.push((t, x)),
        }
    }
    if let Some(&(o, _)) = stack.first() {
        return Err(CorpusError::Structure {
            pos: o,
            msg: format!("{} tokens left unmatched", stack.len()),
        });
    }
    Ok(trace)
}

/// Recovers a flat trace from tokens alone: the second occurrence of an id
/// closes its pending first occurrence.
pub fn infer_flat_pairs(tokens: &[u32]) -> Result<PairTrace, CorpusError> {
    let mut pending: HashMap<u32, usize> = HashMap::new();
    let mut trace = PairTrace::default();
    for (t, &x) in tokens.iter().enumerate() {
        match pending.remove(&x) {
            Some(o) => trace.pairs.push((o as u64, t as u64, x)),
            None => {
                pending.insert(x, t);
            }
        }
    }
    if let Some(&o) = pending.values().min() {
        return Err(CorpusError::Structure {
            pos: o,
            msg: format!("{} tokens left unmatched", pending.len()),
        });
    }
    trace.pairs.sort_unstable();
    Ok(trace)
}
