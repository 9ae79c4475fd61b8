//! Perplexity over a whole corpus.

use super::TrainError;
use crate::corpusgen::Corpus;
use crate::langmodel::{forward, LmConfig, LmParams, Masks, State, Window};

/// Summed negative log-likelihood of every next-token prediction in
/// `tokens` and the number of predictions. Batch size 1, state carried
/// across `bptt_len` windows, no dropout.
pub fn evaluate_tokens(params: &LmParams, cfg: &LmConfig, tokens: &[u32]) -> Result<(f64, usize), TrainError> {
    if tokens.len() < 2 {
        return Err(TrainError::EmptyCorpus);
    }
    let masks = Masks::none(cfg);
    let mut state = State::zeros(cfg, 1);
    let n = tokens.len() - 1;
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let steps = cfg.bptt_len.min(n - start);
        let w = Window::new(&tokens[start..start + steps], &tokens[start + 1..start + steps + 1], steps, 1);
        let (nll, next, _) = forward(params, cfg, &w, &state, &masks)?;
        total += nll;
        state = next;
        start += steps;
    }
    Ok((total, n))
}

/// `exp(mean nll)` over the corpus.
pub fn evaluate_perplexity(params: &LmParams, cfg: &LmConfig, corpus: &Corpus) -> Result<f64, TrainError> {
    let (nll, n) = evaluate_tokens(params, cfg, corpus.tokens())?;
    Ok((nll / n as f64).exp())
}
