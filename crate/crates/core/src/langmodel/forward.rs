//! Batched forward and backward passes over one BPTT window.

use super::{LmConfig, LmParams, ModelError};
use crate::neuralcore::loss::xent_row_in_place;
use crate::neuralcore::lstm::{lstm_seq_backward, lstm_seq_forward, SeqCache, WeightGradsMut};
use crate::neuralcore::mat::{gemm, Trans};
use crate::neuralcore::{finite_diff_check, GradCheckReport, Mat, RngStream};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout masks are sampled.
    Train,
    /// No dropout.
    Eval,
}

/// Which parameter gradients to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    All,
    /// Skip every LSTM weight gradient; those tensors are frozen.
    EmbeddingOnly,
}

/// A time-major window: row `t * batch + b` is timestep `t` of stream `b`.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub inputs: &'a [u32],
    pub targets: &'a [u32],
    pub steps: usize,
    pub batch: usize,
}

impl<'a> Window<'a> {
    pub fn new(inputs: &'a [u32], targets: &'a [u32], steps: usize, batch: usize) -> Self {
        Self {
            inputs,
            targets,
            steps,
            batch,
        }
    }

    fn validate(&self, cfg: &LmConfig) -> Result<(), ModelError> {
        let n = self.steps * self.batch;
        if self.inputs.len() != n || self.targets.len() != n || n == 0 {
            return Err(ModelError::StateMismatch(format!(
                "window of {}x{} has {} inputs and {} targets",
                self.steps,
                self.batch,
                self.inputs.len(),
                self.targets.len()
            )));
        }
        if self.steps > cfg.bptt_len {
            return Err(ModelError::WindowTooLong {
                steps: self.steps,
                bptt: cfg.bptt_len,
            });
        }
        let v = cfg.vocab_size;
        if let Some(&id) = self.inputs.iter().chain(self.targets).find(|&&id| id as usize >= v) {
            return Err(ModelError::IdOutOfRange { id, vocab: v });
        }
        Ok(())
    }
}

/// Per-layer hidden and cell state, each `batch x H_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: Vec<Mat>,
    pub c: Vec<Mat>,
}

impl State {
    pub fn zeros(cfg: &LmConfig, batch: usize) -> Self {
        let mk = || {
            (0..cfg.layers)
                .map(|l| Mat::zeros(batch, cfg.layer_dims(l).1))
                .collect::<Vec<_>>()
        };
        Self { h: mk(), c: mk() }
    }

    pub fn batch(&self) -> usize {
        self.h.first().map_or(0, |m| m.rows())
    }

    /// Rows `[start, end)` of every layer.
    pub fn rows(&self, start: usize, end: usize) -> State {
        let take = |ms: &Vec<Mat>| {
            ms.iter()
                .map(|m| Mat::from_vec(end - start, m.cols(), m.rows_slice(start, end).to_vec()).expect("row slice"))
                .collect()
        };
        State {
            h: take(&self.h),
            c: take(&self.c),
        }
    }

    /// Stacks states row-wise, in order.
    pub fn concat(parts: &[State]) -> State {
        let layers = parts[0].h.len();
        let join = |pick: &dyn Fn(&State) -> &Vec<Mat>, l: usize| {
            let cols = pick(&parts[0])[l].cols();
            let data: Vec<Real> = parts.iter().flat_map(|s| pick(s)[l].as_slice().iter().copied()).collect();
            Mat::from_vec(data.len() / cols, cols, data).expect("concat")
        };
        State {
            h: (0..layers).map(|l| join(&|s| &s.h, l)).collect(),
            c: (0..layers).map(|l| join(&|s| &s.c, l)).collect(),
        }
    }

    fn check(&self, cfg: &LmConfig, batch: usize) -> Result<(), ModelError> {
        if self.h.len() != cfg.layers || self.c.len() != cfg.layers {
            return Err(ModelError::StateMismatch(format!("{} layers, model has {}", self.h.len(), cfg.layers)));
        }
        for l in 0..cfg.layers {
            let want = (batch, cfg.layer_dims(l).1);
            if self.h[l].shape() != want || self.c[l].shape() != want {
                return Err(ModelError::StateMismatch(format!(
                    "layer {l} state {:?}, expected {want:?}",
                    self.h[l].shape()
                )));
            }
        }
        Ok(())
    }
}

/// Dropout masks for one window, already scaled by `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    /// Per vocabulary row, `0` or `1 / (1 - p_emb_drop)`.
    pub emb_scale: Option<Vec<Real>>,
    /// Per layer, a mask the shape of `W_hh`.
    pub w_hh: Vec<Option<Mat>>,
}

impl Masks {
    pub fn none(cfg: &LmConfig) -> Self {
        Self {
            emb_scale: None,
            w_hh: vec![None; cfg.layers],
        }
    }

    /// Draws embedding rows first, then each layer's `W_hh` mask in order.
    pub fn sample(cfg: &LmConfig, rng: &mut RngStream) -> Self {
        let keep_scale = |p: f64| (1.0 / (1.0 - p)) as Real;
        let emb_scale = (cfg.p_emb_drop > 0.0).then(|| {
            let s = keep_scale(cfg.p_emb_drop);
            (0..cfg.vocab_size)
                .map(|_| if rng.bernoulli(cfg.p_emb_drop) { 0.0 } else { s })
                .collect()
        });
        let w_hh = (0..cfg.layers)
            .map(|l| {
                (cfg.p_weight_drop > 0.0).then(|| {
                    let h = cfg.layer_dims(l).1;
                    let s = keep_scale(cfg.p_weight_drop);
                    Mat::from_fn(4 * h, h, |_, _| if rng.bernoulli(cfg.p_weight_drop) { 0.0 } else { s })
                })
            })
            .collect();
        Self { emb_scale, w_hh }
    }

    pub fn for_mode(cfg: &LmConfig, mode: Mode, rng: &mut RngStream) -> Self {
        match mode {
            Mode::Train => Self::sample(cfg, rng),
            Mode::Eval => Self::none(cfg),
        }
    }
}

/// Everything the backward pass needs.
pub struct ForwardCache {
    steps: usize,
    batch: usize,
    inputs: Vec<u32>,
    layers: Vec<SeqCache>,
    w_hh_eff: Vec<Option<Mat>>,
    top: Mat,
    /// `softmax - onehot` per row, unscaled.
    dlogits: Mat,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }
}

/// Runs the model over a window. Returns the summed negative log-likelihood
/// of the targets, the final state and the cache.
pub fn forward(
    params: &LmParams,
    cfg: &LmConfig,
    window: &Window<'_>,
    state: &State,
    masks: &Masks,
) -> Result<(f64, State, ForwardCache), ModelError> {
    window.validate(cfg)?;
    state.check(cfg, window.batch)?;
    let (steps, batch) = (window.steps, window.batch);
    let tb = steps * batch;
    let e = cfg.embed_dim;

    let mut x = Mat::zeros(tb, e);
    for (r, &tok) in window.inputs.iter().enumerate() {
        let src = params.embedding.row(tok as usize);
        let s = masks.emb_scale.as_ref().map_or(1.0, |m| m[tok as usize]);
        for (d, v) in x.row_mut(r).iter_mut().zip(src) {
            *d = v * s;
        }
    }

    let mut caches = Vec::with_capacity(cfg.layers);
    let mut w_effs = Vec::with_capacity(cfg.layers);
    let mut next = State { h: Vec::new(), c: Vec::new() };
    for (l, w) in params.layers.iter().enumerate() {
        let w_eff = masks.w_hh.get(l).and_then(|m| m.as_ref()).map(|m| w.w_hh.hadamard(m));
        let (out, h, c, cache) = lstm_seq_forward(
            &w.w_ih,
            w_eff.as_ref().unwrap_or(&w.w_hh),
            &w.b,
            x,
            steps,
            batch,
            &state.h[l],
            &state.c[l],
        )?;
        next.h.push(h);
        next.c.push(c);
        caches.push(cache);
        w_effs.push(w_eff);
        x = out;
    }
    let top = x;

    let v = cfg.vocab_size;
    let dec = params.decoder_weight();
    let k = top.cols();
    let mut logits = Mat::zeros(tb, v);
    gemm(tb, k, v, 1.0, top.as_slice(), Trans::No, dec.as_slice(), Trans::Yes, 0.0, logits.as_mut_slice());
    let bias = params.decoder_bias.as_slice();
    let mut nll = 0.0f64;
    for (r, &t) in window.targets.iter().enumerate() {
        let row = logits.row_mut(r);
        row.iter_mut().zip(bias).for_each(|(a, b)| *a += b);
        nll += xent_row_in_place(row, t as usize, 1.0) as f64;
    }

    let cache = ForwardCache {
        steps,
        batch,
        inputs: window.inputs.to_vec(),
        layers: caches,
        w_hh_eff: w_effs,
        top,
        dlogits: logits,
    };
    Ok((nll, next, cache))
}

/// Adds `scale * d(sum nll)/d(params)` into `grads`. The incoming state is
/// treated as a constant.
pub fn backward(
    params: &LmParams,
    cfg: &LmConfig,
    cache: &ForwardCache,
    masks: &Masks,
    scale: Real,
    scope: GradScope,
    grads: &mut LmParams,
) -> Result<(), ModelError> {
    let tb = cache.rows();
    let v = cfg.vocab_size;
    let k = cache.top.cols();
    let dl = cache.dlogits.as_slice();

    let dec_grad = match grads.decoder.as_mut() {
        Some(d) => d,
        None => &mut grads.embedding,
    };
    gemm(v, tb, k, scale, dl, Trans::Yes, cache.top.as_slice(), Trans::No, 1.0, dec_grad.as_mut_slice());
    let db = grads.decoder_bias.as_mut_slice();
    for r in 0..tb {
        for (d, g) in db.iter_mut().zip(cache.dlogits.row(r)) {
            *d += scale * g;
        }
    }

    let mut dh = Mat::zeros(tb, k);
    gemm(tb, v, k, scale, dl, Trans::No, params.decoder_weight().as_slice(), Trans::No, 0.0, dh.as_mut_slice());

    for l in (0..cfg.layers).rev() {
        let w = &params.layers[l];
        let w_eff = cache.w_hh_eff[l].as_ref().unwrap_or(&w.w_hh);
        let g = &mut grads.layers[l];
        let dx = match (scope, masks.w_hh.get(l).and_then(|m| m.as_ref())) {
            (GradScope::EmbeddingOnly, _) => lstm_seq_backward(&w.w_ih, w_eff, &cache.layers[l], &dh, None)?,
            (GradScope::All, None) => lstm_seq_backward(
                &w.w_ih,
                w_eff,
                &cache.layers[l],
                &dh,
                Some(WeightGradsMut {
                    w_ih: &mut g.w_ih,
                    w_hh: &mut g.w_hh,
                    b: &mut g.b,
                }),
            )?,
            (GradScope::All, Some(mask)) => {
                let mut d_eff = Mat::zeros(w.w_hh.rows(), w.w_hh.cols());
                let dx = lstm_seq_backward(
                    &w.w_ih,
                    w_eff,
                    &cache.layers[l],
                    &dh,
                    Some(WeightGradsMut {
                        w_ih: &mut g.w_ih,
                        w_hh: &mut d_eff,
                        b: &mut g.b,
                    }),
                )?;
                g.w_hh.axpy(1.0, &d_eff.hadamard(mask));
                dx
            }
        };
        dh = dx;
    }

    for (r, &tok) in cache.inputs.iter().enumerate() {
        let s = masks.emb_scale.as_ref().map_or(1.0, |m| m[tok as usize]);
        if s == 0.0 {
            continue;
        }
        for (d, g) in grads.embedding.row_mut(tok as usize).iter_mut().zip(dh.row(r)) {
            *d += s * g;
        }
    }
    Ok(())
}

/// Mean negative log-likelihood over the window and the carried state.
pub fn forward_nll(
    params: &LmParams,
    cfg: &LmConfig,
    window: &Window<'_>,
    state: &State,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(f64, State), ModelError> {
    let masks = Masks::for_mode(cfg, mode, rng);
    let (nll, next, _) = forward(params, cfg, window, state, &masks)?;
    Ok((nll / (window.steps * window.batch) as f64, next))
}

/// Mean negative log-likelihood and its gradient.
pub fn loss_and_grad(
    params: &LmParams,
    cfg: &LmConfig,
    window: &Window<'_>,
    state: &State,
    masks: &Masks,
    scope: GradScope,
) -> Result<(f64, State, LmParams), ModelError> {
    let (nll, next, cache) = forward(params, cfg, window, state, masks)?;
    let n = cache.rows();
    let mut grads = params.zeros_like();
    backward(params, cfg, &cache, masks, 1.0 / n as Real, scope, &mut grads)?;
    Ok((nll / n as f64, next, grads))
}

/// Central-difference check of [`loss_and_grad`] over every parameter,
/// with the masks held fixed.
pub fn check_gradients(
    params: &LmParams,
    cfg: &LmConfig,
    window: &Window<'_>,
    state: &State,
    masks: &Masks,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, ModelError> {
    let (_, _, grads) = loss_and_grad(params, cfg, window, state, masks, GradScope::All)?;
    let analytic: Vec<f64> = grads.flatten().into_iter().map(f64::from).collect();
    let mut flat: Vec<f64> = params.flatten().into_iter().map(f64::from).collect();
    let mut probe = params.clone();
    let mut buf: Vec<Real> = vec![0.0; flat.len()];
    let mut failure = None;
    let report = finite_diff_check(
        |x| {
            buf.iter_mut().zip(x).for_each(|(b, v)| *b = *v as Real);
            probe.unflatten_from(&buf);
            match forward(&probe, cfg, window, state, masks) {
                Ok((nll, _, _)) => nll / (window.steps * window.batch) as f64,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &mut flat,
        &analytic,
        step,
        tol,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
