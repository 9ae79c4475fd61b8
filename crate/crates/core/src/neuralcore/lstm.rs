//! LSTM recurrence.
//!
//! Gate pre-activations are stacked in blocks of `H` rows in the fixed order
//! `[input, forget, cell-candidate, output]`: row `j` of the `4H`-row weight
//! matrices feeds the input gate, row `H + j` the forget gate, `2H + j` the
//! candidate and `3H + j` the output gate of unit `j`.
//!
//! `i, f, o = logistic(.)`, `g = tanh(.)`, `c = f*c_prev + i*g`, `h = o*tanh(c)`.

use super::mat::{gemm, Trans};
use super::{check_dim, logistic, Mat, NeuralError};
use crate::Real;

pub const INPUT_GATE: usize = 0;
pub const FORGET_GATE: usize = 1;
pub const CANDIDATE_GATE: usize = 2;
pub const OUTPUT_GATE: usize = 3;

/// Weights of one LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellWeights {
    /// `4H x in_dim`
    pub w_ih: Mat,
    /// `4H x H`
    pub w_hh: Mat,
    /// `1 x 4H`
    pub b: Mat,
}

impl LstmCellWeights {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: Mat::zeros(4 * hidden, in_dim),
            w_hh: Mat::zeros(4 * hidden, hidden),
            b: Mat::zeros(1, 4 * hidden),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let h = self.hidden();
        check_dim("w_hh rows", 4 * h, self.w_hh.rows())?;
        check_dim("w_ih rows", 4 * h, self.w_ih.rows())?;
        check_dim("bias length", 4 * h, self.b.cols())?;
        check_dim("bias rows", 1, self.b.rows())
    }
}

/// Values retained by [`lstm_cell_forward`] for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCache {
    pub x: Vec<Real>,
    pub h_prev: Vec<Real>,
    pub c_prev: Vec<Real>,
    /// Activated gates `[i, f, g, o]`, length `4H`.
    pub gates: Vec<Real>,
    pub c: Vec<Real>,
    pub tanh_c: Vec<Real>,
}

/// Gradients produced by [`lstm_cell_backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrads {
    pub w_ih: Mat,
    pub w_hh: Mat,
    pub b: Mat,
    pub x: Vec<Real>,
    pub h_prev: Vec<Real>,
    pub c_prev: Vec<Real>,
}

/// One LSTM step for a single example. Returns `(h, c, cache)`.
pub fn lstm_cell_forward(
    w: &LstmCellWeights,
    x: &[Real],
    h_prev: &[Real],
    c_prev: &[Real],
) -> Result<(Vec<Real>, Vec<Real>, CellCache), NeuralError> {
    w.validate()?;
    let h = w.hidden();
    check_dim("input", w.in_dim(), x.len())?;
    check_dim("h_prev", h, h_prev.len())?;
    check_dim("c_prev", h, c_prev.len())?;

    let mut pre = w.b.as_slice().to_vec();
    gemm(1, x.len(), 4 * h, 1.0, x, Trans::No, w.w_ih.as_slice(), Trans::Yes, 1.0, &mut pre);
    gemm(1, h, 4 * h, 1.0, h_prev, Trans::No, w.w_hh.as_slice(), Trans::Yes, 1.0, &mut pre);

    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut h_out = vec![0.0; h];
    activate_row(&mut pre, c_prev, &mut c, &mut tanh_c, &mut h_out);
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: pre,
        c: c.clone(),
        tanh_c,
    };
    Ok((h_out, c, cache))
}

/// Reverse-mode gradients of one step given upstream `dh`, `dc`.
pub fn lstm_cell_backward(
    w: &LstmCellWeights,
    cache: &CellCache,
    dh: &[Real],
    dc: &[Real],
) -> Result<CellGrads, NeuralError> {
    w.validate()?;
    let h = w.hidden();
    if cache.gates.len() != 4 * h || cache.x.len() != w.in_dim() || cache.h_prev.len() != h {
        return Err(NeuralError::CacheMismatch);
    }
    check_dim("dh", h, dh.len())?;
    check_dim("dc", h, dc.len())?;

    let mut da = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    gate_grads_row(&cache.gates, &cache.c_prev, &cache.tanh_c, dh, dc, &mut da, &mut dc_prev);

    let mut w_ih = Mat::zeros(4 * h, w.in_dim());
    gemm(4 * h, 1, w.in_dim(), 1.0, &da, Trans::No, &cache.x, Trans::No, 0.0, w_ih.as_mut_slice());
    let mut w_hh = Mat::zeros(4 * h, h);
    gemm(4 * h, 1, h, 1.0, &da, Trans::No, &cache.h_prev, Trans::No, 0.0, w_hh.as_mut_slice());
    let mut x = vec![0.0; w.in_dim()];
    gemm(1, 4 * h, w.in_dim(), 1.0, &da, Trans::No, w.w_ih.as_slice(), Trans::No, 0.0, &mut x);
    let mut h_prev = vec![0.0; h];
    gemm(1, 4 * h, h, 1.0, &da, Trans::No, w.w_hh.as_slice(), Trans::No, 0.0, &mut h_prev);

    Ok(CellGrads {
        w_ih,
        w_hh,
        b: Mat::row_vector(da),
        x,
        h_prev,
        c_prev: dc_prev,
    })
}

/// Turns one row of pre-activations into activated gates (in place) and
/// writes `c`, `tanh(c)` and `h`.
#[inline]
fn activate_row(gates: &mut [Real], c_prev: &[Real], c: &mut [Real], tanh_c: &mut [Real], h: &mut [Real]) {
    let n = c.len();
    let (ig, rest) = gates.split_at_mut(n);
    let (fg, rest) = rest.split_at_mut(n);
    let (gg, og) = rest.split_at_mut(n);
    for j in 0..n {
        let i = logistic(ig[j]);
        let f = logistic(fg[j]);
        let g = gg[j].tanh();
        let o = logistic(og[j]);
        ig[j] = i;
        fg[j] = f;
        gg[j] = g;
        og[j] = o;
        let cj = f * c_prev[j] + i * g;
        let tc = cj.tanh();
        c[j] = cj;
        tanh_c[j] = tc;
        h[j] = o * tc;
    }
}

/// Pre-activation gradients for one row; `dc_prev` receives `dc_total * f`.
#[inline]
fn gate_grads_row(
    gates: &[Real],
    c_prev: &[Real],
    tanh_c: &[Real],
    dh: &[Real],
    dc: &[Real],
    da: &mut [Real],
    dc_prev: &mut [Real],
) {
    let n = tanh_c.len();
    for j in 0..n {
        let i = gates[j];
        let f = gates[n + j];
        let g = gates[2 * n + j];
        let o = gates[3 * n + j];
        let tc = tanh_c[j];
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        da[j] = dct * g * i * (1.0 - i);
        da[n + j] = dct * c_prev[j] * f * (1.0 - f);
        da[2 * n + j] = dct * i * (1.0 - g * g);
        da[3 * n + j] = dh[j] * tc * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
}

/// Cache of a whole window processed by [`lstm_seq_forward`].
///
/// All per-step buffers are time-major: row `t * batch + b`.
#[derive(Clone, Debug)]
pub struct SeqCache {
    pub steps: usize,
    pub batch: usize,
    pub x: Mat,
    pub h_prev: Mat,
    pub c_prev: Mat,
    pub gates: Mat,
    pub tanh_c: Mat,
}

/// Runs a layer over `steps` timesteps of `batch` rows.
///
/// `x` is `(steps*batch) x in_dim`, time-major. `w_hh` is the effective
/// recurrent matrix (after any weight-drop mask). Returns the stacked hidden
/// outputs, the final `(h, c)` and the cache.
#[allow(clippy::type_complexity)]
pub fn lstm_seq_forward(
    w_ih: &Mat,
    w_hh: &Mat,
    bias: &Mat,
    x: Mat,
    steps: usize,
    batch: usize,
    h0: &Mat,
    c0: &Mat,
) -> Result<(Mat, Mat, Mat, SeqCache), NeuralError> {
    let h = w_hh.cols();
    let in_dim = w_ih.cols();
    check_dim("w_hh rows", 4 * h, w_hh.rows())?;
    check_dim("w_ih rows", 4 * h, w_ih.rows())?;
    check_dim("bias length", 4 * h, bias.cols())?;
    check_dim("input width", in_dim, x.cols())?;
    check_dim("input rows", steps * batch, x.rows())?;
    check_dim("h0 rows", batch, h0.rows())?;
    check_dim("h0 width", h, h0.cols())?;
    check_dim("c0 rows", batch, c0.rows())?;
    check_dim("c0 width", h, c0.cols())?;

    let tb = steps * batch;
    let mut gates = Mat::zeros(tb, 4 * h);
    gemm(tb, in_dim, 4 * h, 1.0, x.as_slice(), Trans::No, w_ih.as_slice(), Trans::Yes, 0.0, gates.as_mut_slice());
    for r in 0..tb {
        for (g, b) in gates.row_mut(r).iter_mut().zip(bias.as_slice()) {
            *g += b;
        }
    }

    let mut h_prev = Mat::zeros(tb, h);
    let mut c_prev = Mat::zeros(tb, h);
    let mut tanh_c = Mat::zeros(tb, h);
    let mut out = Mat::zeros(tb, h);
    let mut c_cur = Mat::zeros(batch, h);
    if tb > 0 {
        h_prev.rows_slice_mut(0, batch).copy_from_slice(h0.as_slice());
        c_prev.rows_slice_mut(0, batch).copy_from_slice(c0.as_slice());
    }

    for t in 0..steps {
        let (r0, r1) = (t * batch, (t + 1) * batch);
        gemm(
            batch,
            h,
            4 * h,
            1.0,
            h_prev.rows_slice(r0, r1),
            Trans::No,
            w_hh.as_slice(),
            Trans::Yes,
            1.0,
            gates.rows_slice_mut(r0, r1),
        );
        for b in 0..batch {
            let r = r0 + b;
            activate_row(
                gates.row_mut(r),
                c_prev.row(r),
                c_cur.row_mut(b),
                tanh_c.row_mut(r),
                out.row_mut(r),
            );
        }
        if t + 1 < steps {
            let (n0, n1) = (r1, r1 + batch);
            h_prev.rows_slice_mut(n0, n1).copy_from_slice(out.rows_slice(r0, r1));
            c_prev.rows_slice_mut(n0, n1).copy_from_slice(c_cur.as_slice());
        }
    }

    let h_last = if steps > 0 {
        Mat::from_vec(batch, h, out.rows_slice((steps - 1) * batch, tb).to_vec())?
    } else {
        h0.clone()
    };
    let c_last = if steps > 0 { c_cur } else { c0.clone() };
    let cache = SeqCache {
        steps,
        batch,
        x,
        h_prev,
        c_prev,
        gates,
        tanh_c,
    };
    Ok((out, h_last, c_last, cache))
}

/// Accumulators for layer weight gradients.
pub struct WeightGradsMut<'a> {
    pub w_ih: &'a mut Mat,
    /// Gradient with respect to the effective recurrent matrix.
    pub w_hh: &'a mut Mat,
    pub b: &'a mut Mat,
}

/// Backward pass over a window; the final state is treated as detached.
///
/// `dh_out` holds the loss gradient for every stacked hidden output. Weight
/// gradients are added into `weights` when given. Returns the input gradient.
pub fn lstm_seq_backward(
    w_ih: &Mat,
    w_hh: &Mat,
    cache: &SeqCache,
    dh_out: &Mat,
    weights: Option<WeightGradsMut<'_>>,
) -> Result<Mat, NeuralError> {
    let h = w_hh.cols();
    let (steps, batch) = (cache.steps, cache.batch);
    let tb = steps * batch;
    if cache.gates.cols() != 4 * h || cache.x.cols() != w_ih.cols() || cache.gates.rows() != tb {
        return Err(NeuralError::CacheMismatch);
    }
    check_dim("dh_out rows", tb, dh_out.rows())?;
    check_dim("dh_out width", h, dh_out.cols())?;

    let mut da = Mat::zeros(tb, 4 * h);
    let mut dh_next = Mat::zeros(batch, h);
    let mut dc_next = Mat::zeros(batch, h);
    let mut dh = vec![0.0; h];
    let mut dc_prev = vec![0.0; h];

    for t in (0..steps).rev() {
        let r0 = t * batch;
        for b in 0..batch {
            let r = r0 + b;
            for ((d, up), carry) in dh.iter_mut().zip(dh_out.row(r)).zip(dh_next.row(b)) {
                *d = up + carry;
            }
            gate_grads_row(
                cache.gates.row(r),
                cache.c_prev.row(r),
                cache.tanh_c.row(r),
                &dh,
                dc_next.row(b),
                da.row_mut(r),
                &mut dc_prev,
            );
            dc_next.row_mut(b).copy_from_slice(&dc_prev);
        }
        if t > 0 {
            gemm(
                batch,
                4 * h,
                h,
                1.0,
                da.rows_slice(r0, r0 + batch),
                Trans::No,
                w_hh.as_slice(),
                Trans::No,
                0.0,
                dh_next.as_mut_slice(),
            );
        }
    }

    if let Some(g) = weights {
        let in_dim = w_ih.cols();
        gemm(4 * h, tb, in_dim, 1.0, da.as_slice(), Trans::Yes, cache.x.as_slice(), Trans::No, 1.0, g.w_ih.as_mut_slice());
        gemm(4 * h, tb, h, 1.0, da.as_slice(), Trans::Yes, cache.h_prev.as_slice(), Trans::No, 1.0, g.w_hh.as_mut_slice());
        da.add_col_sums_into(g.b.as_mut_slice());
    }

    let mut dx = Mat::zeros(tb, w_ih.cols());
    gemm(tb, 4 * h, w_ih.cols(), 1.0, da.as_slice(), Trans::No, w_ih.as_slice(), Trans::No, 0.0, dx.as_mut_slice());
    Ok(dx)
}
