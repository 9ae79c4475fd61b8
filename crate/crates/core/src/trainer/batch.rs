//! Splitting a token stream into parallel BPTT streams.

use super::TrainError;
use crate::langmodel::Window;

/// `batch` contiguous streams laid out time-major: element `t * batch + b`
/// is token `t` of stream `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batches {
    data: Vec<u32>,
    batch: usize,
    stream_len: usize,
    bptt: usize,
}

/// Cuts `tokens` into `batch` equal contiguous streams (the remainder is
/// dropped) and serves full `bptt`-step windows over them.
pub fn batchify(tokens: &[u32], batch: usize, bptt: usize) -> Result<Batches, TrainError> {
    if batch == 0 || bptt == 0 {
        return Err(TrainError::Config("batch size and bptt must be positive".into()));
    }
    let needed = batch * (bptt + 1);
    if tokens.len() < needed {
        return Err(TrainError::CorpusTooShort {
            len: tokens.len(),
            needed,
        });
    }
    let stream_len = tokens.len() / batch;
    let mut data = vec![0u32; stream_len * batch];
    for b in 0..batch {
        for t in 0..stream_len {
            data[t * batch + b] = tokens[b * stream_len + t];
        }
    }
    Ok(Batches {
        data,
        batch,
        stream_len,
        bptt,
    })
}

impl Batches {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    pub fn bptt(&self) -> usize {
        self.bptt
    }

    /// Full windows per epoch; a window needs `bptt + 1` tokens per stream.
    pub fn num_windows(&self) -> usize {
        (self.stream_len - 1) / self.bptt
    }

    pub fn targets_per_epoch(&self) -> usize {
        self.batch * self.num_windows() * self.bptt
    }

    /// Window `i`; inputs and targets borrow the stream buffer.
    pub fn window(&self, i: usize) -> Window<'_> {
        assert!(i < self.num_windows(), "window {i} out of range");
        let start = i * self.bptt * self.batch;
        let end = start + self.bptt * self.batch;
        Window::new(
            &self.data[start..end],
            &self.data[start + self.batch..end + self.batch],
            self.bptt,
            self.batch,
        )
    }

    pub fn windows(&self) -> impl Iterator<Item = Window<'_>> {
        (0..self.num_windows()).map(|i| self.window(i))
    }

    /// Streams `[lo, hi)` as their own batch set.
    pub fn streams(&self, lo: usize, hi: usize) -> Batches {
        assert!(lo < hi && hi <= self.batch);
        let width = hi - lo;
        let mut data = Vec::with_capacity(self.stream_len * width);
        for t in 0..self.stream_len {
            data.extend_from_slice(&self.data[t * self.batch + lo..t * self.batch + hi]);
        }
        Batches {
            data,
            batch: width,
            stream_len: self.stream_len,
            bptt: self.bptt,
        }
    }

    /// Splits the streams into `shards` contiguous groups of near-equal size.
    pub fn split(&self, shards: usize) -> Vec<Batches> {
        let shards = shards.clamp(1, self.batch);
        let (q, r) = (self.batch / shards, self.batch % shards);
        let mut out = Vec::with_capacity(shards);
        let mut lo = 0;
        for s in 0..shards {
            let hi = lo + q + usize::from(s < r);
            out.push(self.streams(lo, hi));
            lo = hi;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_stream_layout() {
        let toks: Vec<u32> = (0..10).collect();
        let b = batchify(&toks, 2, 2).unwrap();
        assert_eq!(b.stream_len(), 5);
        let w = b.window(0);
        // time-major [[0,1],[5,6]] -> rows (t, b)
        assert_eq!(w.inputs, &[0, 5, 1, 6]);
        assert_eq!(w.targets, &[1, 6, 2, 7]);
        assert_eq!(b.num_windows(), 2);
        assert_eq!(b.targets_per_epoch(), 2 * (5 / 2) * 2);
        let w = b.window(1);
        assert_eq!(w.inputs, &[2, 7, 3, 8]);
        assert_eq!(w.targets, &[3, 8, 4, 9]);
    }

    #[test]
    fn too_short() {
        let toks: Vec<u32> = (0..5).collect();
        assert!(matches!(batchify(&toks, 2, 2), Err(TrainError::CorpusTooShort { len: 5, needed: 6 })));
    }

    #[test]
    fn split_preserves_streams() {
        let toks: Vec<u32> = (0..70).collect();
        let b = batchify(&toks, 7, 3).unwrap();
        let parts = b.split(3);
        assert_eq!(parts.iter().map(|p| p.batch()).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert_eq!(parts[1].window(0).inputs, &[30, 40, 31, 41, 32, 42]);
        assert_eq!(parts.iter().map(|p| p.targets_per_epoch()).sum::<usize>(), b.targets_per_epoch());
    }
}
