//! Binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TILTCKPT" | version: u32 | real bytes: u8
//! config: V, E, H, L, bptt as u64 | p_emb_drop, p_weight_drop as f64 | tie: u8
//! rng: flag u8 [key 32 | stream u64 | word_pos u128]
//! scalars: count u32 x (name | value f64)
//! note: len u64 | UTF-8 bytes
//! params: tensor set
//! best: flag u8 [tensor set]
//! ```
//!
//! A tensor set is `count u32 x (name | partition u8 | rows u64 | cols u64 |
//! rows*cols reals)`; names are `len u32 | UTF-8 bytes`. Tensor names and
//! shapes are checked against the stored config on read.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{LmConfig, LmParams, Partition};
use crate::neuralcore::{Mat, RngState};
use crate::{Real, REAL_BYTES};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"TILTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint stores {found}-byte reals, this build uses {expected}")]
    Precision { expected: u8, found: u8 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Model plus whatever training state a caller needs to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: LmConfig,
    pub params: LmParams,
    pub best: Option<LmParams>,
    pub rng: Option<RngState>,
    /// Named scalars in a caller-defined order.
    pub scalars: Vec<(String, f64)>,
    /// Free-form text, e.g. the training history.
    pub note: String,
}

impl Checkpoint {
    pub fn new(config: LmConfig, params: LmParams) -> Self {
        Self {
            config,
            params,
            best: None,
            rng: None,
            scalars: Vec::new(),
            note: String::new(),
        }
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn put_tensors<W: Write>(w: &mut W, p: &LmParams) -> io::Result<()> {
    let ts = p.tensors();
    w.write_all(&(ts.len() as u32).to_le_bytes())?;
    for t in ts {
        put_str(w, &t.full_name())?;
        w.write_all(&[match t.partition {
            Partition::Embedding => 0,
            Partition::Recurrent => 1,
        }])?;
        w.write_all(&(t.tensor.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.tensor.cols() as u64).to_le_bytes())?;
        for v in t.tensor.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint_to<W: Write>(mut w: W, ck: &Checkpoint) -> Result<(), CheckpointError> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[REAL_BYTES])?;
    let c = &ck.config;
    for d in [c.vocab_size, c.embed_dim, c.hidden_dim, c.layers, c.bptt_len] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&c.p_emb_drop.to_le_bytes())?;
    w.write_all(&c.p_weight_drop.to_le_bytes())?;
    w.write_all(&[c.tie_weights as u8])?;
    match &ck.rng {
        None => w.write_all(&[0])?,
        Some(s) => {
            w.write_all(&[1])?;
            w.write_all(&s.key)?;
            w.write_all(&s.stream.to_le_bytes())?;
            w.write_all(&s.word_pos.to_le_bytes())?;
        }
    }
    w.write_all(&(ck.scalars.len() as u32).to_le_bytes())?;
    for (name, v) in &ck.scalars {
        put_str(&mut w, name)?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(ck.note.len() as u64).to_le_bytes())?;
    w.write_all(ck.note.as_bytes())?;
    put_tensors(&mut w, &ck.params)?;
    match &ck.best {
        None => w.write_all(&[0])?,
        Some(b) => {
            w.write_all(&[1])?;
            put_tensors(&mut w, b)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// half-written checkpoint at `path`.
pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let f = File::create(&tmp)?;
        write_checkpoint_to(BufWriter::new(f), ck)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Src<R>(R);

impl<R: Read> Src<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => CheckpointError::Corrupt("unexpected end of file".into()),
            _ => CheckpointError::Io(e),
        })?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn vec(&mut self, len: u64, limit: u64) -> Result<Vec<u8>, CheckpointError> {
        if len > limit {
            return Err(CheckpointError::Corrupt(format!("length {len} too large")));
        }
        let mut v = vec![0u8; len as usize];
        self.0
            .read_exact(&mut v)
            .map_err(|_| CheckpointError::Corrupt("unexpected end of file".into()))?;
        Ok(v)
    }
    fn string(&mut self, len: u64) -> Result<String, CheckpointError> {
        String::from_utf8(self.vec(len, 1 << 32)?).map_err(|_| CheckpointError::Corrupt("invalid UTF-8".into()))
    }
    fn real(&mut self) -> Result<Real, CheckpointError> {
        Ok(Real::from_le_bytes(self.bytes()?))
    }

    fn tensors(&mut self, cfg: &LmConfig) -> Result<LmParams, CheckpointError> {
        let mut p = LmParams::zeros(cfg);
        let expected: Vec<(String, Partition)> = p.tensors().iter().map(|t| (t.full_name(), t.partition)).collect();
        let count = self.u32()? as usize;
        if count != expected.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{count} tensors, config implies {}",
                expected.len()
            )));
        }
        for ((name, part), (_, t)) in expected.into_iter().zip(p.tensors_mut()) {
            let len = self.u32()?;
            let got = self.string(len as u64)?;
            let got_part = match self.u8()? {
                0 => Partition::Embedding,
                1 => Partition::Recurrent,
                x => return Err(CheckpointError::Corrupt(format!("partition tag {x}"))),
            };
            if got != name || got_part != part {
                return Err(CheckpointError::Corrupt(format!("expected tensor {name} ({part}), found {got} ({got_part})")));
            }
            let (r, c) = (self.u64()?, self.u64()?);
            if (r as usize, c as usize) != t.shape() {
                return Err(CheckpointError::Corrupt(format!("{name} has shape {r}x{c}, expected {:?}", t.shape())));
            }
            for v in t.as_mut_slice() {
                *v = self.real()?;
            }
        }
        Ok(p)
    }
}

pub fn read_checkpoint_from<R: Read>(r: R) -> Result<Checkpoint, CheckpointError> {
    let mut s = Src(r);
    if s.bytes::<8>().map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = s.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let rb = s.u8()?;
    if rb != REAL_BYTES {
        return Err(CheckpointError::Precision {
            expected: REAL_BYTES,
            found: rb,
        });
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = usize::try_from(s.u64()?).map_err(|_| CheckpointError::Corrupt("dimension overflow".into()))?;
    }
    let config = LmConfig {
        vocab_size: dims[0],
        embed_dim: dims[1],
        hidden_dim: dims[2],
        layers: dims[3],
        bptt_len: dims[4],
        p_emb_drop: s.f64()?,
        p_weight_drop: s.f64()?,
        tie_weights: s.u8()? != 0,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let rng = match s.u8()? {
        0 => None,
        _ => Some(RngState {
            key: s.bytes()?,
            stream: s.u64()?,
            word_pos: u128::from_le_bytes(s.bytes()?),
        }),
    };
    let n = s.u32()?;
    let mut scalars = Vec::with_capacity(n.min(1024) as usize);
    for _ in 0..n {
        let len = s.u32()?;
        let name = s.string(len as u64)?;
        scalars.push((name, s.f64()?));
    }
    let len = s.u64()?;
    let note = s.string(len)?;
    let params = s.tensors(&config)?;
    let best = match s.u8()? {
        0 => None,
        _ => Some(s.tensors(&config)?),
    };
    let mut rest = [0u8; 1];
    if s.0.read(&mut rest)? != 0 {
        return Err(CheckpointError::Corrupt("trailing data".into()));
    }
    Ok(Checkpoint {
        config,
        params,
        best,
        rng,
        scalars,
        note,
    })
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint_from(BufReader::new(File::open(path)?))
}

/// Loads a single matrix-shaped tensor by name, for inspection tools.
pub fn tensor_by_name<'a>(params: &'a LmParams, name: &str) -> Option<&'a Mat> {
    params.tensors().into_iter().find(|t| t.full_name() == name).map(|t| t.tensor)
}
