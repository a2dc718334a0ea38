//! Binary checkpoint format.
//!
//! ```text
//! "AWDLM01" u32 version
//! config text | vocab | tensors | optimizer | stopping logs | rng | progress | history
//! u32 crc32 of everything before it
//! ```
//!
//! Integers and floats are little-endian. Strings and arrays carry a length
//! prefix. Each tensor stores its name, a dtype tag, its shape and its data.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::LMParameters;
use crate::numerics::{RngState, Scalar};
use crate::optim::TrainerState;

use super::config::RunConfig;

pub const MAGIC: &[u8; 7] = b"AWDLM01";
pub const VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

/// Training phase the checkpoint was taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    FineTune,
}

/// One per-epoch metrics line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricLine {
    pub epoch: u64,
    pub train_ppl: f64,
    pub valid_ppl: f64,
    pub lr: f64,
    pub triggered: bool,
}

impl MetricLine {
    pub const HEADER: &'static str = "epoch\ttrain_ppl\tvalid_ppl\tlr\ttriggered";

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.4}\t{}\t{}",
            self.epoch, self.train_ppl, self.valid_ppl, self.lr, self.triggered as u8
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub config: RunConfig,
    pub vocab: Vec<String>,
    pub params: LMParameters<F>,
    pub optimizer: TrainerState,
    /// validation history of the fine-tuning stop rule
    pub stop_logs: Vec<f64>,
    pub rng: RngState,
    pub phase: Phase,
    /// epochs completed in the current phase
    pub epoch: u64,
    pub lr: f64,
    pub best_valid: f64,
    pub history: Vec<MetricLine>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.len(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("bad flag byte {b} at {}", self.pos - 1))),
        }
    }
    /// A length prefix, bounded by the bytes left so corrupt lengths fail
    /// before allocating.
    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.buf.len() - self.pos) as u64;
        if n.saturating_mul(elem.max(1) as u64) > left {
            return Err(Error::Checkpoint(format!("length {n} at byte {} exceeds file", self.pos - 8)));
        }
        Ok(n as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
}

fn dtype<F: Scalar>() -> u8 {
    if F::BYTES == 4 {
        DTYPE_F32
    } else {
        DTYPE_F64
    }
}

impl<F: Scalar> Checkpoint<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.str(&self.config.dump());

        w.len(self.vocab.len());
        self.vocab.iter().for_each(|t| w.str(t));

        let names = self.params.names();
        let tensors = self.params.tensors();
        w.len(tensors.len());
        for (name, t) in names.iter().zip(tensors) {
            w.str(name);
            w.u8(dtype::<F>());
            w.len(t.shape().len());
            t.shape().iter().for_each(|&d| w.len(d));
            for &x in t.data() {
                x.write_le(&mut w.0);
            }
        }

        let o = &self.optimizer;
        w.u64(o.k);
        w.u64(o.t);
        w.u8(o.trigger.is_some() as u8);
        w.u64(o.trigger.unwrap_or(0));
        w.f64s(&o.logs);
        w.len(o.iterate_sum.len());
        o.iterate_sum.iter().for_each(|s| w.f64s(s));
        w.u64(o.avg_count);

        w.f64s(&self.stop_logs);

        w.u64(self.rng.seed);
        w.u128(self.rng.word_pos);
        w.u64(self.rng.mask_draws);

        w.u8(match self.phase {
            Phase::Train => 0,
            Phase::FineTune => 1,
        });
        w.u64(self.epoch);
        w.f64(self.lr);
        w.f64(self.best_valid);

        w.len(self.history.len());
        for m in &self.history {
            w.u64(m.epoch);
            w.f64(m.train_ppl);
            w.f64(m.valid_ppl);
            w.f64(m.lr);
            w.u8(m.triggered as u8);
        }

        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {VERSION})"
            )));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("CRC mismatch: file is truncated or corrupted".into()));
        }

        let mut r = Reader { buf: body, pos: 11 };
        let config = RunConfig::from_text(&r.str()?)?;

        let n = r.len(8)?;
        let vocab = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;

        let dims = config.dims(vocab.len());
        let mut params = LMParameters::<F>::zeros(dims)?;
        let names = params.names();
        let count = r.len(1)?;
        if count != names.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, model has {}",
                names.len()
            )));
        }
        for (expected, t) in names.iter().zip(params.tensors_mut()) {
            let name = r.str()?;
            if &name != expected {
                return Err(Error::Checkpoint(format!("expected tensor {expected}, found {name}")));
            }
            let tag = r.u8()?;
            if tag != dtype::<F>() {
                return Err(Error::Checkpoint(format!(
                    "{name}: stored dtype tag {tag}, expected {}",
                    dtype::<F>()
                )));
            }
            let nd = r.len(8)?;
            let shape = (0..nd).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: stored shape {shape:?}, config implies {:?}",
                    t.shape()
                )));
            }
            let raw = r.take(t.numel() * F::BYTES)?;
            for (x, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(F::BYTES)) {
                *x = F::read_le(chunk);
            }
        }

        let k = r.u64()?;
        let t = r.u64()?;
        let has_trigger = r.bool()?;
        let trigger_at = r.u64()?;
        let logs = r.f64s()?;
        let n = r.len(8)?;
        let iterate_sum = (0..n).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?;
        let avg_count = r.u64()?;
        let optimizer = TrainerState {
            k,
            t,
            trigger: has_trigger.then_some(trigger_at),
            logs,
            iterate_sum,
            avg_count,
        };

        let stop_logs = r.f64s()?;
        let rng = RngState {
            seed: r.u64()?,
            word_pos: r.u128()?,
            mask_draws: r.u64()?,
        };
        let phase = match r.u8()? {
            0 => Phase::Train,
            1 => Phase::FineTune,
            b => return Err(Error::Checkpoint(format!("unknown phase tag {b}"))),
        };
        let epoch = r.u64()?;
        let lr = r.f64()?;
        let best_valid = r.f64()?;

        let n = r.len(33)?;
        let history = (0..n)
            .map(|_| {
                Ok(MetricLine {
                    epoch: r.u64()?,
                    train_ppl: r.f64()?,
                    valid_ppl: r.f64()?,
                    lr: r.f64()?,
                    triggered: r.bool()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            config,
            vocab,
            params,
            optimizer,
            stop_logs,
            rng,
            phase,
            epoch,
            lr,
            best_valid,
            history,
        })
    }

    /// Writes through a temporary file and renames, so a crash never leaves
    /// a half-written checkpoint under `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_checkpoint<F: Scalar>(ckpt: &Checkpoint<F>, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<F>> {
    Checkpoint::load(path)
}
