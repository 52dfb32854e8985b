//! Binary checkpoints.
//!
//! Layout, little-endian unless noted:
//!
//! ```text
//! "GCK1"  u32 version
//! u32 tensor count, then per tensor:
//!     u16 name length, name (UTF-8), u8 ndim, u32 × ndim extents,
//!     u8 dtype tag (0 = f32, 1 = f64), raw element data
//! u32 optimizer state count, then per state:
//!     u16 name length, name, u64 step, u8 poisoned, u8 dtype tag,
//!     u32 m length, m data, u32 v length, v data
//! u64 seed, 4 × u64 generator state at the start of the current epoch
//! u64 step, u32 epoch, u32 batch within the epoch
//! f64 loss sum, u64 correct, u64 samples seen so far in the epoch
//! ```
//!
//! Tensors are the model parameters followed by batch-norm running
//! statistics, in model order.

use std::fs;
use std::path::Path;

use gcopt_core::optim::OptimizerState;
use gcopt_core::train::{Position, Trainer};
use gcopt_core::{DType, Error as CoreError, Scalar};

use crate::error::{BenchError, Result};

pub const MAGIC: &[u8; 4] = b"GCK1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub dtype: DType,
    /// Raw little-endian elements.
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredState {
    pub name: String,
    pub step: u64,
    pub poisoned: bool,
    pub dtype: DType,
    pub m: Vec<u8>,
    pub v: Vec<u8>,
}

/// Running sums for the epoch in progress, so a mid-epoch resume reports
/// the same epoch averages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochTotals {
    pub loss_sum: f64,
    pub correct: u64,
    pub seen: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<StoredTensor>,
    pub states: Vec<StoredState>,
    pub seed: u64,
    pub rng: [u64; 4],
    pub position: Position,
    pub totals: EpochTotals,
}

fn to_bytes<T: Scalar>(v: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.len() * T::DTYPE.size());
    for &x in v {
        x.write_le(&mut out);
    }
    out
}

fn from_bytes<T: Scalar>(b: &[u8]) -> Vec<T> {
    b.chunks_exact(T::DTYPE.size()).map(T::read_le).collect()
}

fn incompatible(tensor: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Core(CoreError::Incompatible {
        tensor: tensor.to_string(),
        reason: reason.into(),
    })
}

impl Checkpoint {
    pub fn from_trainer<T: Scalar>(trainer: &Trainer<T>, totals: EpochTotals) -> Self {
        let mut tensors: Vec<StoredTensor> = trainer
            .model
            .params()
            .iter()
            .map(|p| StoredTensor {
                name: p.name.clone(),
                dims: p.value.dims().to_vec(),
                dtype: T::DTYPE,
                bytes: to_bytes(p.value.data()),
            })
            .collect();
        for (name, buf) in trainer.model.buffers() {
            tensors.push(StoredTensor {
                name,
                dims: vec![buf.len()],
                dtype: T::DTYPE,
                bytes: to_bytes(buf),
            });
        }
        let states = trainer
            .states
            .iter()
            .map(|s| StoredState {
                name: s.name().to_string(),
                step: s.step,
                poisoned: s.is_poisoned(),
                dtype: T::DTYPE,
                m: to_bytes(&s.m),
                v: to_bytes(&s.v),
            })
            .collect();
        Checkpoint {
            tensors,
            states,
            seed: trainer.seed(),
            rng: trainer.epoch_rng_state(),
            position: trainer.position(),
            totals,
        }
    }

    /// Loads weights, buffers, optimizer states and position into a trainer
    /// built from the same model spec and seed.
    pub fn apply<T: Scalar>(&self, trainer: &mut Trainer<T>) -> Result<EpochTotals> {
        if self.seed != trainer.seed() {
            return Err(incompatible(
                "rng",
                format!("checkpoint seed {} differs from run seed {}", self.seed, trainer.seed()),
            ));
        }
        let mut expected: Vec<(String, Vec<usize>)> = trainer
            .model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.value.dims().to_vec()))
            .collect();
        expected.extend(trainer.model.buffers().into_iter().map(|(n, b)| (n, vec![b.len()])));
        for t in &self.tensors {
            let Some((_, dims)) = expected.iter().find(|(n, _)| *n == t.name) else {
                return Err(incompatible(&t.name, "no such tensor in the model"));
            };
            if *dims != t.dims {
                return Err(incompatible(
                    &t.name,
                    format!("stored {:?}, model has {:?}", t.dims, dims),
                ));
            }
            if t.dtype != T::DTYPE {
                return Err(incompatible(
                    &t.name,
                    format!("stored as {}, run uses {}", t.dtype.name(), T::DTYPE.name()),
                ));
            }
        }
        if let Some((name, _)) = expected
            .iter()
            .find(|(n, _)| !self.tensors.iter().any(|t| t.name == *n))
        {
            return Err(incompatible(name, "missing from checkpoint"));
        }
        if self.states.len() != trainer.states.len() {
            return Err(incompatible(
                "optimizer",
                format!(
                    "{} states stored, model has {}",
                    self.states.len(),
                    trainer.states.len()
                ),
            ));
        }
        let mut states = Vec::with_capacity(self.states.len());
        for (s, current) in self.states.iter().zip(&trainer.states) {
            if s.name != current.name() {
                return Err(incompatible(
                    &s.name,
                    format!("expected optimizer state `{}`", current.name()),
                ));
            }
            if s.dtype != T::DTYPE {
                return Err(incompatible(&s.name, "optimizer state dtype differs from run"));
            }
            let m: Vec<T> = from_bytes(&s.m);
            let v: Vec<T> = from_bytes(&s.v);
            if m.len() != current.len() {
                return Err(incompatible(
                    &s.name,
                    format!("{} moment entries, expected {}", m.len(), current.len()),
                ));
            }
            states.push(OptimizerState::from_parts(s.name.clone(), s.step, m, v, s.poisoned)?);
        }

        let find = |name: &str| self.tensors.iter().find(|t| t.name == name).expect("checked above");
        for p in trainer.model.params_mut() {
            let t = find(&p.name);
            p.value.data_mut().copy_from_slice(&from_bytes::<T>(&t.bytes));
        }
        for (name, buf) in trainer.model.buffers_mut() {
            *buf = from_bytes(&find(&name).bytes);
        }
        trainer.states = states;
        trainer.restore(self.position, self.rng);
        Ok(self.totals)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_name(&mut out, &t.name);
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(t.dtype.tag());
            out.extend_from_slice(&t.bytes);
        }
        out.extend_from_slice(&(self.states.len() as u32).to_le_bytes());
        for s in &self.states {
            put_name(&mut out, &s.name);
            out.extend_from_slice(&s.step.to_le_bytes());
            out.push(s.poisoned as u8);
            out.push(s.dtype.tag());
            for buf in [&s.m, &s.v] {
                out.extend_from_slice(&((buf.len() / s.dtype.size()) as u32).to_le_bytes());
                out.extend_from_slice(buf);
            }
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        for w in self.rng {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.position.step.to_le_bytes());
        out.extend_from_slice(&self.position.epoch.to_le_bytes());
        out.extend_from_slice(&self.position.batch.to_le_bytes());
        out.extend_from_slice(&self.totals.loss_sum.to_le_bytes());
        out.extend_from_slice(&self.totals.correct.to_le_bytes());
        out.extend_from_slice(&self.totals.seen.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(BenchError::Format("bad magic, expected GCK1".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(BenchError::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.name()?;
            let ndim = r.u8()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let dtype = r.dtype()?;
            let n: usize = dims.iter().product();
            let bytes = r.take(n * dtype.size())?.to_vec();
            tensors.push(StoredTensor {
                name,
                dims,
                dtype,
                bytes,
            });
        }
        let count = r.u32()?;
        let mut states = Vec::new();
        for _ in 0..count {
            let name = r.name()?;
            let step = r.u64()?;
            let poisoned = match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(r.err(format!("bad poisoned flag {b}"))),
            };
            let dtype = r.dtype()?;
            let m_len = r.u32()? as usize;
            let m = r.take(m_len * dtype.size())?.to_vec();
            let v_len = r.u32()? as usize;
            let v = r.take(v_len * dtype.size())?.to_vec();
            states.push(StoredState {
                name,
                step,
                poisoned,
                dtype,
                m,
                v,
            });
        }
        let seed = r.u64()?;
        let rng = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];
        let position = Position {
            step: r.u64()?,
            epoch: r.u32()?,
            batch: r.u32()?,
        };
        let totals = EpochTotals {
            loss_sum: f64::from_bits(r.u64()?),
            correct: r.u64()?,
            seen: r.u64()?,
        };
        if r.at != bytes.len() {
            return Err(r.err("trailing bytes"));
        }
        Ok(Checkpoint {
            tensors,
            states,
            seed,
            rng,
            position,
            totals,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| BenchError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> BenchError {
        BenchError::Format(format!("{} at byte {}", msg.into(), self.at))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(self.err(format!("truncated: needed {n} more bytes")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dtype(&mut self) -> Result<DType> {
        let tag = self.u8()?;
        DType::from_tag(tag).ok_or_else(|| self.err(format!("unknown dtype tag {tag}")))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err("name is not UTF-8"))
    }
}
