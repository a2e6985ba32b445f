//! Single-file parameter checkpoints.
//!
//! Byte layout (all integers little-endian):
//!
//! | field            | size                 | notes                              |
//! |------------------|----------------------|------------------------------------|
//! | magic            | 4                    | ASCII `RCKP`                       |
//! | version          | u32                  | currently `1`                      |
//! | config hash      | 32                   | SHA-256 of the run config JSON     |
//! | config length    | u32                  | byte length of the next field      |
//! | config JSON      | config length        | UTF-8, the run config verbatim     |
//! | entry count      | u32                  |                                    |
//! | entries          | repeated             | see below                          |
//!
//! Each entry: name length `u16`, name bytes (UTF-8), rank `u8`, `rank`
//! dimensions as `u32`, then `prod(dims)` values as `f32`.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub config_json: String,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn from_store<T: Scalar>(store: &ParamStore<T>, config_hash: [u8; 32], config_json: String) -> Self {
        let entries = store
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        Checkpoint {
            config_hash,
            config_json,
            entries,
        }
    }

    /// Overwrite every store parameter from the entry of the same name.
    /// Missing names or shape disagreements are errors; extra entries are not.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for p in store.iter_mut() {
            let e = self
                .entries
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| TensorError::Format(format!("checkpoint has no entry `{}`", p.name)))?;
            if e.shape != p.value.shape() {
                return Err(TensorError::DimensionMismatch {
                    op: "checkpoint load",
                    lhs: p.value.shape().to_vec(),
                    rhs: e.shape.clone(),
                });
            }
            p.value = Tensor::new(&e.shape, e.values.iter().map(|&v| T::of(v as f64)).collect())?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.config_hash)?;
        write_len_u32(&mut w, self.config_json.len())?;
        w.write_all(self.config_json.as_bytes())?;
        write_len_u32(&mut w, self.entries.len())?;
        for e in &self.entries {
            let name_len = u16::try_from(e.name.len())
                .map_err(|_| TensorError::Format(format!("name too long: {}", e.name)))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            let rank = u8::try_from(e.shape.len())
                .map_err(|_| TensorError::Format(format!("rank too large for `{}`", e.name)))?;
            w.write_all(&[rank])?;
            for &d in &e.shape {
                write_len_u32(&mut w, d)?;
            }
            if e.values.len() != e.shape.iter().product::<usize>() {
                return Err(TensorError::Format(format!("entry `{}` length disagrees with shape", e.name)));
            }
            for v in &e.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TensorError::Format(format!("unsupported version {version}")));
        }
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let config_json =
            String::from_utf8(buf).map_err(|_| TensorError::Format("config is not UTF-8".into()))?;
        let count = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            r.read_exact(&mut name)?;
            let name =
                String::from_utf8(name).map_err(|_| TensorError::Format("name is not UTF-8".into()))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank)?;
            let shape = (0..rank[0])
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let mut raw = vec![0u8; numel * 4];
            r.read_exact(&mut raw)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(Entry { name, shape, values });
        }
        Ok(Checkpoint {
            config_hash,
            config_json,
            entries,
        })
    }
}

fn write_len_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| TensorError::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
