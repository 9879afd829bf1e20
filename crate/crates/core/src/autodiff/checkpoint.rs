//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   b"DTGANCKP"
//! version      u32       currently 1
//! rng_seed     u64
//! count        u32       number of entries
//! entry * count:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   ndim       u32
//!   dims       ndim * u64
//!   values     prod(dims) * f64 (IEEE-754, little-endian)
//! ```
//!
//! Entries appear in store insertion order. Frozen (non-trainable) arrays are
//! stored like any other and come back trainable.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{DiffArray, ParameterStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DTGANCKP";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(store: &ParameterStore) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + store.num_values() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&store.rng_seed().to_le_bytes());
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode(mut bytes: &[u8]) -> Result<ParameterStore> {
    let r = &mut bytes;
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = read_u64(r)?;
    let count = read_u32(r)?;
    let mut store = ParameterStore::new(seed);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        if name_len > r.len() {
            return Err(Error::Checkpoint("truncated name".into()));
        }
        let mut name = vec![0u8; name_len];
        read_exact(r, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            shape.push(read_u64(r)? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.len()))
            .ok_or_else(|| Error::Checkpoint(format!("truncated values for `{name}`")))?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let mut b = [0u8; 8];
            read_exact(r, &mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        let array = DiffArray::new(shape, values)
            .map_err(|e| Error::Checkpoint(format!("`{name}`: {e}")))?;
        store
            .insert(name, array)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if !r.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
    }
    Ok(store)
}

pub fn save(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(store)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ParameterStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of data".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
