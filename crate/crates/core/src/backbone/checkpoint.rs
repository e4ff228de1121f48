//! Binary checkpoints.
//!
//! ```text
//! "WVMX" | version: u16 | count: u32
//! count x { name_len: u16 | name | dtype: u8 | ndim: u8 | dims: ndim x u32 }
//! payloads, in manifest order, little-endian
//! ```
//!
//! All integers are little-endian. The only dtype is `0` (f64).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"WVMX";
pub const VERSION: u16 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
}

pub fn encode(store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(store.len()).map_err(|_| Error::config("too many tensors for a checkpoint"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::config(format!("parameter name too long: {}", p.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(DTYPE_F64);
        let shape = p.tensor.value.shape();
        out.push(u8::try_from(shape.len()).map_err(|_| Error::config("tensor rank too large"))?);
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| Error::config("tensor dimension too large"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    for (_, p) in store.iter() {
        for v in p.tensor.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, encode(store)?)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_string(), offset: self.pos as u64, reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into named tensors.
pub fn decode(buf: &[u8], path: &str) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic, not a checkpoint"));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?).map_err(|_| r.fail("name is not UTF-8"))?.to_string();
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F64 {
            return Err(r.fail(format!("unknown dtype {dtype} for {name}")));
        }
        let ndim = r.u8("rank")? as usize;
        let shape = (0..ndim).map(|_| r.u32("dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        entries.push(Entry { name, shape });
    }
    let payload: usize = entries.iter().map(|e| numel(&e.shape) * 8).sum();
    let expected = r.pos + payload;
    if buf.len() != expected {
        return Err(Error::Format {
            path: path.to_string(),
            offset: buf.len() as u64,
            reason: format!("file is {} bytes, manifest declares {expected}", buf.len()),
        });
    }
    entries
        .into_iter()
        .map(|e| {
            let n = numel(&e.shape);
            let bytes = r.take(n * 8, "payload")?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Ok((e.name, Tensor::new(&e.shape, data)?))
        })
        .collect()
}

/// Loads a checkpoint into `store`. Names and shapes must match exactly.
pub fn load(store: &mut ParamStore, path: &Path) -> Result<()> {
    let buf = fs::read(path)?;
    let shown = path.display().to_string();
    let tensors = decode(&buf, &shown)?;
    if tensors.len() != store.len() {
        return Err(Error::config(format!("checkpoint {shown} holds {} tensors, model has {}", tensors.len(), store.len())));
    }
    for (name, t) in &tensors {
        let id = store.find(name).ok_or_else(|| Error::config(format!("checkpoint tensor {name} not in model")))?;
        if store.value(id).shape() != t.shape() {
            return Err(Error::config(format!(
                "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                t.shape(),
                store.value(id).shape()
            )));
        }
    }
    for (name, t) in tensors {
        let id = store.find(&name).expect("checked above");
        *store.value_mut(id) = t;
    }
    Ok(())
}
