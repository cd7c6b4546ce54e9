//! `PNCK` checkpoint container: a flat list of named single-precision arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PNCK" | version: u8 = 1 | count: u32
//! per entry: name_len: u32 | name: UTF-8 | rank: u32 | extents: u32 * rank | data: f32 * prod(extents)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::autograd::{ParamStore, Tensor};
use crate::error::{bail, Result};

pub const MAGIC: &[u8; 4] = b"PNCK";
pub const VERSION: u8 = 1;

pub fn encode(params: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            bail!(Format, "checkpoint truncated while reading {what}");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<ParamStore<f32>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        bail!(Format, "bad checkpoint magic");
    }
    let version = c.take(1, "version")?[0];
    if version != VERSION {
        bail!(Format, "unsupported checkpoint version {version}");
    }
    let count = c.u32("entry count")?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| crate::Error::Format("entry name is not UTF-8".into()))?
            .to_owned();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0 && n <= (buf.len() - c.pos) / 4);
        let Some(n) = n else {
            bail!(Format, "entry {name:?} has invalid or oversized extents {shape:?}");
        };
        let data = c
            .take(4 * n, "data")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if params.contains(&name) {
            bail!(Format, "duplicate entry {name:?}");
        }
        params.insert(name, Tensor::new(&shape, data)?);
    }
    if c.pos != buf.len() {
        bail!(Format, "{} trailing bytes after last entry", buf.len() - c.pos);
    }
    Ok(params)
}

pub fn save(params: &ParamStore<f32>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(params))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamStore<f32>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut p = ParamStore::new();
        p.insert("l0.Ahat.W", Tensor::from_fn(&[2, 3], |i| i as f32));
        let bytes = encode(&p);
        assert_eq!(decode(&bytes).unwrap(), p);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(crate::Error::Format(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(crate::Error::Format(_))));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode(&v2), Err(crate::Error::Format(_))));
    }

    #[test]
    fn empty_store_is_nine_bytes() {
        let bytes = encode(&ParamStore::new());
        assert_eq!(bytes.len(), 9);
        assert!(decode(&bytes).unwrap().is_empty());
    }
}
