//! Versioned binary container of metadata strings and named `f32` arrays.
//!
//! Layout (little-endian): magic `SAMCCKPT`, `u32` version, kind string,
//! `u32` metadata count and `(key, value)` strings, `u32` array count and for
//! each array its name, `u32` rank, `u64` dims and `f32` values, then the end
//! marker `SAMC_END`. Strings are `u32` length + UTF-8 bytes.

use std::path::Path;

use crate::error::{Result, SamcError};
use crate::nn::NamedArray;

const MAGIC: &[u8; 8] = b"SAMCCKPT";
const END: &[u8; 8] = b"SAMC_END";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<NamedArray<f32>>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Container {
            kind: kind.to_string(),
            ..Default::default()
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn push_array(&mut self, name: String, shape: Vec<usize>, data: Vec<f32>) {
        self.arrays.push(NamedArray { name, shape, data });
    }

    /// Arrays whose names start with `prefix`, with the prefix removed.
    pub fn arrays_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a NamedArray<f32>)> + 'a {
        self.arrays
            .iter()
            .filter_map(move |a| a.name.strip_prefix(prefix).map(|n| (n, a)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            put_str(&mut out, &a.name);
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for d in &a.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(END);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.corrupt("bad magic; not a checkpoint container"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.corrupt(&format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let kind = r.string()?;
        let n_meta = r.u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta.min(1024));
        for _ in 0..n_meta {
            meta.push((r.string()?, r.string()?));
        }
        let n_arrays = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(n_arrays.min(4096));
        for _ in 0..n_arrays {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(r.corrupt(&format!("array `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| r.corrupt(&format!("array `{name}` size overflows")))?;
            let raw = r.take(len.checked_mul(4).ok_or_else(|| r.corrupt("array too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.take(8)? != END {
            return Err(r.corrupt("missing end marker"));
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt("trailing bytes after end marker"));
        }
        Ok(Container { kind, meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| SamcError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| SamcError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> SamcError {
        SamcError::CorruptCheckpoint {
            path: self.path.to_path_buf(),
            reason: reason.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt(&format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt("invalid UTF-8 string"))
    }
}
