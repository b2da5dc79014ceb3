//! Little-endian binary containers shared by model checkpoints, PCA/SVM
//! models, feature matrices and raw ranking-vector dumps.
//!
//! Block file layout:
//!
//! ```text
//! magic      4 bytes
//! version    u32
//! header     u32 length + UTF-8 text (architecture / model description)
//! blocks     u32 count, then per block: u64 length + length x f64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFile {
    pub magic: [u8; 4],
    pub header: String,
    pub blocks: Vec<Vec<f64>>,
}

impl BlockFile {
    pub fn new(magic: [u8; 4], header: impl Into<String>) -> Self {
        Self {
            magic,
            header: header.into(),
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, block: &[f64]) {
        self.blocks.push(block.to_vec());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.blocks.iter().map(|b| 8 + 8 * b.len()).sum();
        let mut out = Vec::with_capacity(16 + self.header.len() + payload);
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        out.extend_from_slice(self.header.as_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for block in &self.blocks {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], magic: [u8; 4], origin: &Path) -> Result<Self> {
        let mut cur = Cursor {
            bytes,
            pos: 0,
            origin,
        };
        let got = cur.take(4)?;
        if got != magic {
            return Err(Error::format(
                origin,
                format!("bad magic {:?}, expected {:?}", got, magic),
            ));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported version {version}"),
            ));
        }
        let hlen = cur.u32()? as usize;
        let header = std::str::from_utf8(cur.take(hlen)?)
            .map_err(|_| Error::format(origin, "header is not UTF-8"))?
            .to_string();
        let count = cur.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let len = cur.u64()? as usize;
            blocks.push(cur.f64s(len)?);
        }
        if cur.pos != bytes.len() {
            return Err(Error::format(origin, "trailing bytes after last block"));
        }
        Ok(Self {
            magic,
            header,
            blocks,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, magic: [u8; 4]) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, magic, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.origin, "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::format(self.origin, "block length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Row-major real matrix with a `(rows, cols)` u64 header.
pub fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::shape(cols, bad.len()));
    }
    let mut out = Vec::with_capacity(16 + rows.len() * cols * 8);
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for row in rows {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        origin: path,
    };
    let rows = cur.u64()? as usize;
    let cols = cur.u64()? as usize;
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        out.push(cur.f64s(cols)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after matrix"));
    }
    Ok(out)
}
