//! Binary snapshot layout (all integers little-endian):
//!
//! ```text
//! "HLEM" | version u32 | record count u32 | dim u32
//! per record: label length u16 | UTF-8 label | dim x f32
//! ```

use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::vectors::{EmbeddingSnapshot, EmbeddingVector};

pub const MAGIC: &[u8; 4] = b"HLEM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode_snapshot(snapshot: &EmbeddingSnapshot) -> Result<Vec<u8>> {
    let dim = snapshot.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + snapshot.len() * (2 + 16 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(snapshot.len())
        .map_err(|_| Error::Parameter("too many records for the snapshot format".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (label, v) in snapshot.records() {
        let len = u16::try_from(label.len())
            .map_err(|_| Error::Parameter(format!("label longer than 65535 bytes: {label:.32}...")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(label.as_bytes());
        for &x in v.as_slice() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.path,
                Location::Byte(self.pos as u64),
                format!("truncated while reading {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn err(&self, at: usize, message: impl Into<String>) -> Error {
        Error::format(self.path, Location::Byte(at as u64), message)
    }
}

pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<EmbeddingSnapshot> {
    let mut c = Cursor { bytes, pos: 0, path };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(c.err(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(c.err(4, format!("unsupported version {version}")));
    }
    let count = c.u32("record count")? as usize;
    let dim = c.u32("dimension")? as usize;
    if dim == 0 {
        return Err(c.err(12, "dimension must be > 0"));
    }
    // Each record needs at least 2 + 4*dim bytes; reject impossible counts before allocating.
    let min_record = 2 + 4 * dim;
    if count.saturating_mul(min_record) > bytes.len() - HEADER_LEN {
        return Err(c.err(HEADER_LEN, format!("{count} records of dim {dim} cannot fit in {} bytes", bytes.len())));
    }
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut snap = EmbeddingSnapshot::new(dim, tag)?;
    for r in 0..count {
        let at = c.pos;
        let len_bytes = c.take(2, "label length")?;
        let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
        let label_at = c.pos;
        let label = std::str::from_utf8(c.take(len, "label")?)
            .map_err(|e| c.err(label_at, format!("record {r}: label is not UTF-8: {e}")))?
            .to_string();
        let values_at = c.pos;
        let raw = c.take(4 * dim, "vector")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let v = EmbeddingVector::from_f32(&values)
            .map_err(|e| c.err(values_at, format!("record {r} (starting at byte {at}): {e}")))?;
        snap.push(label, v)?;
    }
    if c.pos != bytes.len() {
        return Err(c.err(c.pos, format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(snap)
}

pub fn read_snapshot(path: &Path) -> Result<EmbeddingSnapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes, path)
}

pub fn write_snapshot(snapshot: &EmbeddingSnapshot, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode_snapshot(snapshot)?)
}
