//! Flat binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"SPKN1"
//! repeated until end of file:
//!     u32          name length in bytes
//!     [u8]         UTF-8 name
//!     u32          rank (0..=3)
//!     u64 * rank   extents
//!     f64 * prod   payload, row-major, time innermost
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 5] = b"SPKN1";

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        let len = u32::try_from(bytes.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn encode(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_tensors(&mut buf, tensors).expect("writing to a Vec cannot fail");
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing SPKN1 magic".into()));
    }
    let mut cur = Cursor {
        bytes,
        pos: MAGIC.len(),
    };
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|e| Error::Format(format!("name is not UTF-8: {e}")))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        if rank > 3 {
            return Err(Error::Format(format!("tensor {name}: rank {rank} exceeds 3")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.u64("extent")?;
            shape.push(usize::try_from(d).map_err(|_| Error::Format(format!("extent {d} too large")))?);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor {name}: element count overflows")))?;
        let payload = cur.take(count.checked_mul(8).ok_or_else(|| Error::Format("payload overflows".into()))?, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    Ok(out)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn save(path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    std::fs::write(path, encode(tensors))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode(&std::fs::read(path)?)
}

/// Looks up a tensor by name.
pub fn find<'a>(tensors: &'a [(String, Tensor)], name: &str) -> Result<&'a Tensor> {
    tensors
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Format(format!("no tensor named {name}")))
}
