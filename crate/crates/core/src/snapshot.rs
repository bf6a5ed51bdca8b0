//! Binary snapshots of coefficient fields: magic "CGF1", little-endian
//! header (d, l_cells, seed, tag), then per cell the d*d entries of s
//! followed by the d*d entries of k, cells row-major. Reads re-validate
//! every cell through the field constructor.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fieldgen::CoefficientField;

const MAGIC: &[u8; 4] = b"CGF1";

/// Serialize a field to the CGF1 byte layout.
pub fn to_bytes(field: &CoefficientField) -> Vec<u8> {
    let d = field.d();
    let dd = d * d;
    let cells = field.cell_count();
    let tag = field.tag().as_bytes();
    let mut out = Vec::with_capacity(4 + 4 + 4 + 8 + 4 + tag.len() + cells * dd * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(field.l_cells() as u32).to_le_bytes());
    out.extend_from_slice(&field.seed().to_le_bytes());
    out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
    out.extend_from_slice(tag);
    let s = field.raw_s();
    let k = field.raw_k();
    for c in 0..cells {
        for v in &s[c * dd..(c + 1) * dd] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &k[c * dd..(c + 1) * dd] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse and validate a CGF1 payload.
pub fn from_bytes(bytes: &[u8]) -> Result<CoefficientField> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::format(format!("bad magic {magic:02x?}, expected \"CGF1\"")));
    }
    let d = cursor.u32()? as usize;
    let l_cells = cursor.u32()? as usize;
    let seed = cursor.u64()?;
    let tag_len = cursor.u32()? as usize;
    let tag = std::str::from_utf8(cursor.take(tag_len)?)
        .map_err(|e| Error::format(format!("tag is not UTF-8: {e}")))?
        .to_string();
    if d == 0 || d > 2 {
        return Err(Error::format(format!("dimension {d} out of range")));
    }
    let dd = d * d;
    let cells = l_cells
        .checked_pow(d as u32)
        .ok_or_else(|| Error::format("cell count overflow"))?;
    let need = cells
        .checked_mul(dd * 16)
        .ok_or_else(|| Error::format("payload size overflow"))?;
    if cursor.remaining() != need {
        return Err(Error::format(format!(
            "payload has {} bytes of cell data, expected {need}",
            cursor.remaining()
        )));
    }
    let mut s = Vec::with_capacity(cells * dd);
    let mut k = Vec::with_capacity(cells * dd);
    for _ in 0..cells {
        for _ in 0..dd {
            s.push(cursor.f64()?);
        }
        for _ in 0..dd {
            k.push(cursor.f64()?);
        }
    }
    CoefficientField::from_parts(d, l_cells, seed, tag, s, k)
}

pub fn write_file(field: &CoefficientField, path: &Path) -> Result<()> {
    let bytes = to_bytes(field);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<CoefficientField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(format!(
                "truncated payload: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgen;

    #[test]
    fn roundtrip_is_bitwise() {
        let f = fieldgen::checkerboard(2, 9, 1.0, 9.0, 0.5, 11).unwrap();
        let bytes = to_bytes(&f);
        let g = from_bytes(&bytes).unwrap();
        assert_eq!(f.d(), g.d());
        assert_eq!(f.l_cells(), g.l_cells());
        assert_eq!(f.seed(), g.seed());
        assert_eq!(f.tag(), g.tag());
        assert_eq!(to_bytes(&g), bytes);
    }

    #[test]
    fn roundtrip_d1() {
        let f = fieldgen::laminate(1, 27, 0, 1.0, 100.0).unwrap();
        let g = from_bytes(&to_bytes(&f)).unwrap();
        assert_eq!(g.s_at([26, 0])[0], f.s_at([26, 0])[0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let f = fieldgen::laminate(1, 3, 0, 1.0, 2.0).unwrap();
        let mut bytes = to_bytes(&f);
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncation_and_trailing() {
        let f = fieldgen::laminate(1, 3, 0, 1.0, 2.0).unwrap();
        let bytes = to_bytes(&f);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
    }

    #[test]
    fn rejects_invalid_cells() {
        let f = fieldgen::laminate(1, 3, 0, 1.0, 2.0).unwrap();
        let mut bytes = to_bytes(&f);
        // first cell s entry lives right after the header; overwrite with -1
        let tag_len = f.tag().len();
        let off = 4 + 4 + 4 + 8 + 4 + tag_len;
        bytes[off..off + 8].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.cgf");
        let f = fieldgen::stream_matrix(9, 0.3, 1, 5).unwrap();
        write_file(&f, &path).unwrap();
        let g = read_file(&path).unwrap();
        assert_eq!(to_bytes(&g), to_bytes(&f));
    }
}
