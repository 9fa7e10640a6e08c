//! LSOL1 binary field format.
//!
//! Each record is a fixed 128-byte header followed by the payload. All
//! numbers are little-endian.
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `LSOL1\0\0\0`                        |
//! | 8      | 4    | u32 dimension (1 or 2)                    |
//! | 12     | 4    | reserved, zero                            |
//! | 16     | 8    | u64 nx                                    |
//! | 24     | 8    | u64 ny (1 for a line)                     |
//! | 32     | 8    | f64 lx                                    |
//! | 40     | 8    | f64 ly (transverse thickness for a line)  |
//! | 48     | 16   | frame tag, NUL padded                     |
//! | 64     | 32   | variable name, NUL padded                 |
//! | 96     | 8    | f64 time                                  |
//! | 104    | 24   | reserved, zero                            |
//!
//! The payload holds nx·ny pairs (Re, Im) of f64, row-major with x fastest.
//! Files may concatenate several records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Frame, GridSpec};

pub const MAGIC: [u8; 8] = *b"LSOL1\0\0\0";
pub const HEADER_LEN: usize = 128;
const FRAME_LEN: usize = 16;
const NAME_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct GridHeader {
    pub grid: GridSpec,
    pub frame: Frame,
    pub variable: String,
    pub time: f64,
}

impl GridHeader {
    pub fn payload_len(&self) -> usize {
        16 * self.grid.len()
    }

    fn encode(&self) -> Result<[u8; HEADER_LEN]> {
        let mut h = [0u8; HEADER_LEN];
        h[0..8].copy_from_slice(&MAGIC);
        h[8..12].copy_from_slice(&(self.grid.dim as u32).to_le_bytes());
        h[16..24].copy_from_slice(&(self.grid.n[0] as u64).to_le_bytes());
        h[24..32].copy_from_slice(&(self.grid.n[1] as u64).to_le_bytes());
        h[32..40].copy_from_slice(&self.grid.length[0].to_le_bytes());
        h[40..48].copy_from_slice(&self.grid.length[1].to_le_bytes());
        put_str(&mut h[48..48 + FRAME_LEN], self.frame.tag())?;
        put_str(&mut h[64..64 + NAME_LEN], &self.variable)?;
        h[96..104].copy_from_slice(&self.time.to_le_bytes());
        Ok(h)
    }

    fn decode(h: &[u8; HEADER_LEN]) -> Result<Self> {
        if h[0..8] != MAGIC {
            return Err(Error::Format("bad magic, not an LSOL1 record".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let dim = u32_at(8) as usize;
        let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::Format(format!("axis size {v} too large")));
        let grid = GridSpec { dim, n: [to_usize(u64_at(16))?, to_usize(u64_at(24))?], length: [f64_at(32), f64_at(40)] };
        grid.validate().map_err(|e| Error::Format(format!("invalid grid in header: {e}")))?;
        let tag = get_str(&h[48..48 + FRAME_LEN])?;
        let frame = Frame::from_tag(&tag).ok_or_else(|| Error::Format(format!("unknown frame tag '{tag}'")))?;
        Ok(GridHeader { grid, frame, variable: get_str(&h[64..64 + NAME_LEN])?, time: f64_at(96) })
    }
}

fn put_str(dst: &mut [u8], s: &str) -> Result<()> {
    let b = s.as_bytes();
    if b.len() > dst.len() || b.contains(&0) {
        return Err(Error::InvalidParams(format!("'{s}' does not fit a {}-byte header field", dst.len())));
    }
    dst[..b.len()].copy_from_slice(b);
    Ok(())
}

fn get_str(src: &[u8]) -> Result<String> {
    let end = src.iter().position(|c| *c == 0).unwrap_or(src.len());
    if src[end..].iter().any(|c| *c != 0) {
        return Err(Error::Format("text field has bytes after its terminator".into()));
    }
    String::from_utf8(src[..end].to_vec()).map_err(|_| Error::Format("text field is not UTF-8".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridRecord {
    pub header: GridHeader,
    pub field: ComplexField,
}

impl GridRecord {
    pub fn new(field: ComplexField, variable: &str, time: f64) -> Self {
        let header = GridHeader { grid: field.grid.clone(), frame: field.frame, variable: variable.to_string(), time };
        GridRecord { header, field }
    }
}

fn write_one(w: &mut impl Write, rec: &GridRecord) -> Result<()> {
    if rec.field.values.len() != rec.header.grid.len() {
        return Err(Error::InvalidParams("field size does not match its grid".into()));
    }
    w.write_all(&rec.header.encode()?)?;
    let mut buf = Vec::with_capacity(rec.header.payload_len());
    for v in &rec.field.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[GridRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        write_one(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid(path: &Path, field: &ComplexField, variable: &str, time: f64) -> Result<()> {
    write_records(path, &[GridRecord::new(field.clone(), variable, time)])
}

/// Reads exactly `buf.len()` bytes; `Ok(false)` on a clean end of file.
fn fill(r: &mut impl Read, buf: &mut [u8]) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 if got == 0 => return Ok(false),
            0 => return Err(Error::Format(format!("truncated: {got} of {} bytes", buf.len()))),
            k => got += k,
        }
    }
    Ok(true)
}

fn read_one(r: &mut impl Read) -> Result<Option<GridRecord>> {
    let mut h = [0u8; HEADER_LEN];
    if !fill(r, &mut h)? {
        return Ok(None);
    }
    let header = GridHeader::decode(&h)?;
    let mut payload = vec![0u8; header.payload_len()];
    if !fill(r, &mut payload)? {
        return Err(Error::Format("header without payload".into()));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| C64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
        .collect();
    let field = ComplexField { grid: header.grid.clone(), values, frame: header.frame };
    Ok(Some(GridRecord { header, field }))
}

/// Every record in the file, in order.
pub fn read_records(path: &Path) -> Result<Vec<GridRecord>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(rec) = read_one(&mut r)? {
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    Ok(out)
}

/// The first record.
pub fn read_grid(path: &Path) -> Result<GridRecord> {
    let mut r = BufReader::new(File::open(path)?);
    read_one(&mut r)?.ok_or_else(|| Error::Format("empty file".into()))
}

/// Metadata of the first record without touching its payload.
pub fn read_header(path: &Path) -> Result<GridHeader> {
    let mut f = File::open(path)?;
    let mut h = [0u8; HEADER_LEN];
    if !fill(&mut f, &mut h)? {
        return Err(Error::Format("empty file".into()));
    }
    GridHeader::decode(&h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(n: usize, seed: u64) -> ComplexField {
        let g = GridSpec::line(n, 12.5).unwrap();
        let mut s = seed;
        let values = (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                C64::new(f64::from_bits(s >> 2), -(s as f64) * 1e-300)
            })
            .collect();
        ComplexField::from_values(g, values, Frame::Holding).unwrap()
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lsol");
        let f = ComplexField::zeros(GridSpec::square(16, 3.0).unwrap(), Frame::Cavity);
        write_grid(&p, &f, "sigma1", 2.5).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 128 + 16 * 256);
        assert_eq!(&bytes[..8], b"LSOL1\0\0\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 16);
        assert_eq!(&bytes[48..54], b"cavity");
        assert_eq!(&bytes[64..70], b"sigma1");
        assert_eq!(f64::from_le_bytes(bytes[96..104].try_into().unwrap()), 2.5);
        assert!(bytes[104..128].iter().all(|b| *b == 0));
    }

    #[test]
    fn multi_record_and_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.lsol");
        let recs = vec![GridRecord::new(field(32, 1), "E", 0.0), GridRecord::new(field(32, 2), "E", 1.0)];
        write_records(&p, &recs).unwrap();
        assert_eq!(read_records(&p).unwrap(), recs);
        let h = read_header(&p).unwrap();
        assert_eq!(h.variable, "E");
        assert_eq!(h.grid.n, [32, 1]);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.lsol");
        write_grid(&p, &field(64, 3), "E", 0.0).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_grid(&p), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(read_grid(&p), Err(Error::Format(_))));
        std::fs::write(&p, &bytes[..100]).unwrap();
        assert!(matches!(read_header(&p), Err(Error::Format(_))));
    }

    #[test]
    fn overlong_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let name = "x".repeat(33);
        assert!(write_grid(&dir.path().join("n"), &field(16, 0), &name, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), k in 4u32..9, t in -1e6f64..1e6) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.lsol");
            let f = field(1 << k, seed);
            write_grid(&p, &f, "E", t).unwrap();
            let back = read_grid(&p).unwrap();
            prop_assert_eq!(back.header.time.to_bits(), t.to_bits());
            for (a, b) in back.field.values.iter().zip(&f.values) {
                prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
                prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }
}
