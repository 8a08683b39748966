//! Field persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic  "HBF1"
//! u16    version (1)
//! u32    d
//! u32    n_t
//! u32    n_x
//! f64    t_max
//! f64    L
//! u32    q
//! f64    H_0 .. H_d
//! f64    values, row-major (t, x_1, ..., x_d)
//! ```
//!
//! The field kind is not stored; it follows from the value count
//! (`(n_t+1)(n_x+1)^d` sheet, `(n_t+1) n_x^d` solution, `n_t n_x^d` white noise).
//! The seed is not stored either; run manifests record it.

use std::io::{Read, Write};

use super::{FieldKind, FieldSample, GridSpec, SeedSpec};
use crate::error::{Error, Result};
use crate::tensor;

pub const MAGIC: &[u8; 4] = b"HBF1";
pub const VERSION: u16 = 1;

pub fn write_binary<W: Write>(field: &FieldSample, mut w: W) -> Result<()> {
    let g = &field.grid;
    let mut buf = Vec::with_capacity(64 + 8 * field.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [g.d, g.n_t, g.n_x] {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&g.t_max.to_le_bytes());
    buf.extend_from_slice(&g.length.to_le_bytes());
    buf.extend_from_slice(&field.q.to_le_bytes());
    if field.hurst.len() != g.d + 1 {
        return Err(Error::Format("Hurst vector length must be d+1".into()));
    }
    for h in &field.hurst {
        buf.extend_from_slice(&h.to_le_bytes());
    }
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<FieldSample> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected HBF1".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = cur.u32()? as usize;
    let n_t = cur.u32()? as usize;
    let n_x = cur.u32()? as usize;
    let t_max = cur.f64()?;
    let length = cur.f64()?;
    let q = cur.u32()?;
    let hurst = (0..=d).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let grid = GridSpec::new(t_max, n_t, length, n_x, d)?;
    let rest = bytes.len() - cur.pos;
    if !rest.is_multiple_of(8) {
        return Err(Error::Format("trailing bytes after values".into()));
    }
    let count = rest / 8;
    let kind = [FieldKind::Sheet, FieldKind::Solution, FieldKind::WhiteNoise]
        .into_iter()
        .find(|&k| grid.len(k) == count)
        .ok_or_else(|| Error::Format(format!("{count} values do not match any field kind of this grid")))?;
    let values = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    Ok(FieldSample { kind, grid, q, hurst, seed: SeedSpec::default(), values })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Lattice coordinates of a flat index.
pub fn coordinates(field: &FieldSample, flat: usize) -> Vec<f64> {
    let shape = field.shape();
    let mut idx = vec![0; shape.len()];
    tensor::unravel(flat, &shape, &mut idx);
    let g = &field.grid;
    idx.iter()
        .enumerate()
        .map(|(i, &k)| {
            let step = if i == 0 { g.dt() } else { g.dx() };
            // white-noise cells are labelled by their lower corner
            k as f64 * step
        })
        .collect()
}

/// One row per lattice point: coordinates then value, with a header row.
pub fn write_csv<W: Write>(field: &FieldSample, mut w: W) -> Result<()> {
    let mut header = String::from("t");
    for i in 1..=field.grid.d {
        header.push_str(&format!(",x{i}"));
    }
    header.push_str(",value\n");
    let mut out = header;
    for (f, v) in field.values.iter().enumerate() {
        for (i, c) in coordinates(field, f).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{c}"));
        }
        out.push_str(&format!(",{v}\n"));
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_json<W: Write>(field: &FieldSample, w: W) -> Result<()> {
    serde_json::to_writer(w, field).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(kind: FieldKind) -> FieldSample {
        let grid = GridSpec::new(0.5, 3, 2.0, 2, 1).unwrap();
        let n = grid.len(kind);
        FieldSample {
            kind,
            grid,
            q: 2,
            hurst: vec![0.8, 0.7],
            seed: SeedSpec::default(),
            values: (0..n).map(|v| v as f64 * 0.25 - 1.0).collect(),
        }
    }

    #[test]
    fn binary_roundtrip_all_kinds() {
        for kind in [FieldKind::Sheet, FieldKind::Solution, FieldKind::WhiteNoise] {
            let f = field(kind);
            let mut buf = Vec::new();
            write_binary(&f, &mut buf).unwrap();
            assert_eq!(&buf[..4], b"HBF1");
            let back = read_binary(buf.as_slice()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut buf = Vec::new();
        write_binary(&field(FieldKind::Sheet), &mut buf).unwrap();
        assert!(read_binary(&buf[..20]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_binary(bad.as_slice()).is_err());
        let mut extra = buf.clone();
        extra.extend_from_slice(&[0u8; 8]);
        assert!(read_binary(extra.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let f = field(FieldKind::Sheet);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,value");
        assert_eq!(lines.len(), 1 + 12);
        assert_eq!(lines[1], "0,0,-1");
        assert_eq!(lines[12], "0.5,2,1.75");
    }

    proptest! {
        #[test]
        fn binary_values_are_bit_exact(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let mut f = field(FieldKind::Sheet);
            f.values = vals;
            let mut buf = Vec::new();
            write_binary(&f, &mut buf).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            prop_assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
