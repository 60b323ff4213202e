//! Binary grid files.
//!
//! All integers and floats are little-endian and grids are row-major.
//!
//! * `FIMG`: magic, `u32` H, `u32` W, H·W `f32` values.
//! * `FVIS`: magic, `u32` H, `u32` W, `u8` kind (0 dense, 1 sparse), H·W
//!   `(f32 re, f32 im)` pairs.
//! * `FMSK`: magic, `u32` H, `u32` W, H·W bytes each 0 or 1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ComplexGrid, RealGrid};
use crate::observation::mask::UvMask;

pub const FIMG_MAGIC: &[u8; 4] = b"FIMG";
pub const FVIS_MAGIC: &[u8; 4] = b"FVIS";
pub const FMSK_MAGIC: &[u8; 4] = b"FMSK";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisKind {
    Dense,
    Sparse,
}

impl VisKind {
    fn code(self) -> u8 {
        match self {
            VisKind::Dense => 0,
            VisKind::Sparse => 1,
        }
    }
}

struct Reader<'a> {
    kind: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(kind: &'static str, buf: &'a [u8]) -> Self {
        Reader { kind, buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.kind,
                format!("truncated at byte {} (needed {n} more)", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != expected {
            return Err(Error::format(
                self.kind,
                format!("bad magic {:?}", String::from_utf8_lossy(m)),
            ));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dims(&mut self) -> Result<(usize, usize)> {
        let h = self.u32()? as usize;
        let w = self.u32()? as usize;
        if h == 0 || w == 0 {
            return Err(Error::format(self.kind, format!("empty grid {h}x{w}")));
        }
        let cells = h.checked_mul(w).filter(|n| *n <= (self.buf.len() - self.pos));
        if cells.is_none() {
            return Err(Error::format(
                self.kind,
                format!("header {h}x{w} exceeds file length"),
            ));
        }
        Ok((h, w))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.kind,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn reader<'a>(kind: &'static str, buf: &'a [u8]) -> ByteReader<'a> {
    ByteReader(Reader::new(kind, buf))
}

/// Little-endian cursor shared with the checkpoint format.
pub(crate) struct ByteReader<'a>(Reader<'a>);

impl ByteReader<'_> {
    pub fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        self.0.magic(m)
    }
    pub fn u16(&mut self) -> Result<u16> {
        self.0.u16()
    }
    pub fn u32(&mut self) -> Result<u32> {
        self.0.u32()
    }
    pub fn u64(&mut self) -> Result<u64> {
        self.0.u64()
    }
    pub fn f64(&mut self) -> Result<f64> {
        self.0.f64()
    }
    pub fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        self.0.take(n)
    }
    pub fn remaining(&self) -> usize {
        self.0.buf.len() - self.0.pos
    }
    pub fn finish(&self) -> Result<()> {
        self.0.finish()
    }
}

fn header(magic: &[u8; 4], h: usize, w: usize, extra: usize) -> Result<Vec<u8>> {
    let h32 = u32::try_from(h).map_err(|_| Error::invalid("grid height exceeds u32"))?;
    let w32 = u32::try_from(w).map_err(|_| Error::invalid("grid width exceeds u32"))?;
    let mut out = Vec::with_capacity(12 + extra);
    out.extend_from_slice(magic);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    Ok(out)
}

pub fn encode_fimg(img: &RealGrid) -> Result<Vec<u8>> {
    let mut out = header(FIMG_MAGIC, img.height, img.width, img.data.len() * 4)?;
    for &v in &img.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fimg(buf: &[u8]) -> Result<RealGrid> {
    let mut r = Reader::new("FIMG", buf);
    r.magic(FIMG_MAGIC)?;
    let (h, w) = r.dims()?;
    let mut data = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        data.push(f64::from(r.f32()?));
    }
    r.finish()?;
    RealGrid::new(h, w, data)
}

pub fn encode_fvis(vis: &ComplexGrid, kind: VisKind) -> Result<Vec<u8>> {
    let mut out = header(FVIS_MAGIC, vis.height, vis.width, 1 + vis.len() * 8)?;
    out.push(kind.code());
    for i in 0..vis.len() {
        out.extend_from_slice(&(vis.re[i] as f32).to_le_bytes());
        out.extend_from_slice(&(vis.im[i] as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fvis(buf: &[u8]) -> Result<(ComplexGrid, VisKind)> {
    let mut r = Reader::new("FVIS", buf);
    r.magic(FVIS_MAGIC)?;
    let (h, w) = r.dims()?;
    let kind = match r.u8()? {
        0 => VisKind::Dense,
        1 => VisKind::Sparse,
        k => return Err(Error::format("FVIS", format!("unknown kind byte {k}"))),
    };
    let mut re = Vec::with_capacity(h * w);
    let mut im = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        re.push(f64::from(r.f32()?));
        im.push(f64::from(r.f32()?));
    }
    r.finish()?;
    Ok((ComplexGrid::new(h, w, re, im)?, kind))
}

pub fn encode_fmsk(mask: &UvMask) -> Result<Vec<u8>> {
    let mut out = header(FMSK_MAGIC, mask.height, mask.width, mask.bits().len())?;
    out.extend(mask.bits().iter().map(|&b| u8::from(b)));
    Ok(out)
}

pub fn decode_fmsk(buf: &[u8]) -> Result<UvMask> {
    let mut r = Reader::new("FMSK", buf);
    r.magic(FMSK_MAGIC)?;
    let (h, w) = r.dims()?;
    let raw = r.take(h * w)?;
    let mut bits = Vec::with_capacity(h * w);
    for (i, &b) in raw.iter().enumerate() {
        match b {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(Error::format("FMSK", format!("cell {i} holds {other}, expected 0 or 1")))
            }
        }
    }
    r.finish()?;
    UvMask::new(h, w, bits)
}

pub fn write_fimg(path: &Path, img: &RealGrid) -> Result<()> {
    fs::write(path, encode_fimg(img)?)?;
    Ok(())
}

pub fn read_fimg(path: &Path) -> Result<RealGrid> {
    decode_fimg(&fs::read(path)?)
}

pub fn write_fvis(path: &Path, vis: &ComplexGrid, kind: VisKind) -> Result<()> {
    fs::write(path, encode_fvis(vis, kind)?)?;
    Ok(())
}

pub fn read_fvis(path: &Path) -> Result<(ComplexGrid, VisKind)> {
    decode_fvis(&fs::read(path)?)
}

pub fn write_fmsk(path: &Path, mask: &UvMask) -> Result<()> {
    fs::write(path, encode_fmsk(mask)?)?;
    Ok(())
}

pub fn read_fmsk(path: &Path) -> Result<UvMask> {
    decode_fmsk(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn fimg_reencodes_identically(h in 1usize..9, w in 1usize..9, seed in any::<u64>()) {
            let mut rng = crate::numerics::RngStream::new(seed, 0);
            let img = RealGrid::new(h, w, (0..h * w).map(|_| rng.uniform()).collect()).unwrap();
            let bytes = encode_fimg(&img).unwrap();
            let back = decode_fimg(&bytes).unwrap();
            prop_assert_eq!(encode_fimg(&back).unwrap(), bytes);
            for (a, b) in img.data.iter().zip(&back.data) {
                prop_assert_eq!(*a as f32, *b as f32);
            }
        }

        #[test]
        fn fvis_reencodes_identically(h in 1usize..9, w in 1usize..9, sparse in any::<bool>(), seed in any::<u64>()) {
            let mut rng = crate::numerics::RngStream::new(seed, 1);
            let n = h * w;
            let vis = ComplexGrid::new(h, w,
                (0..n).map(|_| rng.normal()).collect(),
                (0..n).map(|_| rng.normal()).collect()).unwrap();
            let kind = if sparse { VisKind::Sparse } else { VisKind::Dense };
            let bytes = encode_fvis(&vis, kind).unwrap();
            let (back, k) = decode_fvis(&bytes).unwrap();
            prop_assert_eq!(k, kind);
            prop_assert_eq!(encode_fvis(&back, k).unwrap(), bytes);
        }
    }

    #[test]
    fn fmsk_round_trip_is_exact() {
        let mask = UvMask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
        let bytes = encode_fmsk(&mask).unwrap();
        assert_eq!(&bytes[..4], b"FMSK");
        assert_eq!(decode_fmsk(&bytes).unwrap(), mask);
    }

    #[test]
    fn header_fields_are_little_endian() {
        let img = RealGrid::zeros(2, 4);
        let bytes = encode_fimg(&img).unwrap();
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[4, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 8 * 4);
        let vis = encode_fvis(&ComplexGrid::zeros(2, 2), VisKind::Sparse).unwrap();
        assert_eq!(vis[12], 1);
        assert_eq!(vis.len(), 13 + 4 * 8);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let good = encode_fimg(&RealGrid::zeros(4, 4)).unwrap();
        assert!(decode_fimg(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_fimg(&extra).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode_fimg(&bad_magic).is_err());
        let mut huge = good.clone();
        huge[4..8].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_fimg(&huge).is_err());

        let mut vis = encode_fvis(&ComplexGrid::zeros(2, 2), VisKind::Dense).unwrap();
        vis[12] = 7;
        assert!(decode_fvis(&vis).is_err());

        let mut msk = encode_fmsk(&UvMask::full(2, 2)).unwrap();
        msk[13] = 2;
        assert!(decode_fmsk(&msk).is_err());
        // Reading one format as another fails on the magic.
        assert!(decode_fvis(&good).is_err());
    }
}
