//! Little-endian binary encoding shared by dataset and checkpoint files.

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    pub fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub fn usize(&mut self, x: usize) {
        self.u64(x as u64);
    }

    pub fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    /// Length-prefixed reals.
    pub fn f64s(&mut self, xs: &[f64]) {
        self.usize(xs.len());
        for &x in xs {
            self.f64(x);
        }
    }

    /// Length-prefixed complex values, real and imaginary parts interleaved.
    pub fn c64s(&mut self, xs: &[C64]) {
        self.usize(xs.len());
        for z in xs {
            self.f64(z.re);
            self.f64(z.im);
        }
    }

    pub fn matrix(&mut self, m: &ComplexMatrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        for z in m.as_slice() {
            self.f64(z.re);
            self.f64(z.im);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.bytes(s.as_bytes());
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn expect(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(Error::Format("bad magic bytes".into()));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    /// A length that must still fit in the remaining bytes at `unit` bytes each.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("declared length {n} exceeds the file")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn c64s(&mut self) -> Result<Vec<C64>> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect()
    }

    pub fn matrix(&mut self) -> Result<ComplexMatrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(16) <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::Format("matrix size exceeds the file".into()))?;
        let data = (0..n).map(|_| Ok(C64::new(self.f64()?, self.f64()?))).collect::<Result<Vec<_>>>()?;
        ComplexMatrix::from_row_major(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8".into()))
    }
}
