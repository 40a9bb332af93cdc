//! Little-endian binary readers/writers shared by the dataset and
//! checkpoint formats. The reader tracks its byte offset so malformed files
//! are rejected with the exact position.

use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], path: &Path) -> Self {
        Self {
            buf,
            pos: 0,
            path: path.to_path_buf(),
        }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset: self.offset(),
            msg: msg.into(),
        }
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.error(format!(
                "truncated file: needed {n} bytes for {what}, {} left",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let got = self.take(magic.len(), "magic")?;
        if got != magic {
            self.pos -= magic.len();
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }

    pub fn f64_vec(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count * 8, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn u16_vec(&mut self, count: usize, what: &str) -> Result<Vec<u16>> {
        let bytes = self.take(count * 2, what)?;
        Ok(bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Length-prefixed (u32) UTF-8 string.
    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| self.error(format!("{what}: invalid utf-8")))
    }

    /// Errors unless the whole buffer was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            let n = self.buf.len() - self.pos;
            return Err(self.error(format!("{n} trailing bytes")));
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64_slice(&mut self, vs: &[f64]) {
        for v in vs {
            self.bytes(&v.to_le_bytes());
        }
    }

    pub fn u16_slice(&mut self, vs: &[u16]) {
        for v in vs {
            self.bytes(&v.to_le_bytes());
        }
    }

    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path, e))
    }
}
