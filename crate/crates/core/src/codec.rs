//! Little-endian binary encoding shared by the dataset and checkpoint files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{FtlError, Result};

#[derive(Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4], version: u16) -> Self {
        let mut e = Encoder::default();
        e.buf.extend_from_slice(magic);
        e.u16(version);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    /// Writes to `path` via a sibling temp file and rename.
    pub fn write_atomic(self, path: &Path) -> Result<()> {
        write_atomic(path, &self.buf)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| FtlError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| FtlError::io(&tmp, e))?;
    f.sync_all().map_err(|e| FtlError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| FtlError::io(path, e))
}

pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Decoder<'a> {
    /// Checks magic and version, leaving the cursor after the header.
    pub fn open(
        buf: &'a [u8],
        magic: &[u8; 4],
        version: u16,
        what: &'static str,
    ) -> Result<Self> {
        let mut d = Decoder { buf, pos: 0, what };
        let m = d.take(4)?;
        if m != magic {
            return Err(FtlError::CorruptRecord(format!("{what}: bad magic bytes")));
        }
        let found = d.u16()?;
        if found != version {
            return Err(FtlError::FormatVersionMismatch {
                found,
                expected: version,
            });
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(FtlError::CorruptRecord(format!(
                "{}: truncated at byte {}",
                self.what, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A length or index; rejects values that cannot fit in the remaining
    /// buffer when `elem_size > 0`.
    pub fn len(&mut self, elem_size: usize) -> Result<usize> {
        let v = self.u64()?;
        let v = usize::try_from(v)
            .map_err(|_| FtlError::CorruptRecord(format!("{}: length overflow", self.what)))?;
        if elem_size > 0 && v.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(FtlError::CorruptRecord(format!(
                "{}: truncated at byte {}",
                self.what, self.pos
            )));
        }
        Ok(v)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            FtlError::CorruptRecord(format!("{}: length overflow", self.what))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FtlError::CorruptRecord(format!(
                "{}: {} trailing bytes",
                self.what,
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FtlError::io(path, e))
}
