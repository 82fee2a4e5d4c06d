//! Little-endian binary framing shared by the cache formats.
//!
//! Layout of every file: 4-byte magic, u32 format version, payload,
//! trailing CRC-32 of the payload (everything between version and checksum).
//! Readers verify magic, version, and checksum before handing out a single
//! field, so a truncated or corrupted file never yields partial data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Accumulates a payload and writes the framed file in one shot.
pub struct PayloadWriter {
    buf: Vec<u8>,
}

impl PayloadWriter {
    pub fn new() -> Self {
        PayloadWriter { buf: Vec::new() }
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64_slice(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for &v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn write(self, magic: &[u8; 4], version: u32, path: &Path) -> Result<()> {
        let mut file = Vec::with_capacity(self.buf.len() + 12);
        file.extend_from_slice(magic);
        file.extend_from_slice(&version.to_le_bytes());
        file.extend_from_slice(&self.buf);
        file.extend_from_slice(&crc32fast::hash(&self.buf).to_le_bytes());
        fs::write(path, &file).map_err(|e| Error::io(path, e))
    }
}

impl Default for PayloadWriter {
    fn default() -> Self {
        Self::new()
    }
}

/// Verified view over a framed file's payload.
#[derive(Debug)]
pub struct PayloadReader {
    data: Vec<u8>,
    pos: usize,
    path: String,
}

impl PayloadReader {
    /// Read the file, check magic/version/CRC, and position at the payload.
    pub fn open(path: &Path, magic: &[u8; 4], version: u32) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        let display = path.display().to_string();
        if data.len() < 12 {
            return Err(Error::Format(format!(
                "{display}: file too short for header and checksum"
            )));
        }
        if &data[..4] != magic {
            return Err(Error::Format(format!(
                "{display}: bad magic {:?}, expected {:?}",
                &data[..4],
                magic
            )));
        }
        let got_version = u32::from_le_bytes(data[4..8].try_into().unwrap());
        if got_version != version {
            return Err(Error::Format(format!(
                "{display}: format version {got_version}, expected {version}"
            )));
        }
        let payload = &data[8..data.len() - 4];
        let stored_crc = u32::from_le_bytes(data[data.len() - 4..].try_into().unwrap());
        let actual_crc = crc32fast::hash(payload);
        if stored_crc != actual_crc {
            return Err(Error::Format(format!(
                "{display}: checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
            )));
        }
        let end = data.len() - 4;
        Ok(PayloadReader {
            data: data[..end].to_vec(),
            pos: 8,
            path: display,
        })
    }

    fn take(&mut self, len: usize) -> Result<&[u8]> {
        if self.pos + len > self.data.len() {
            return Err(Error::Format(format!(
                "{}: payload truncated (wanted {len} bytes at offset {})",
                self.path, self.pos
            )));
        }
        let slice = &self.data[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn get_f64_vec(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or_else(|| {
            Error::Format(format!("{}: array length overflow", self.path))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Assert the payload was consumed exactly.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Format(format!(
                "{}: {} unread payload bytes",
                self.path,
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = PayloadWriter::new();
        w.put_u64(42);
        w.put_f64(-0.0);
        w.put_f64_slice(&[1.5, f64::MIN_POSITIVE, 1e300]);
        w.write(b"TEST", 3, &path).unwrap();

        let mut r = PayloadReader::open(&path, b"TEST", 3).unwrap();
        assert_eq!(r.get_u64().unwrap(), 42);
        assert_eq!(r.get_f64().unwrap().to_bits(), (-0.0f64).to_bits());
        let v = r.get_f64_vec(3).unwrap();
        assert_eq!(v[1].to_bits(), f64::MIN_POSITIVE.to_bits());
        r.finish().unwrap();
    }

    #[test]
    fn rejects_wrong_magic_version_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = PayloadWriter::new();
        w.put_u32(7);
        w.write(b"GOOD", 1, &path).unwrap();

        assert!(PayloadReader::open(&path, b"EVIL", 1).is_err());
        assert!(PayloadReader::open(&path, b"GOOD", 2).is_err());

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[9] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let err = PayloadReader::open(&path, b"GOOD", 1).unwrap_err();
        assert!(err.to_string().contains("checksum"));
    }

    #[test]
    fn rejects_truncation_and_trailing_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let mut w = PayloadWriter::new();
        w.put_f64(1.0);
        w.put_f64(2.0);
        w.write(b"TRNC", 1, &path).unwrap();

        let mut r = PayloadReader::open(&path, b"TRNC", 1).unwrap();
        assert!(r.get_f64_vec(3).is_err());

        let mut r = PayloadReader::open(&path, b"TRNC", 1).unwrap();
        r.get_f64().unwrap();
        assert!(r.finish().is_err());
    }
}
