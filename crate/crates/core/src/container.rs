//! Little-endian binary framing shared by every persisted artifact.
//!
//! Layout: 12-byte magic, `u32` version, body, then a `u64` FNV-1a digest of
//! every preceding byte. Readers verify the digest before decoding anything.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hash::fnv1a64;

pub const HEADER_LEN: usize = 16;
const DIGEST_LEN: usize = 8;

pub type Magic = [u8; 12];

#[derive(Debug, Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &Magic, version: u32) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Encoder { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Appends the digest trailer and returns the complete file image.
    pub fn finish(mut self) -> Vec<u8> {
        let digest = fnv1a64(&self.buf);
        self.buf.extend_from_slice(&digest.to_le_bytes());
        self.buf
    }

    pub fn write_to(self, path: &Path) -> Result<()> {
        let bytes = self.finish();
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic, version and digest; on success yields a cursor over the body.
    pub fn open(bytes: &'a [u8], magic: &Magic, version: u32) -> Result<Self> {
        if bytes.len() < HEADER_LEN + DIGEST_LEN {
            return Err(Error::Corrupt(format!(
                "file too short ({} bytes)",
                bytes.len()
            )));
        }
        if &bytes[..12] != magic {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let (content, trailer) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let stored = u64::from_le_bytes(trailer.try_into().expect("8-byte trailer"));
        if fnv1a64(content) != stored {
            return Err(Error::Corrupt("digest mismatch".into()));
        }
        let found = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
        if found != version {
            return Err(Error::Version {
                found,
                expected: version,
            });
        }
        Ok(Decoder {
            body: &content[HEADER_LEN..],
            pos: 0,
        })
    }

    pub fn read_file(path: &Path) -> Result<Vec<u8>> {
        Ok(fs::read(path)?)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.body.len())
            .ok_or_else(|| Error::Corrupt("unexpected end of data".into()))?;
        let s = &self.body[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Corrupt("invalid UTF-8".into()))
    }

    /// Fails unless the whole body was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.body.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &Magic = b"ENTNORM:TEST";

    fn sample() -> Vec<u8> {
        let mut e = Encoder::new(MAGIC, 3);
        e.u8(7);
        e.str("héllo");
        e.f32(1.5);
        e.f64(-2.25);
        e.finish()
    }

    #[test]
    fn decode_what_was_encoded() {
        let bytes = sample();
        let mut d = Decoder::open(&bytes, MAGIC, 3).unwrap();
        assert_eq!(d.u8().unwrap(), 7);
        assert_eq!(d.str().unwrap(), "héllo");
        assert_eq!(d.f32().unwrap(), 1.5);
        assert_eq!(d.f64().unwrap(), -2.25);
        d.finish().unwrap();
    }

    #[test]
    fn rejects_flipped_byte_truncation_and_version() {
        let bytes = sample();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            assert!(Decoder::open(&bad, MAGIC, 3).is_err(), "flip at {i}");
        }
        assert!(matches!(
            Decoder::open(&bytes[..bytes.len() - 1], MAGIC, 3),
            Err(Error::Corrupt(_))
        ));
        assert!(matches!(
            Decoder::open(&bytes, MAGIC, 4),
            Err(Error::Version { found: 3, .. })
        ));
    }

    #[test]
    fn truncated_body_read_is_corrupt() {
        let e = Encoder::new(MAGIC, 1);
        let bytes = e.finish();
        let mut d = Decoder::open(&bytes, MAGIC, 1).unwrap();
        assert!(matches!(d.u32(), Err(Error::Corrupt(_))));
    }
}
