//! Little-endian primitives shared by the binary file formats.

use crate::error::{FormatError, FormatErrorKind};

/// Appends little-endian primitives to a byte buffer.
#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed (u32) UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn f32s(&mut self, values: &[f32]) {
        self.buf.reserve(values.len() * 4);
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a byte slice that reports failures with their byte offset.
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn len(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn remaining(&self) -> u64 {
        (self.data.len() - self.pos) as u64
    }

    pub fn error(&self, kind: FormatErrorKind) -> FormatError {
        FormatError {
            offset: self.offset(),
            kind,
        }
    }

    pub fn invalid(&self, msg: impl Into<String>) -> FormatError {
        self.error(FormatErrorKind::Invalid(msg.into()))
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.data.len() - self.pos < n {
            return Err(self.error(FormatErrorKind::Truncated {
                expected: (self.pos + n) as u64,
                actual: self.len(),
            }));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let start = self.pos;
        let found = self.take(4)?;
        if found != expected {
            return Err(FormatError {
                offset: start as u64,
                kind: FormatErrorKind::BadMagic {
                    expected,
                    found: found.try_into().unwrap(),
                },
            });
        }
        Ok(())
    }

    /// Reads the version field and rejects anything other than `supported`.
    pub fn version(&mut self, supported: u16) -> Result<u16, FormatError> {
        let start = self.pos;
        let v = self.u16()?;
        if v != supported {
            return Err(FormatError {
                offset: start as u64,
                kind: FormatErrorKind::UnsupportedVersion(v),
            });
        }
        Ok(v)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let start = self.pos;
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError {
            offset: start as u64,
            kind: FormatErrorKind::Invalid("string is not valid UTF-8".into()),
        })
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Fails unless exactly `needed` bytes remain, reporting the total
    /// expected file size against the actual one.
    pub fn expect_remaining(&self, needed: u64) -> Result<(), FormatError> {
        let expected = self.offset().saturating_add(needed);
        let actual = self.len();
        match actual.cmp(&expected) {
            std::cmp::Ordering::Less => Err(self.error(FormatErrorKind::Truncated { expected, actual })),
            std::cmp::Ordering::Greater => {
                Err(self.error(FormatErrorKind::TrailingBytes { expected, actual }))
            }
            std::cmp::Ordering::Equal => Ok(()),
        }
    }
}
