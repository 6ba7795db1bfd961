//! Little-endian primitives shared by the embedding, model and checkpoint files.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("file truncated")]
    Truncated,
    #[error("{0}")]
    Invalid(String),
}

pub type FormatResult<T> = Result<T, FormatError>;

impl From<std::io::Error> for FormatError {
    fn from(_: std::io::Error) -> Self {
        FormatError::Truncated
    }
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 8], version: u32) -> Self {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LE>(v).unwrap();
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LE>(v).unwrap();
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LE>(v).unwrap();
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn usizes(&mut self, vs: &[usize]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.u64(v as u64);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    /// Checks the magic and version header.
    pub fn open(data: &'a [u8], magic: &'static [u8; 8], version: u32) -> FormatResult<Self> {
        let expected = std::str::from_utf8(magic).unwrap_or("?");
        if data.len() < 8 || &data[..8] != magic {
            return Err(FormatError::BadMagic { expected });
        }
        let mut r = Reader {
            cur: Cursor::new(data),
        };
        r.cur.set_position(8);
        let found = r.u32()?;
        if found != version {
            return Err(FormatError::Version {
                found,
                expected: version,
            });
        }
        Ok(r)
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    pub fn u8(&mut self) -> FormatResult<u8> {
        Ok(self.cur.read_u8()?)
    }

    pub fn u32(&mut self) -> FormatResult<u32> {
        Ok(self.cur.read_u32::<LE>()?)
    }

    pub fn u64(&mut self) -> FormatResult<u64> {
        Ok(self.cur.read_u64::<LE>()?)
    }

    pub fn usize(&mut self) -> FormatResult<usize> {
        usize::try_from(self.u64()?).map_err(|_| FormatError::Invalid("length overflow".into()))
    }

    pub fn f64(&mut self) -> FormatResult<f64> {
        Ok(self.cur.read_f64::<LE>()?)
    }

    /// Length prefix checked against the bytes left, so corrupt lengths fail fast.
    fn len_prefix(&mut self, elem_size: usize) -> FormatResult<usize> {
        let n = self.usize()?;
        if n.checked_mul(elem_size).is_none_or(|b| b > self.remaining()) {
            return Err(FormatError::Truncated);
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> FormatResult<Vec<f64>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn usizes(&mut self) -> FormatResult<Vec<usize>> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn bytes(&mut self) -> FormatResult<Vec<u8>> {
        let n = self.len_prefix(1)?;
        let mut b = vec![0; n];
        self.cur.read_exact(&mut b)?;
        Ok(b)
    }

    pub fn str(&mut self) -> FormatResult<String> {
        String::from_utf8(self.bytes()?).map_err(|_| FormatError::Invalid("invalid UTF-8 string".into()))
    }

    pub fn finish(self) -> FormatResult<()> {
        if self.remaining() != 0 {
            return Err(FormatError::Invalid(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}
