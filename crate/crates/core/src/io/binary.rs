use std::io::Cursor;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use crate::{Error, Result};

pub(super) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Writer { buf: magic.to_vec() };
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.write_u16::<LE>(v).expect("vec write");
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LE>(v).expect("vec write");
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.write_i32::<LE>(v).expect("vec write");
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LE>(v).expect("vec write");
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.write_f32::<LE>(v).expect("vec write");
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LE>(v).expect("vec write");
    }

    pub fn vec3(&mut self, v: &Vector3<f64>) {
        for x in v.iter() {
            self.f64(*x);
        }
    }

    /// Lengths are stored as `u32`.
    pub fn len(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n).map_err(|_| Error::Domain(format!("count {n} does not fit the format")))?;
        self.u32(v);
        Ok(())
    }
}

pub(super) struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    format: &'static str,
}

impl<'a> Reader<'a> {
    /// Checks the magic string and returns the reader with the version.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], format: &'static str) -> Result<(Self, u32)> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            return Err(Error::format(format, format!("missing magic {:?}", String::from_utf8_lossy(magic))));
        }
        let mut r = Reader {
            cur: Cursor::new(bytes),
            format,
        };
        r.cur.set_position(4);
        let version = r.u32()?;
        Ok((r, version))
    }

    fn eof(&self, e: std::io::Error) -> Error {
        Error::format(self.format, format!("truncated at byte {}: {e}", self.cur.position()))
    }

    pub fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    /// Fails early when `count` records of `size` bytes cannot fit.
    pub fn expect(&self, count: usize, size: usize) -> Result<()> {
        match count.checked_mul(size) {
            Some(n) if n <= self.remaining() => Ok(()),
            _ => Err(Error::format(self.format, format!("{count} records of {size} bytes exceed the {} bytes left", self.remaining()))),
        }
    }

    pub fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(Error::format(self.format, format!("{n} trailing bytes"))),
        }
    }

    pub fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|e| self.eof(e))
    }

    pub fn u16(&mut self) -> Result<u16> {
        self.cur.read_u16::<LE>().map_err(|e| self.eof(e))
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|e| self.eof(e))
    }

    pub fn i32(&mut self) -> Result<i32> {
        self.cur.read_i32::<LE>().map_err(|e| self.eof(e))
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|e| self.eof(e))
    }

    pub fn f32(&mut self) -> Result<f32> {
        self.cur.read_f32::<LE>().map_err(|e| self.eof(e))
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|e| self.eof(e))
    }

    pub fn vec3(&mut self) -> Result<Vector3<f64>> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    pub fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::format(self.format, message)
    }
}
