//! Binary PGM (P5): 8-bit for label masks, 16-bit big-endian samples for
//! intensity images, per the format's maxval rule.

use std::io::Write;
use std::path::Path;

use crate::{io_err, DatagenError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgmImage {
    Eight { width: usize, height: usize, data: Vec<u8> },
    Sixteen { width: usize, height: usize, data: Vec<u16> },
}

impl PgmImage {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            PgmImage::Eight { width, height, .. } => (*width, *height),
            PgmImage::Sixteen { width, height, .. } => (*width, *height),
        }
    }
}

pub fn write_pgm8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut out = Vec::with_capacity(20 + data.len());
    write!(out, "P5\n{} {}\n255\n", width, height).expect("in-memory write");
    out.extend_from_slice(data);
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn write_pgm16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut out = Vec::with_capacity(20 + 2 * data.len());
    write!(out, "P5\n{} {}\n65535\n", width, height).expect("in-memory write");
    for &v in data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, out).map_err(io_err(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn error(&self, msg: impl Into<String>) -> DatagenError {
        DatagenError::Parse { path: self.path.to_path_buf(), offset: self.pos, msg: msg.into() }
    }

    /// Skips whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn integer(&mut self) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected an integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.error("integer out of range"))
    }
}

pub fn read_pgm(path: &Path) -> Result<PgmImage> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };
    if !bytes.starts_with(b"P5") {
        return Err(cur.error("missing P5 magic"));
    }
    cur.pos = 2;
    let width = cur.integer()?;
    let height = cur.integer()?;
    let maxval = cur.integer()?;
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(cur.error("expected single whitespace before samples"));
    }
    cur.pos += 1;
    let pixels = width * height;
    match maxval {
        0 => Err(cur.error("maxval must be positive")),
        1..=255 => {
            if bytes.len() - cur.pos < pixels {
                return Err(cur.error(format!(
                    "expected {} sample bytes, found {}",
                    pixels,
                    bytes.len() - cur.pos
                )));
            }
            let data = bytes[cur.pos..cur.pos + pixels].to_vec();
            Ok(PgmImage::Eight { width, height, data })
        }
        256..=65535 => {
            if bytes.len() - cur.pos < 2 * pixels {
                return Err(cur.error(format!(
                    "expected {} sample bytes, found {}",
                    2 * pixels,
                    bytes.len() - cur.pos
                )));
            }
            let data = bytes[cur.pos..cur.pos + 2 * pixels]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect();
            Ok(PgmImage::Sixteen { width, height, data })
        }
        _ => Err(cur.error(format!("maxval {} exceeds 65535", maxval))),
    }
}
