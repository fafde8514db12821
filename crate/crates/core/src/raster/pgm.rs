//! Binary PGM (P5) mask files.
//!
//! Layout written by [`write_pgm`]:
//!
//! ```text
//! P5
//! # spacing_um=<decimal>
//! <width> <height>
//! 255
//! <width*height class bytes>
//! ```
//!
//! The reader accepts any P5 header with maxval 255 and streams pixel rows
//! straight into the run-length builder.

use super::{LabelMask, MaskBuilder, RasterError};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Spacing assumed when a file carries no `spacing_um` comment.
pub const DEFAULT_SPACING_UM: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a binary PGM (magic {0:?})")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}, expected 255")]
    MaxVal(u32),
    #[error("pixel data truncated at row {0}")]
    Truncated(u32),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub fn write_pgm<W: Write>(m: &LabelMask, mut out: W) -> io::Result<()> {
    write!(out, "P5\n# spacing_um={}\n{} {}\n255\n", m.spacing(), m.width(), m.height())?;
    let mut row = Vec::with_capacity(m.width() as usize);
    for y in 0..m.height() {
        row.clear();
        m.decode_row_into(y, &mut row);
        out.write_all(&row)?;
    }
    out.flush()
}

pub fn save_pgm(m: &LabelMask, path: impl AsRef<Path>) -> io::Result<()> {
    write_pgm(m, BufWriter::new(File::create(path)?))
}

struct HeaderReader<R> {
    inner: R,
    spacing: Option<f64>,
}

impl<R: BufRead> HeaderReader<R> {
    fn byte(&mut self) -> Result<Option<u8>, PgmError> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b)? {
            0 => Ok(None),
            _ => Ok(Some(b[0])),
        }
    }

    fn comment(&mut self) -> Result<(), PgmError> {
        let mut line = Vec::new();
        self.inner.read_until(b'\n', &mut line)?;
        let text = String::from_utf8_lossy(&line);
        if let Some(v) = text.trim().strip_prefix("spacing_um=") {
            let spacing =
                v.trim().parse::<f64>().map_err(|_| PgmError::Header(format!("bad spacing_um value {v:?}")))?;
            self.spacing = Some(spacing);
        }
        Ok(())
    }

    /// Next whitespace-delimited token; consumes exactly one trailing
    /// whitespace byte.
    fn token(&mut self) -> Result<String, PgmError> {
        let mut tok = Vec::new();
        loop {
            match self.byte()? {
                None => {
                    return if tok.is_empty() {
                        Err(PgmError::Header("unexpected end of header".into()))
                    } else {
                        Ok(String::from_utf8_lossy(&tok).into_owned())
                    }
                }
                Some(b'#') if tok.is_empty() => self.comment()?,
                Some(b) if b.is_ascii_whitespace() => {
                    if !tok.is_empty() {
                        return Ok(String::from_utf8_lossy(&tok).into_owned());
                    }
                }
                Some(b) => tok.push(b),
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        let t = self.token()?;
        t.parse().map_err(|_| PgmError::Header(format!("bad {what} {t:?}")))
    }
}

pub fn read_pgm<R: BufRead>(input: R) -> Result<LabelMask, PgmError> {
    let mut h = HeaderReader { inner: input, spacing: None };
    let magic = h.token()?;
    if magic != "P5" {
        return Err(PgmError::BadMagic(magic));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(PgmError::MaxVal(maxval));
    }
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyGrid.into());
    }
    let spacing = h.spacing.unwrap_or(DEFAULT_SPACING_UM);
    let mut input = h.inner;
    let mut builder = MaskBuilder::new(width, spacing);
    let mut row = vec![0u8; width as usize];
    for y in 0..height {
        input.read_exact(&mut row).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => PgmError::Truncated(y),
            _ => PgmError::Io(e),
        })?;
        builder.push_raw_row(&row, y as u64 * width as u64)?;
    }
    Ok(builder.finish()?)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<LabelMask, PgmError> {
    read_pgm(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::encode_mask;

    #[test]
    fn roundtrip_is_bit_exact() {
        let raw: Vec<u8> = (0..60u32).map(|i| ((i * 7 + i / 5) % 7) as u8).collect();
        let m = encode_mask(&raw, 10, 6, 0.96).unwrap();
        let mut bytes = Vec::new();
        write_pgm(&m, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P5\n# spacing_um=0.96\n10 6\n255\n"));
        let back = read_pgm(&bytes[..]).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_pgm(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn foreign_header_layout() {
        let mut bytes = b"P5 # made elsewhere\n3\n# spacing_um=2.5\n 1 255\n".to_vec();
        bytes.extend([2, 3, 4]);
        let m = read_pgm(&bytes[..]).unwrap();
        assert_eq!(m.decode(), vec![2, 3, 4]);
        assert_eq!(m.spacing(), 2.5);
    }

    #[test]
    fn missing_spacing_defaults() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([0, 1]);
        assert_eq!(read_pgm(&bytes[..]).unwrap().spacing(), DEFAULT_SPACING_UM);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(read_pgm(&b"P2\n1 1\n255\n0"[..]), Err(PgmError::BadMagic(_))));
        assert!(matches!(read_pgm(&b"P5\n1 1\n65535\n\0\0"[..]), Err(PgmError::MaxVal(65535))));
        assert!(matches!(read_pgm(&b"P5\n2 2\n255\n\0\0\0"[..]), Err(PgmError::Truncated(1))));
        assert!(matches!(
            read_pgm(&b"P5\n2 1\n255\n\x02\x09"[..]),
            Err(PgmError::Raster(RasterError::InvalidClassCode { index: 1, code: 9 }))
        ));
    }
}
