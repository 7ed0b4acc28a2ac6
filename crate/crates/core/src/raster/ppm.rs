//! Binary PPM (P6, maxval 255).
//!
//! The reader accepts any whitespace run between header tokens and `#`
//! comments inside the header. The writer always emits the canonical form
//! `P6\n<w> <h>\n255\n` followed by the raw payload, so a canonical file
//! survives a read/write cycle byte for byte.

use super::Raster;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PpmError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a [u8], PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::MalformedHeader(format!("missing {what}")));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, PpmError> {
        let tok = self.token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                PpmError::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

pub fn read_ppm(bytes: &[u8]) -> Result<Raster, PpmError> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    if cur.token("magic")? != b"P6" {
        return Err(PpmError::MalformedHeader("magic number is not P6".into()));
    }
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(PpmError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates maxval from the payload.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(PpmError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let expected = width * height * 3;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PpmError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    Raster::new(width, height, payload[..expected].to_vec())
        .map_err(|e| PpmError::MalformedHeader(e.to_string()))
}

pub fn write_ppm(img: &Raster) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}
