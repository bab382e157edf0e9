//! Netpbm grayscale/colour reader and writer (P2, P3, P5, P6).
//!
//! Samples map to `value / maxval` on read. On write every sample is encoded
//! with maxval 255 as `floor(v * 255 + 0.5)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmEncoding {
    Ascii,
    Binary,
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes).map_err(|e| match e {
        Error::UnsupportedFormat { reason, .. } => Error::UnsupportedFormat {
            path: Some(path.to_path_buf()),
            reason,
        },
        other => other,
    })
}

/// Writes binary PGM (1 channel) or PPM (3 channels).
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_image_with(img, path, PnmEncoding::Binary)
}

pub fn write_image_with(img: &Image, path: impl AsRef<Path>, encoding: PnmEncoding) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(img, encoding)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode(img: &Image, encoding: PnmEncoding) -> Vec<u8> {
    let magic = match (img.channels(), encoding) {
        (1, PnmEncoding::Ascii) => "P2",
        (1, PnmEncoding::Binary) => "P5",
        (_, PnmEncoding::Ascii) => "P3",
        (_, PnmEncoding::Binary) => "P6",
    };
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let data = img.data();
    let interleaved = (0..n).flat_map(|i| (0..ch).map(move |c| quantize(data[c * n + i])));
    match encoding {
        PnmEncoding::Binary => out.extend(interleaved),
        PnmEncoding::Ascii => {
            let mut line_len = 0;
            for (i, v) in interleaved.enumerate() {
                let s = v.to_string();
                if i > 0 {
                    if line_len + s.len() + 1 > 70 {
                        out.push(b'\n');
                        line_len = 0;
                    } else {
                        out.push(b' ');
                        line_len += 1;
                    }
                }
                line_len += s.len();
                out.extend_from_slice(s.as_bytes());
            }
            out.push(b'\n');
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} `{}` is not a number", String::from_utf8_lossy(tok))))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedFormat {
            path: None,
            reason: "missing netpbm magic number".into(),
        });
    }
    let (channels, encoding) = match bytes[1] {
        b'2' => (1, PnmEncoding::Ascii),
        b'3' => (3, PnmEncoding::Ascii),
        b'5' => (1, PnmEncoding::Binary),
        b'6' => (3, PnmEncoding::Binary),
        other => {
            return Err(Error::UnsupportedFormat {
                path: None,
                reason: format!("netpbm variant P{} is not supported", other as char),
            })
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(Error::MalformedHeader("magic number not followed by whitespace".into()));
    }
    let width = cur.header_number("width")?;
    let height = cur.header_number("height")?;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval is 0".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat {
            path: None,
            reason: format!("maxval {maxval} (only 8-bit samples are supported)"),
        });
    }
    let n = width * height;
    let expected = n * channels;
    let scale = maxval as f64;
    let mut samples = Vec::with_capacity(expected);
    match encoding {
        PnmEncoding::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
                return Err(Error::TruncatedPayload { expected, found: 0 });
            }
            let payload = &bytes[cur.pos + 1..];
            if payload.len() < expected {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: payload.len(),
                });
            }
            for &b in &payload[..expected] {
                if b as usize > maxval {
                    return Err(Error::MalformedHeader(format!("sample {b} exceeds maxval {maxval}")));
                }
                samples.push(b as f64 / scale);
            }
        }
        PnmEncoding::Ascii => {
            while samples.len() < expected {
                let Some(tok) = cur.token() else {
                    return Err(Error::TruncatedPayload {
                        expected,
                        found: samples.len(),
                    });
                };
                let v = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|v| *v <= maxval)
                    .ok_or_else(|| {
                        Error::MalformedHeader(format!("invalid sample `{}`", String::from_utf8_lossy(tok)))
                    })?;
                samples.push(v as f64 / scale);
            }
        }
    }
    // interleaved -> planar
    let mut data = vec![0.0; expected];
    for i in 0..n {
        for c in 0..channels {
            data[c * n + i] = samples[i * channels + c];
        }
    }
    Image::new(width, height, channels, data)
}
