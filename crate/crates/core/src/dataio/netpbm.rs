//! PGM/PPM (P2, P3, P5, P6) reading and writing. Samples decode to `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetpbmFormat {
    /// ASCII graymap.
    P2,
    /// ASCII pixmap.
    P3,
    /// Binary graymap.
    P5,
    /// Binary pixmap.
    P6,
}

impl NetpbmFormat {
    pub fn channels(self) -> usize {
        match self {
            NetpbmFormat::P2 | NetpbmFormat::P5 => 1,
            NetpbmFormat::P3 | NetpbmFormat::P6 => 3,
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, NetpbmFormat::P5 | NetpbmFormat::P6)
    }

    fn magic(self) -> &'static str {
        match self {
            NetpbmFormat::P2 => "P2",
            NetpbmFormat::P3 => "P3",
            NetpbmFormat::P5 => "P5",
            NetpbmFormat::P6 => "P6",
        }
    }

    /// Binary format matching a channel count.
    pub fn binary_for(channels: usize) -> Result<Self> {
        match channels {
            1 => Ok(NetpbmFormat::P5),
            3 => Ok(NetpbmFormat::P6),
            c => Err(Error::ContractViolation(format!(
                "netpbm stores 1 or 3 channels, tensor has {c}"
            ))),
        }
    }
}

/// A decoded image together with the header fields it was stored with.
#[derive(Debug, Clone, PartialEq)]
pub struct NetpbmImage {
    pub format: NetpbmFormat,
    pub maxval: u16,
    pub tensor: Tensor,
}

struct Header {
    format: NetpbmFormat,
    width: usize,
    height: usize,
    maxval: u16,
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            let message = if start >= self.bytes.len() {
                format!("missing {what}")
            } else {
                format!("expected {what}, found byte 0x{:02x}", self.bytes[start])
            };
            return Err(Error::decode(start, message));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::decode(start, format!("{what} out of range")))
    }
}

fn parse_header(scanner: &mut Scanner<'_>) -> Result<Header> {
    let bytes = scanner.bytes;
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::decode(0, "missing netpbm magic"));
    }
    let format = match bytes[1] {
        b'2' => NetpbmFormat::P2,
        b'3' => NetpbmFormat::P3,
        b'5' => NetpbmFormat::P5,
        b'6' => NetpbmFormat::P6,
        other => {
            return Err(Error::decode(
                1,
                format!("unsupported magic P{}", other as char),
            ))
        }
    };
    scanner.pos = 2;
    let width = scanner.number("width")?;
    let height = scanner.number("height")?;
    let maxval_at = scanner.pos;
    let maxval = scanner.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::decode(maxval_at, "zero image dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::decode(
            maxval_at,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    Ok(Header {
        format,
        width,
        height,
        maxval: maxval as u16,
    })
}

/// Decodes a netpbm byte stream.
pub fn decode_netpbm(bytes: &[u8]) -> Result<NetpbmImage> {
    let mut scanner = Scanner { bytes, pos: 0 };
    let header = parse_header(&mut scanner)?;
    let channels = header.format.channels();
    let shape = Shape::new(header.height, header.width, channels)?;
    let count = shape.len();
    let scale = header.maxval as f64;
    let mut values = Vec::with_capacity(count);

    if header.format.is_binary() {
        // Exactly one whitespace byte separates maxval from the raster.
        if scanner.pos >= bytes.len() || !bytes[scanner.pos].is_ascii_whitespace() {
            return Err(Error::decode(
                scanner.pos,
                "missing whitespace before raster",
            ));
        }
        let start = scanner.pos + 1;
        let width = if header.maxval > 255 { 2 } else { 1 };
        let needed = count * width;
        if bytes.len() < start + needed {
            return Err(Error::decode(
                bytes.len(),
                format!(
                    "truncated raster: {} of {needed} bytes",
                    bytes.len().saturating_sub(start)
                ),
            ));
        }
        for i in 0..count {
            let at = start + i * width;
            let raw = if width == 2 {
                u16::from_be_bytes([bytes[at], bytes[at + 1]])
            } else {
                bytes[at] as u16
            };
            if raw > header.maxval {
                return Err(Error::decode(at, format!("sample {raw} exceeds maxval")));
            }
            values.push(raw as f64 / scale);
        }
    } else {
        for _ in 0..count {
            let at = scanner.pos;
            let raw = scanner.number("sample")?;
            if raw > header.maxval as usize {
                return Err(Error::decode(at, format!("sample {raw} exceeds maxval")));
            }
            values.push(raw as f64 / scale);
        }
    }

    Ok(NetpbmImage {
        format: header.format,
        maxval: header.maxval,
        tensor: Tensor::from_vec(shape, values)?,
    })
}

/// Nearest integer sample for a value in `[0, 1]`, clamped to `0..=maxval`.
pub fn quantize(value: f64, maxval: u16) -> u16 {
    let m = maxval as f64;
    (value * m).round().clamp(0.0, m) as u16
}

/// `value` after a write/read round trip at `maxval`.
pub fn quantized_value(value: f64, maxval: u16) -> f64 {
    quantize(value, maxval) as f64 / maxval as f64
}

/// Encodes a 1- or 3-channel tensor with values in `[0, 1]`.
pub fn encode_netpbm(t: &Tensor, format: NetpbmFormat, maxval: u16) -> Result<Vec<u8>> {
    let shape = t.shape();
    if shape.channels() != format.channels() {
        return Err(Error::ContractViolation(format!(
            "{} needs {} channels, tensor has {}",
            format.magic(),
            format.channels(),
            shape.channels()
        )));
    }
    if maxval == 0 {
        return Err(Error::ContractViolation("maxval must be positive".into()));
    }
    let mut out = format!(
        "{}\n{} {}\n{}\n",
        format.magic(),
        shape.width(),
        shape.height(),
        maxval
    )
    .into_bytes();
    if format.is_binary() {
        for &v in t.data() {
            let q = quantize(v, maxval);
            if maxval > 255 {
                out.extend_from_slice(&q.to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
    } else {
        let per_line = shape.width() * shape.channels();
        for row in t.data().chunks(per_line) {
            let line: Vec<String> = row
                .iter()
                .map(|&v| quantize(v, maxval).to_string())
                .collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn read_netpbm(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_netpbm(&fs::read(path)?)?.tensor)
}

pub fn write_netpbm(
    path: impl AsRef<Path>,
    t: &Tensor,
    format: NetpbmFormat,
    maxval: u16,
) -> Result<()> {
    fs::write(path, encode_netpbm(t, format, maxval)?)?;
    Ok(())
}
