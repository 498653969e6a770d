//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn fmt_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(fmt_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| fmt_err(start, format!("{what} out of range")))
    }
}

/// Decode a P5 image to `[1, H, W]` or a P6 image to `[3, H, W]`, scaling
/// bytes by 1/255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 {
        return Err(fmt_err(0, "file too short for magic number"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(fmt_err(0, "bad magic: expected P5 or P6")),
    };
    let mut cur = Cursor { buf: bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_ws_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(fmt_err(maxval_at, format!("maxval {maxval} unsupported (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(fmt_err(2, "zero image dimension"));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(fmt_err(cur.pos, "expected a single whitespace byte before pixel data"));
    }
    let start = cur.pos + 1;
    let need = width * height * channels;
    if bytes.len() < start + need {
        return Err(fmt_err(
            bytes.len(),
            format!("truncated pixel data: need {need} bytes from offset {start}"),
        ));
    }
    let px = &bytes[start..start + need];
    let plane = width * height;
    let mut data = vec![0.0; need];
    for (i, chunk) in px.chunks_exact(channels).enumerate() {
        for (c, &b) in chunk.iter().enumerate() {
            data[c * plane + i] = b as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[channels, height, width], data)
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encode `[1, H, W]` as P5 or `[3, H, W]` as P6.
pub fn encode_pnm(t: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = match *t.shape() {
        [c @ (1 | 3), h, w] => (c, h, w),
        [h, w] => (1, h, w),
        ref s => return Err(Error::shape(format!("cannot encode {s:?} as PGM/PPM"))),
    };
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = w * h;
    out.reserve(plane * c);
    for i in 0..plane {
        for ch in 0..c {
            out.push(quantize(t.data()[ch * plane + i]));
        }
    }
    Ok(out)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_pnm(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(t)?).map_err(|e| Error::io(path, e))
}

/// Write a single-channel map as PGM.
pub fn write_pgm(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    match t.shape() {
        [1, _, _] | [_, _] => write_pnm(t, path),
        s => Err(Error::shape(format!("write_pgm expects [1, H, W], got {s:?}"))),
    }
}
