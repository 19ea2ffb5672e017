//! Binary Netpbm codecs: PGM (P5), PPM (P6) and PBM (P4).
//!
//! Only 8-bit rasters (maxval 255) are accepted. PBM stores 1 as black,
//! while [`BitMatrix`] uses `true` for white, so bits are inverted on the way
//! in and out.

use std::fs;
use std::path::Path;

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::frame::{Channels, Frame};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn skip_ws_and_comments(buf: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_uint(buf: &[u8], pos: usize) -> Result<(u32, usize)> {
    let start = skip_ws_and_comments(buf, pos);
    let mut end = start;
    while end < buf.len() && buf[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::Format("expected an unsigned integer in header".into()));
    }
    let s = std::str::from_utf8(&buf[start..end]).expect("ascii digits");
    let v = s
        .parse()
        .map_err(|_| Error::Format(format!("header value {s} out of range")))?;
    Ok((v, end))
}

fn parse_header(buf: &[u8]) -> Result<Header> {
    if buf.len() < 2 || buf[0] != b'P' {
        return Err(Error::Format("missing Netpbm magic".into()));
    }
    let magic = [buf[0], buf[1]];
    let (width, pos) = read_uint(buf, 2)?;
    let (height, mut pos) = read_uint(buf, pos)?;
    let mut maxval = 1;
    if magic != *b"P4" {
        let (m, p) = read_uint(buf, pos)?;
        maxval = m;
        pos = p;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= buf.len() || !buf[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated header".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty image {width}x{height}")));
    }
    Ok(Header {
        magic,
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a P5 or P6 image.
pub fn decode_frame(buf: &[u8]) -> Result<Frame> {
    let h = parse_header(buf)?;
    let channels = match &h.magic {
        b"P5" => Channels::Gray,
        b"P6" => Channels::Rgb,
        m => {
            return Err(Error::Format(format!(
                "unsupported Netpbm type {}",
                String::from_utf8_lossy(m)
            )))
        }
    };
    if h.maxval != 255 {
        return Err(Error::UnsupportedBitDepth(h.maxval));
    }
    let len = h.width * h.height * channels.count();
    let raster = buf
        .get(h.data_start..h.data_start + len)
        .ok_or_else(|| Error::Format("raster shorter than header promises".into()))?;
    Frame::from_raw(h.width, h.height, channels, raster.to_vec())
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let magic = if frame.is_gray() { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    out
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frame(&buf)
}

pub fn write_frame(path: &Path, frame: &Frame) -> Result<()> {
    fs::write(path, encode_frame(frame)).map_err(|e| Error::io(path, e))
}

/// Decodes a P4 bitmap into a white-is-true matrix.
pub fn decode_bitmap(buf: &[u8]) -> Result<BitMatrix> {
    let h = parse_header(buf)?;
    if &h.magic != b"P4" {
        return Err(Error::Format("expected a P4 bitmap".into()));
    }
    let stride = h.width.div_ceil(8);
    let raster = buf
        .get(h.data_start..h.data_start + stride * h.height)
        .ok_or_else(|| Error::Format("raster shorter than header promises".into()))?;
    Ok(BitMatrix::from_fn(h.height, h.width, |r, c| {
        let byte = raster[r * stride + c / 8];
        byte & (0x80 >> (c % 8)) == 0
    }))
}

pub fn encode_bitmap(m: &BitMatrix) -> Vec<u8> {
    let stride = m.cols().div_ceil(8);
    let mut out = format!("P4\n{} {}\n", m.cols(), m.rows()).into_bytes();
    let start = out.len();
    out.resize(start + stride * m.rows(), 0);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if !m.get(r, c) {
                out[start + r * stride + c / 8] |= 0x80 >> (c % 8);
            }
        }
    }
    out
}

pub fn read_bitmap(path: &Path) -> Result<BitMatrix> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bitmap(&buf)
}

pub fn write_bitmap(path: &Path, m: &BitMatrix) -> Result<()> {
    fs::write(path, encode_bitmap(m)).map_err(|e| Error::io(path, e))
}
