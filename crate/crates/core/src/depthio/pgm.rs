//! Binary portable graymap (P5). 16-bit samples are big-endian per the
//! netpbm convention; maxval 65535 is used for depth, 255 for 8-bit images.

use std::fs;
use std::path::Path;

use super::DepthFrame;
use crate::error::{Error, Result};

/// A decoded graymap of either bit depth, samples widened to u16.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn encode_pgm16(frame: &DepthFrame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", frame.width(), frame.height());
    let mut out = Vec::with_capacity(header.len() + frame.data().len() * 2);
    out.extend_from_slice(header.as_bytes());
    for v in frame.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_pgm8(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let header = format!("P5\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn write_pgm8(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::shape(width * height, pixels.len()));
    }
    fs::write(path, encode_pgm8(width, height, pixels)).map_err(|e| Error::io(path, e))
}

/// Reads a 16-bit depth frame. 8-bit graymaps are accepted and widened.
pub fn read_pgm16(path: &Path) -> Result<DepthFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let g = decode_pgm(&bytes).map_err(|reason| Error::format(path, reason))?;
    DepthFrame::new(g.width, g.height, g.samples)
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Graymap, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        skip_space_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal header field".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header field out of range".to_string())?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("zero-sized image {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let n = width * height;
    let bps = if maxval < 256 { 1 } else { 2 };
    let raster = &bytes[pos..];
    if raster.len() != n * bps {
        return Err(format!(
            "raster holds {} bytes, expected {}",
            raster.len(),
            n * bps
        ));
    }
    let samples: Vec<u16> = if bps == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(v) = samples.iter().find(|&&v| v as usize > maxval) {
        return Err(format!("sample {v} exceeds maxval {maxval}"));
    }
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}
