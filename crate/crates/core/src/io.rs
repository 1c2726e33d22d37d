//! File formats: NTF tensors and binary PGM masks.
//!
//! NTF is `b"NTF1"`, four little-endian `u32` dims `n, c, h, w`, then the
//! `f32` data in NCHW order, little-endian. PGM masks are `P5` with maxval
//! 255; bytes `>= 128` are foreground, and masks are written as 0 / 255.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::connectivity::BinaryMask;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const NTF_MAGIC: &[u8; 4] = b"NTF1";

pub fn write_ntf(out: &mut impl Write, t: &Tensor) -> Result<()> {
    let s = t.shape();
    let mut buf = Vec::with_capacity(20 + 4 * s.numel());
    buf.extend_from_slice(NTF_MAGIC);
    for d in s.dims() {
        let d = u32::try_from(d).map_err(|_| Error::format("NTF", format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Parses one NTF tensor from the front of `bytes`, returning it and the
/// number of bytes consumed.
pub fn parse_ntf(bytes: &[u8]) -> Result<(Tensor, usize)> {
    if bytes.len() < 20 {
        return Err(Error::format("NTF", "truncated header"));
    }
    if &bytes[..4] != NTF_MAGIC {
        return Err(Error::format("NTF", "bad magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
    let numel = shape
        .n
        .checked_mul(shape.c)
        .and_then(|v| v.checked_mul(shape.h))
        .and_then(|v| v.checked_mul(shape.w))
        .ok_or_else(|| Error::format("NTF", format!("dims {shape} overflow")))?;
    let end = numel
        .checked_mul(4)
        .and_then(|b| b.checked_add(20))
        .ok_or_else(|| Error::format("NTF", format!("dims {shape} overflow")))?;
    if bytes.len() < end {
        return Err(Error::format(
            "NTF",
            format!("truncated data: {shape} needs {end} bytes, have {}", bytes.len()),
        ));
    }
    let data = bytes[20..end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((Tensor::from_parts(shape, data), end))
}

pub fn read_ntf(input: &mut impl Read) -> Result<Tensor> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (t, used) = parse_ntf(&bytes)?;
    if used != bytes.len() {
        return Err(Error::format("NTF", format!("{} trailing bytes", bytes.len() - used)));
    }
    Ok(t)
}

pub fn load_ntf(path: impl AsRef<Path>) -> Result<Tensor> {
    read_ntf(&mut fs::File::open(path)?)
}

pub fn save_ntf(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_ntf(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Raw 8-bit greyscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut token = || -> Result<&[u8]> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PGM", "truncated header"));
        }
        Ok(&bytes[start..pos])
    };
    if token()? != b"P5" {
        return Err(Error::format("PGM", "expected binary greyscale magic P5"));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PGM", format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::format("PGM", format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let len = width * height;
    if bytes.len() < start + len {
        return Err(Error::format("PGM", "truncated raster"));
    }
    if bytes.len() > start + len {
        return Err(Error::format("PGM", "trailing bytes after raster"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[start..start + len].to_vec(),
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&fs::read(path)?)
}

pub fn mask_from_image(img: &GrayImage) -> BinaryMask {
    BinaryMask::from_fn(img.height, img.width, |y, x| img.pixels[y * img.width + x] >= 128)
}

pub fn mask_to_image(mask: &BinaryMask) -> GrayImage {
    GrayImage {
        width: mask.width(),
        height: mask.height(),
        pixels: mask.data().iter().map(|&v| v * 255).collect(),
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(mask_from_image(&load_pgm(path)?))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    fs::write(path, encode_pgm(&mask_to_image(mask)))?;
    Ok(())
}
