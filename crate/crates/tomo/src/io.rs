//! `TOMO1` binary files and binary PGM import/export.
//!
//! `TOMO1` layout (little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 0..4  | magic `TOMO` |
//! | 4     | version, `1` |
//! | 5     | kind: `0` image, `1` sinogram |
//! | 6..8  | reserved, zero |
//! | 8..12 | rows (u32) |
//! | 12..16| cols (u32) |
//! | 16..  | `rows * cols` f32 values, row-major |

use std::io::{Read, Write};

use crate::geometry::{Image, Sinogram};
use crate::{cast, f64_of, Result, Scalar, TomoError};

const MAGIC: &[u8; 4] = b"TOMO";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Image = 0,
    Sinogram = 1,
}

fn fmt_err(m: impl Into<String>) -> TomoError {
    TomoError::Format(m.into())
}

pub fn write_tomo<T: Scalar, W: Write>(mut w: W, kind: Kind, rows: usize, cols: usize, data: &[T]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(TomoError::Dimension(format!("{rows}x{cols} with {} values", data.len())));
    }
    let mut buf = Vec::with_capacity(16 + 4 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(kind as u8);
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in data {
        buf.extend_from_slice(&(f64_of(v) as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tomo<T: Scalar, R: Read>(mut r: R) -> Result<(Kind, usize, usize, Vec<T>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|_| fmt_err("truncated header"))?;
    if &head[0..4] != MAGIC {
        return Err(fmt_err("bad magic"));
    }
    if head[4] != VERSION {
        return Err(fmt_err(format!("unsupported version {}", head[4])));
    }
    let kind = match head[5] {
        0 => Kind::Image,
        1 => Kind::Sinogram,
        k => return Err(fmt_err(format!("unknown kind {k}"))),
    };
    let rows = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let mut payload = vec![0u8; 4 * rows * cols];
    r.read_exact(&mut payload).map_err(|_| fmt_err("truncated payload"))?;
    let data = payload
        .chunks_exact(4)
        .map(|b| cast(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    Ok((kind, rows, cols, data))
}

pub fn write_image<T: Scalar, W: Write>(w: W, img: &Image<T>) -> Result<()> {
    write_tomo(w, Kind::Image, img.h, img.w, &img.data)
}

pub fn write_sinogram<T: Scalar, W: Write>(w: W, s: &Sinogram<T>) -> Result<()> {
    write_tomo(w, Kind::Sinogram, s.n_v, s.n_d, &s.data)
}

pub fn read_image<T: Scalar, R: Read>(r: R) -> Result<Image<T>> {
    match read_tomo(r)? {
        (Kind::Image, h, w, data) => Image::new(h, w, data),
        _ => Err(fmt_err("expected an image file")),
    }
}

pub fn read_sinogram<T: Scalar, R: Read>(r: R) -> Result<Sinogram<T>> {
    match read_tomo(r)? {
        (Kind::Sinogram, v, d, data) => Sinogram::new(v, d, data),
        _ => Err(fmt_err("expected a sinogram file")),
    }
}

pub fn save_image<T: Scalar>(path: impl AsRef<std::path::Path>, img: &Image<T>) -> Result<()> {
    write_image(std::io::BufWriter::new(std::fs::File::create(path)?), img)
}

pub fn load_image<T: Scalar>(path: impl AsRef<std::path::Path>) -> Result<Image<T>> {
    read_image(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_sinogram<T: Scalar>(path: impl AsRef<std::path::Path>, s: &Sinogram<T>) -> Result<()> {
    write_sinogram(std::io::BufWriter::new(std::fs::File::create(path)?), s)
}

pub fn load_sinogram<T: Scalar>(path: impl AsRef<std::path::Path>) -> Result<Sinogram<T>> {
    read_sinogram(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Binary PGM (`P5`), max-normalised: the image maximum maps to `maxval`
/// (255 or 65535); negative values clip to zero.
pub fn write_pgm<T: Scalar, W: Write>(mut w: W, img: &Image<T>, sixteen_bit: bool) -> Result<()> {
    let maxval: u32 = if sixteen_bit { 65535 } else { 255 };
    let peak = img.data.iter().map(|&v| f64_of(v)).fold(0.0, f64::max);
    let scale = if peak > 0.0 { maxval as f64 / peak } else { 0.0 };
    let mut buf = format!("P5\n{} {}\n{maxval}\n", img.w, img.h).into_bytes();
    for &v in &img.data {
        let q = (f64_of(v).max(0.0) * scale).round().min(maxval as f64) as u32;
        if sixteen_bit {
            buf.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            buf.push(q as u8);
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a binary PGM, returning values divided by `maxval`.
pub fn read_pgm<T: Scalar, R: Read>(mut r: R) -> Result<Image<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
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
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err("truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(fmt_err("only binary P5 PGM is supported"));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| fmt_err(format!("bad PGM number `{s}`")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(fmt_err(format!("bad maxval {maxval}")));
    }
    let start = pos + 1;
    let bpp = if maxval > 255 { 2 } else { 1 };
    let body = bytes
        .get(start..start + w * h * bpp)
        .ok_or_else(|| fmt_err("truncated PGM payload"))?;
    let data = if bpp == 1 {
        body.iter().map(|&b| cast(b as f64 / maxval as f64)).collect()
    } else {
        body.chunks_exact(2)
            .map(|c| cast(u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64))
            .collect()
    };
    Image::new(h, w, data)
}
