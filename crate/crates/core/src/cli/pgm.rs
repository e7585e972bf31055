use crate::error::{Error, Result};
use crate::testproblems::Image;
use std::io::Write;
use std::path::Path;

/// Value range mapped onto `0..=255`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmBounds {
    pub min: f64,
    pub max: f64,
}

/// Min-max normalization to bytes; a constant image becomes mid-gray 128.
pub fn normalize(pixels: &[f64]) -> Result<(Vec<u8>, PgmBounds)> {
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("image has non-finite pixels".into()));
    }
    let min = pixels.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if pixels.is_empty() {
        return Ok((Vec::new(), PgmBounds { min: 0.0, max: 0.0 }));
    }
    let bytes = if max > min {
        let scale = 255.0 / (max - min);
        pixels
            .iter()
            .map(|v| ((v - min) * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        vec![128; pixels.len()]
    };
    Ok((bytes, PgmBounds { min, max }))
}

/// Encodes an 8-bit binary PGM (P5).
pub fn encode_pgm(img: &Image) -> Result<(Vec<u8>, PgmBounds)> {
    let (bytes, bounds) = normalize(&img.pixels)?;
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&bytes);
    Ok((out, bounds))
}

pub fn write_pgm(img: &Image, path: &Path) -> Result<PgmBounds> {
    let (data, bounds) = encode_pgm(img)?;
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(&data)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(bounds)
}

/// Parsed P5 file: width, height and raw 8-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Pgm {
    /// Maps bytes back to `[min, max]`.
    pub fn to_image(&self, bounds: PgmBounds) -> Result<Image> {
        let span = bounds.max - bounds.min;
        let px = self
            .data
            .iter()
            .map(|&b| bounds.min + span * b as f64 / 255.0)
            .collect();
        Image::new(self.width, self.height, px)
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let bad = |msg: &str| Error::InvalidArgument(format!("malformed PGM: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields
            .push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("magic is not P5"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    pos += 1;
    let data = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| bad("truncated pixel data"))?;
    Ok(Pgm {
        width,
        height,
        data: data.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_pgm(&bytes)
}
