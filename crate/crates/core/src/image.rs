//! Grayscale raster storage and binary PGM import/export.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels supplied for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Mean absolute per-pixel difference; images must share a shape.
    pub fn mean_abs_diff(&self, other: &GrayImage) -> Result<f64> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        Ok(sum / self.data.len().max(1) as f64)
    }

    /// Encodes as binary 8-bit PGM (P5).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Decodes binary (P5) or ASCII (P2) PGM with maxval up to 65535.
    pub fn from_pgm_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let next_token = |pos: &mut usize| -> Option<String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = next_token(&mut pos).ok_or("empty file")?;
        let parse = |t: Option<String>, what: &str| -> std::result::Result<usize, String> {
            t.ok_or(format!("missing {what}"))?
                .parse::<usize>()
                .map_err(|e| format!("bad {what}: {e}"))
        };
        let width = parse(next_token(&mut pos), "width")?;
        let height = parse(next_token(&mut pos), "height")?;
        let maxval = parse(next_token(&mut pos), "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        let n = width * height;
        let scale = 1.0 / maxval as f32;
        let data = match magic.as_str() {
            "P5" => {
                // exactly one whitespace byte separates the header from the raster
                pos += 1;
                let bpp = if maxval < 256 { 1 } else { 2 };
                let raster = bytes
                    .get(pos..pos + n * bpp)
                    .ok_or("truncated raster")?;
                if bpp == 1 {
                    raster.iter().map(|&b| b as f32 * scale).collect()
                } else {
                    raster
                        .chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale)
                        .collect()
                }
            }
            "P2" => {
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    v.push(parse(next_token(&mut pos), "pixel")? as f32 * scale);
                }
                v
            }
            other => return Err(format!("unsupported magic {other:?}")),
        };
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_quantizes_to_8_bits() {
        let data: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let img = GrayImage::from_vec(4, 3, data).unwrap();
        let back = GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn ascii_pgm_with_comments() {
        let src = b"P2\n# comment\n2 2\n# another\n4\n0 1\n2 4\n";
        let img = GrayImage::from_pgm_bytes(src).unwrap();
        assert_eq!(img.data(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn truncated_pgm_is_rejected() {
        let mut bytes = GrayImage::filled(8, 8, 0.5).to_pgm_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(GrayImage::from_pgm_bytes(&bytes).is_err());
    }
}
