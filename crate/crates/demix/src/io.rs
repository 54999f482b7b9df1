//! PGM images, plain vectors and CSV tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use demix_core::solver::TraceRow;
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Grayscale image with samples in `[0, maxval]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl Pgm {
    /// Samples scaled to `[0, 1]`, flattened column-major to match matrix signals.
    pub fn to_unit_column_major(&self) -> Vec<f64> {
        let scale = 1.0 / f64::from(self.maxval.max(1));
        let mut out = vec![0.0; self.width * self.height];
        for r in 0..self.height {
            for c in 0..self.width {
                out[r + c * self.height] = f64::from(self.pixels[r * self.width + c]) * scale;
            }
        }
        out
    }
}

/// Affine map `pixel = round((value − offset) · scale)` used to write a signal as 8-bit PGM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelMap {
    pub offset: f64,
    pub scale: f64,
}

impl PixelMap {
    pub fn fit(values: &[f64]) -> Self {
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !lo.is_finite() || hi <= lo {
            return PixelMap {
                offset: if lo.is_finite() { lo } else { 0.0 },
                scale: 0.0,
            };
        }
        PixelMap {
            offset: lo,
            scale: 255.0 / (hi - lo),
        }
    }

    pub fn pixel(&self, v: f64) -> u8 {
        ((v - self.offset) * self.scale).round().clamp(0.0, 255.0) as u8
    }
}

fn skip_space_and_comments(data: &[u8], mut i: usize) -> usize {
    loop {
        while i < data.len() && data[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < data.len() && data[i] == b'#' {
            while i < data.len() && data[i] != b'\n' {
                i += 1;
            }
        } else {
            return i;
        }
    }
}

fn header_number(data: &[u8], i: &mut usize, path: &Path) -> Result<usize> {
    *i = skip_space_and_comments(data, *i);
    let start = *i;
    while *i < data.len() && data[*i].is_ascii_digit() {
        *i += 1;
    }
    std::str::from_utf8(&data[start..*i])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HarnessError::format(path, "malformed PGM header"))
}

pub fn parse_pgm(data: &[u8], path: &Path) -> Result<Pgm> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(HarnessError::format(path, "not a binary PGM (P5)"));
    }
    let mut i = 2;
    let width = header_number(data, &mut i, path)?;
    let height = header_number(data, &mut i, path)?;
    let maxval = header_number(data, &mut i, path)?;
    if maxval == 0 || maxval > 65535 || width == 0 || height == 0 {
        return Err(HarnessError::format(path, "PGM dimensions or maxval out of range"));
    }
    if i >= data.len() || !data[i].is_ascii_whitespace() {
        return Err(HarnessError::format(path, "PGM header must end with one whitespace byte"));
    }
    i += 1;
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    let body = data
        .get(i..i + need)
        .ok_or_else(|| HarnessError::format(path, "PGM raster is truncated"))?;
    let pixels = if wide {
        body.chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])).collect()
    } else {
        body.iter().map(|p| u16::from(*p)).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let data = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    parse_pgm(&data, path)
}

/// Encodes a column-major `rows × cols` signal as an 8-bit P5 image.
pub fn encode_pgm(values: &[f64], rows: usize, cols: usize) -> (Vec<u8>, PixelMap) {
    let map = PixelMap::fit(values);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            out.push(map.pixel(values[r + c * rows]));
        }
    }
    (out, map)
}

pub fn write_pgm(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<PixelMap> {
    let (bytes, map) = encode_pgm(values, rows, cols);
    write_bytes(path, &bytes)?;
    Ok(map)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(path, e))
}

fn is_text(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("csv" | "txt")
    )
}

/// Reads a vector: text (`.csv`, `.txt`; values separated by commas or
/// whitespace) or raw little-endian `f64` otherwise.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let data = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    if is_text(path) {
        let text = std::str::from_utf8(&data).map_err(|_| HarnessError::format(path, "not UTF-8 text"))?;
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| HarnessError::format(path, format!("not a number: {t:?}")))
            })
            .collect()
    } else {
        if data.len() % 8 != 0 {
            return Err(HarnessError::format(path, "binary vector length is not a multiple of 8 bytes"));
        }
        Ok(data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Writes a vector in the format implied by the extension (see [`read_vector`]).
pub fn write_vector(path: &Path, values: &[f64]) -> Result<()> {
    let bytes = if is_text(path) {
        let mut s = String::with_capacity(values.len() * 24);
        for v in values {
            s.push_str(&format!("{v}\n"));
        }
        s.into_bytes()
    } else {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    };
    write_bytes(path, &bytes)
}

/// Row-major text matrix or column-major binary, as for [`read_vector`].
pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<demix_core::dense::Mat> {
    let values = read_vector(path)?;
    if values.len() != rows * cols {
        return Err(HarnessError::format(
            path,
            format!("expected {rows}×{cols} = {} entries, found {}", rows * cols, values.len()),
        ));
    }
    let m = if is_text(path) {
        demix_core::dense::Mat::from_fn(rows, cols, |i, j| values[i * cols + j])
    } else {
        demix_core::dense::Mat::from_col_major(rows, cols, values)?
    };
    Ok(m)
}

/// Serializes rows into CSV bytes with a fixed header.
pub fn csv_bytes<R: serde::Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn write_csv<R: serde::Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    write_bytes(path, &csv_bytes(rows)?)
}

#[derive(Serialize)]
struct TraceCsvRow {
    outer_iter: usize,
    tau: f64,
    lower_bound: f64,
    residual_norm: f64,
    gap: f64,
    inner_iters: usize,
}

/// Writes the outer-loop trace as `outer_iter,tau,lower_bound,residual_norm,gap,inner_iters`.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let rows: Vec<TraceCsvRow> = trace
        .iter()
        .map(|t| TraceCsvRow {
            outer_iter: t.outer_iter,
            tau: t.tau,
            lower_bound: t.lower_bound,
            residual_norm: t.residual_norm,
            gap: t.gap,
            inner_iters: t.inner_iters,
        })
        .collect();
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_with_comment() {
        let data = b"P5\n# made by hand\n3 2\n255\n\x00\x10\x20\x30\x40\xff";
        let img = parse_pgm(data, Path::new("x.pgm")).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (3, 2, 255));
        let x = img.to_unit_column_major();
        assert_eq!(x[1], 0x30 as f64 / 255.0);
        assert_eq!(x[5], 1.0);
    }

    #[test]
    fn pgm_encoding_rescales() {
        let (bytes, map) = encode_pgm(&[0.0, 1.0, 2.0, 4.0], 2, 2);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 64, 255]);
        assert_eq!(map.offset, 0.0);
        assert!((map.scale - 255.0 / 4.0).abs() < 1e-12);
        let back = parse_pgm(&bytes, Path::new("y.pgm")).unwrap();
        assert_eq!(back.pixels, vec![0, 128, 64, 255]);
    }

    #[test]
    fn constant_image_has_zero_scale() {
        let (bytes, map) = encode_pgm(&[3.0; 4], 2, 2);
        assert_eq!(map.scale, 0.0);
        assert!(bytes[11..].iter().all(|p| *p == 0));
    }

    #[test]
    fn truncated_pgm_is_rejected() {
        assert!(parse_pgm(b"P5 2 2 255\n\x00", Path::new("t.pgm")).is_err());
        assert!(parse_pgm(b"P2 2 2 255\n", Path::new("t.pgm")).is_err());
    }
}
