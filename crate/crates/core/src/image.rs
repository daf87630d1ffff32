//! The real-valued grayscale raster shared by every stage, plus 8-bit and
//! float32 file interchange.

use std::fs;
use std::path::Path;

use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with nominal range `[0, 1]`.
///
/// `width` counts columns (lateral) and `height` counts rows (axial). In the
/// transform formulas the first spatial index runs over rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "image {width}x{height} needs {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput {
                index,
                reason: format!("non-finite pixel value {}", data[index]),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Min-max normalization to `[0, 1]`. A constant image maps to zeros.
    pub fn rescaled(&self) -> Self {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|v| (v - lo) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self { width: self.width, height: self.height, data }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resample_bilinear(&self, out_width: usize, out_height: usize) -> Result<Self> {
        let sx = self.width as f64 / out_width as f64;
        let sy = self.height as f64 / out_height as f64;
        let (w, h) = (self.width, self.height);
        Self::from_fn(out_width, out_height, |row, col| {
            let y = ((row as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let x = ((col as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
            let bottom = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }

    /// Quantizes to 8 bits, clamping to `[0, 1]` first.
    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_gray8(img: &GrayImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }
}

/// Reads an 8-bit grayscale PNG or PGM. Colour inputs are converted to luma.
pub fn read_gray8(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(img.to_luma8())
}

pub fn read_image(path: &Path) -> Result<Image2D> {
    let gray = read_gray8(path)?;
    if gray.width() == 0 || gray.height() == 0 {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: "empty image".into(),
        });
    }
    Ok(Image2D::from_gray8(&gray))
}

/// Writes an 8-bit grayscale image; the format follows the extension
/// (`.pgm` writes binary PGM, anything else PNG).
pub fn write_image(path: &Path, img: &Image2D) -> Result<()> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pgm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    img.to_gray8()
        .save_with_format(path, format)
        .map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("write failed: {e}"),
        })
}

/// True for the file extensions the image readers accept.
pub fn is_image_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "pgm")
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    pub dtype: String,
}

/// Writes `img` as raw little-endian float32 at `path` with a JSON sidecar
/// at `path` + `.json`.
pub fn write_f32le(path: &Path, img: &Image2D) -> Result<()> {
    let mut bytes = Vec::with_capacity(img.data.len() * 4);
    for &v in &img.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = RawSidecar {
        width: img.width,
        height: img.height,
        dtype: "f32le".into(),
    };
    let json_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

pub fn read_f32le(path: &Path) -> Result<Image2D> {
    let json_path = sidecar_path(path);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let sidecar: RawSidecar = serde_json::from_str(&text)?;
    let ingestion = |reason: String| Error::Ingestion { path: path.to_path_buf(), reason };
    if sidecar.dtype != "f32le" {
        return Err(ingestion(format!("unsupported dtype {:?}", sidecar.dtype)));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != sidecar.width * sidecar.height * 4 {
        return Err(ingestion(format!(
            "expected {} bytes for {}x{}, found {}",
            sidecar.width * sidecar.height * 4,
            sidecar.width,
            sidecar.height,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Image2D::new(sidecar.width, sidecar.height, data)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".json");
    name.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_pixel_with_index() {
        let err = Image2D::new(2, 2, vec![0.0, 1.0, f64::NAN, 0.5]).unwrap_err();
        match err {
            Error::InvalidInput { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_length_and_zero_dims() {
        assert!(Image2D::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image2D::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let img = Image2D::from_fn(5, 3, |r, c| (r * 5 + c) as f64 / 15.0).unwrap();
        assert_eq!(img.resample_bilinear(5, 3).unwrap(), img);
        let flat = Image2D::filled(7, 9, 0.25).unwrap();
        let up = flat.resample_bilinear(20, 13).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn gray8_quantization_clamps() {
        let img = Image2D::new(3, 1, vec![-0.2, 0.5, 1.7]).unwrap();
        assert_eq!(img.to_gray8().as_raw(), &vec![0u8, 128, 255]);
    }

    #[test]
    fn f32_sidecar_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.f32");
        let img = Image2D::from_fn(4, 3, |r, c| 0.125 * (r + c) as f64).unwrap();
        write_f32le(&path, &img).unwrap();
        let sidecar = fs::read_to_string(dir.path().join("env.f32.json")).unwrap();
        assert!(sidecar.contains("\"dtype\": \"f32le\""));
        assert_eq!(read_f32le(&path).unwrap(), img);
    }

    #[test]
    fn png_and_pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image2D::from_fn(6, 4, |r, c| ((r * 6 + c) * 10) as f64 / 255.0).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            write_image(&path, &img).unwrap();
            assert!(read_image(&path).unwrap().max_abs_diff(&img) < 1e-12);
        }
    }
}
