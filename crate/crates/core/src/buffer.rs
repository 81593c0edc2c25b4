use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read image {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: unsupported pixel format {format} (expected 8-bit RGB)")]
    Unsupported { path: String, format: String },
    #[error("invalid image dimensions {width}x{height}")]
    Dimensions { width: usize, height: usize },
}

/// RGB frame held as interleaved `f32` samples in `[0, 1]`.
///
/// Samples are quantized to 8 bits only when crossing a file boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub const CHANNELS: usize = 3;

    /// Builds a buffer from interleaved RGB samples; values are clamped to `[0, 1]`.
    pub fn from_samples(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self, ImageIoError> {
        if width == 0 || height == 0 || data.len() != width * height * Self::CHANNELS {
            return Err(ImageIoError::Dimensions { width, height });
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, ImageIoError> {
        Self::from_samples(width, height, vec![value; width * height * Self::CHANNELS])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, ImageIoError> {
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::from_samples(width, height, data)
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, ImageIoError> {
        if bytes.len() != width * height * Self::CHANNELS {
            return Err(ImageIoError::Dimensions { width, height });
        }
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::from_samples(width, height, data)
    }

    /// Quantizes to 8-bit with round-to-nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    /// Applies `f` to every sample, clamping the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    /// Extracts one channel as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(Self::CHANNELS).copied().collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: [Vec<f32>; 3]) -> Result<Self, ImageIoError> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(ImageIoError::Dimensions { width, height });
        }
        let mut data = Vec::with_capacity(n * Self::CHANNELS);
        for i in 0..n {
            data.extend(planes.iter().map(|p| p[i]));
        }
        Self::from_samples(width, height, data)
    }

    /// Decodes an 8-bit RGB image file. Grayscale, alpha and 16-bit inputs are rejected.
    pub fn read(path: &Path) -> Result<Self, ImageIoError> {
        let display = path.display().to_string();
        let decoded = image::ImageReader::open(path)
            .map_err(|e| ImageIoError::Read { path: display.clone(), source: image::ImageError::IoError(e) })?
            .with_guessed_format()
            .map_err(|e| ImageIoError::Read { path: display.clone(), source: image::ImageError::IoError(e) })?
            .decode()
            .map_err(|source| ImageIoError::Read { path: display.clone(), source })?;
        match decoded {
            image::DynamicImage::ImageRgb8(rgb) => {
                let (w, h) = rgb.dimensions();
                Self::from_rgb8(w as usize, h as usize, rgb.as_raw())
            }
            other => Err(ImageIoError::Unsupported { path: display, format: format!("{:?}", other.color()) }),
        }
    }

    /// Writes an 8-bit RGB PNG.
    pub fn write_png(&self, path: &Path) -> Result<(), ImageIoError> {
        let rgb = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or(ImageIoError::Dimensions { width: self.width, height: self.height })?;
        rgb.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| ImageIoError::Write { path: path.display().to_string(), source })
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    // NaN collapses to 0 so the [0, 1] invariant holds unconditionally.
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub(crate) fn quantize(v: f32) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Peak signal-to-noise ratio in dB between two equally sized buffers, on the 8-bit scale.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "psnr needs equal dimensions");
    let mse = a
        .to_rgb8()
        .iter()
        .zip(b.to_rgb8())
        .map(|(&x, y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_normalization_endpoints() {
        let img = ImageBuffer::from_rgb8(1, 1, &[0, 128, 255]).unwrap();
        assert_eq!(img.get(0, 0, 0), 0.0);
        assert!((img.get(0, 0, 1) - 0.501_96).abs() < 1e-5);
        assert_eq!(img.get(0, 0, 2), 1.0);
    }

    #[test]
    fn quantize_roundtrips_every_byte() {
        let bytes: Vec<u8> = (0..=255u8).flat_map(|b| [b, b, b]).collect();
        let img = ImageBuffer::from_rgb8(256, 1, &bytes).unwrap();
        assert_eq!(img.to_rgb8(), bytes);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(ImageBuffer::from_samples(0, 3, vec![]).is_err());
        assert!(ImageBuffer::from_samples(2, 2, vec![0.0; 11]).is_err());
    }

    #[test]
    fn planes_roundtrip() {
        let img = ImageBuffer::from_fn(3, 2, |x, y, c| (x + 2 * y + c) as f32 / 10.0).unwrap();
        let planes = [img.plane(0), img.plane(1), img.plane(2)];
        assert_eq!(ImageBuffer::from_planes(3, 2, planes).unwrap(), img);
    }
}
