//! Pixel containers, PNG/JPEG codecs, bilinear resampling and sRGB to
//! CIE L\*a\*b\* conversion.
//!
//! Samples are stored as `f32` regardless of source depth; the
//! [`SampleRange`] records whether they live in `[0, 255]` or `[0, 1]`.

use std::cell::Cell;
use std::io::{self, BufRead, Cursor, Read, Seek, SeekFrom};
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interpretation of stored sample values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleRange {
    /// Integer intensities in `[0, 255]`.
    Byte,
    /// Normalized intensities in `[0, 1]`.
    Unit,
}

impl SampleRange {
    fn max(self) -> f32 {
        match self {
            SampleRange::Byte => 255.0,
            SampleRange::Unit => 1.0,
        }
    }
}

/// Rectangular grid of interleaved gray, RGB or RGBA samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    range: SampleRange,
    samples: Vec<f32>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, range: SampleRange, samples: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidRaster(format!("unsupported channel count {channels}")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "expected {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            range,
            samples,
        })
    }

    /// Image where every pixel equals `pixel`.
    pub fn filled(width: usize, height: usize, range: SampleRange, pixel: &[f32]) -> Result<Self> {
        let samples = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), range, samples)
    }

    pub fn from_rgba8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            4,
            SampleRange::Byte,
            bytes.iter().map(|&b| f32::from(b)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn range(&self) -> SampleRange {
        self.range
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.samples[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.samples[i..i + self.channels]
    }

    /// Same pixels rescaled to `range`.
    pub fn with_range(&self, range: SampleRange) -> Self {
        if range == self.range {
            return self.clone();
        }
        let scale = range.max() / self.range.max();
        Self {
            samples: self.samples.iter().map(|v| v * scale).collect(),
            range,
            ..*self
        }
    }

    /// Drops alpha from RGBA; gray is expanded to RGB.
    pub fn to_rgb(&self) -> Self {
        let samples = match self.channels {
            3 => return self.clone(),
            4 => self.samples.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            _ => self.samples.iter().flat_map(|&v| [v, v, v]).collect(),
        };
        Self {
            channels: 3,
            samples,
            ..*self
        }
    }

    /// Quantized 8-bit samples (rounded, clamped).
    pub fn to_bytes(&self) -> Vec<u8> {
        let scale = 255.0 / self.range.max();
        self.samples
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Lossless PNG encoding with pinned compression settings, so equal
    /// images always produce equal bytes.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => ExtendedColorType::L8,
            3 => ExtendedColorType::Rgb8,
            _ => ExtendedColorType::Rgba8,
        };
        let mut out = Vec::new();
        PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
            .write_image(&self.to_bytes(), self.width as u32, self.height as u32, color)
            .map_err(|e| Error::Encode(e.to_string()))?;
        Ok(out)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_image(&bytes)
    }
}

/// Reader over a byte slice that remembers the furthest offset touched,
/// which is where the decoder gave up when it fails.
struct TrackingReader<'a> {
    inner: Cursor<&'a [u8]>,
    furthest: &'a Cell<u64>,
}

impl TrackingReader<'_> {
    fn touch(&self) {
        let pos = self.inner.position();
        if pos > self.furthest.get() {
            self.furthest.set(pos);
        }
    }
}

impl Read for TrackingReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.touch();
        Ok(n)
    }
}

impl BufRead for TrackingReader<'_> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.touch();
    }
}

impl Seek for TrackingReader<'_> {
    fn seek(&mut self, pos: SeekFrom) -> io::Result<u64> {
        let p = self.inner.seek(pos)?;
        self.touch();
        Ok(p)
    }
}

/// Decodes a PNG or JPEG stream. Grayscale PNGs keep a single channel,
/// gray+alpha is promoted to RGBA.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode {
        offset: 0,
        message: e.to_string(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode {
            offset: 0,
            message: format!("unsupported format {format:?}"),
        });
    }
    let furthest = Cell::new(0);
    let reader = TrackingReader {
        inner: Cursor::new(bytes),
        furthest: &furthest,
    };
    let decoded = ImageReader::with_format(reader, format)
        .decode()
        .map_err(|e| Error::Decode {
            offset: furthest.get(),
            message: e.to_string(),
        })?;
    Ok(from_dynamic(decoded))
}

fn from_dynamic(img: DynamicImage) -> RasterImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bytes) = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) => (1, img.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => {
            (3, img.to_rgb8().into_raw())
        }
        _ => (4, img.to_rgba8().into_raw()),
    };
    RasterImage {
        width: w,
        height: h,
        channels,
        range: SampleRange::Byte,
        samples: bytes.into_iter().map(f32::from).collect(),
    }
}

/// Bilinear resampling with half-pixel-center alignment. All channels,
/// alpha included, are interpolated identically.
pub fn resize_bilinear(img: &RasterImage, width: usize, height: usize) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::Precondition(format!(
            "resize target must be at least 1x1, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width, width);
    let ys = axis_taps(img.height, height);
    let ch = img.channels;
    let mut samples = Vec::with_capacity(width * height * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..ch {
                let top = p00[c] + (p10[c] - p00[c]) * fx;
                let bottom = p01[c] + (p11[c] - p01[c]) * fx;
                samples.push(top + (bottom - top) * fy);
            }
        }
    }
    RasterImage::new(width, height, ch, img.range, samples)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// D65 reference white.
pub const D65_WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

/// Per-pixel CIE L\*a\*b\* values.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    values: Vec<[f64; 3]>,
}

impl LabImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one sRGB triple with components in `[0, 1]`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / D65_WHITE[0]);
    let fy = lab_f(y / D65_WHITE[1]);
    let fz = lab_f(z / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB(A) to L\*a\*b\*; alpha is ignored.
pub fn rgb_to_lab(img: &RasterImage) -> Result<LabImage> {
    if !matches!(img.channels, 3 | 4) {
        return Err(Error::WrongChannels {
            expected: "3 or 4",
            found: img.channels,
        });
    }
    let scale = f64::from(img.range.max());
    let values = img
        .samples
        .chunks_exact(img.channels)
        .map(|p| {
            srgb_to_lab([
                f64::from(p[0]) / scale,
                f64::from(p[1]) / scale,
                f64::from(p[2]) / scale,
            ])
        })
        .collect();
    Ok(LabImage {
        width: img.width,
        height: img.height,
        values,
    })
}
