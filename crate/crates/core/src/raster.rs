//! RGB images and scalar planes with the filters built on them.

use std::io::Cursor;
use std::path::Path;

use image::{ExtendedColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::par;

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Owned 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn from_rgb(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// An image filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::from_rgb(width, height, pixels)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::from_rgb(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> [u8; 3] {
        let p = &self.pixels[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixel(y as usize * self.width as usize + x as usize)
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Reads a PNG or JPEG file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        Self::decode(&bytes)
    }

    /// Decodes PNG or JPEG bytes; other formats are rejected.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let format = supported_format(bytes)?;
        let rgb = image::load_from_memory_with_format(bytes, format)?.into_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_rgb(w, h, rgb.into_raw())
    }

    /// Width and height from the header, without decoding pixels.
    pub fn peek_dimensions(bytes: &[u8]) -> Result<(u32, u32)> {
        let format = supported_format(bytes)?;
        let reader = image::ImageReader::with_format(Cursor::new(bytes), format);
        Ok(reader.into_dimensions()?)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.pixels,
            self.width,
            self.height,
            ExtendedColorType::Rgb8,
            ImageFormat::Png,
        )?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Dense real-valued plane, row-major. Used for luma, map channels, and
/// feather weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

/// Per-pixel luma in [0, 1].
pub type LumaPlane = Plane;

impl Plane {
    pub fn new(width: u32, height: u32, fill: f64) -> Self {
        Self {
            width,
            height,
            values: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "plane has {} values, expected {}",
                values.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Encodes values in [-1, 1] as 8-bit gray, `round((v + 1) / 2 * 255)`.
    pub fn encode_signed_png(&self) -> Result<Vec<u8>> {
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0).round() as u8)
            .collect();
        let mut out = Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &bytes,
            self.width,
            self.height,
            ExtendedColorType::L8,
            ImageFormat::Png,
        )?;
        Ok(out.into_inner())
    }
}

fn supported_format(bytes: &[u8]) -> Result<ImageFormat> {
    let format = image::guess_format(bytes)?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::format(format!(
            "unsupported image format {format:?} (PNG or JPEG required)"
        )));
    }
    Ok(format)
}

#[inline]
pub(crate) fn luma_of(rgb: [u8; 3]) -> f64 {
    (LUMA_WEIGHTS[0] * rgb[0] as f64 + LUMA_WEIGHTS[1] * rgb[1] as f64 + LUMA_WEIGHTS[2] * rgb[2] as f64)
        / 255.0
}

pub fn to_luma(img: &Image) -> LumaPlane {
    Plane {
        width: img.width,
        height: img.height,
        values: img.pixels().map(luma_of).collect(),
    }
}

/// Normalized Gaussian taps for offsets `-radius..=radius`, radius = ceil(3 sigma).
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / denom).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(plane: &Plane, sigma: f64) -> Result<Plane> {
    let taps = gaussian_kernel(sigma)?;
    let radius = (taps.len() / 2) as i64;
    let w = plane.width as usize;
    let h = plane.height as usize;
    if w == 0 || h == 0 {
        return Ok(plane.clone());
    }

    let mut horizontal = vec![0.0; w * h];
    par::for_each_chunk(&mut horizontal, w, |y, row| {
        let src = &plane.values[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let sx = (x as i64 + t as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += k * src[sx];
            }
            *out = acc;
        }
    });

    let mut out = vec![0.0; w * h];
    par::for_each_chunk(&mut out, w, |y, row| {
        for (t, &k) in taps.iter().enumerate() {
            let sy = (y as i64 + t as i64 - radius).clamp(0, h as i64 - 1) as usize;
            let src = &horizontal[sy * w..(sy + 1) * w];
            for (o, &s) in row.iter_mut().zip(src) {
                *o += k * s;
            }
        }
    });

    Ok(Plane {
        width: plane.width,
        height: plane.height,
        values: out,
    })
}

/// Peak signal-to-noise ratio over all RGB channels with peak 255.
/// Identical images yield `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid(format!(
            "psnr needs equal dimensions, got {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let sse: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.pixels.len() as f64;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

/// Mean absolute per-channel difference in 8-bit units.
pub fn mean_abs_diff(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_size(b) {
        return Err(Error::invalid("mean_abs_diff needs equal dimensions"));
    }
    let total: u64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum();
    Ok(total as f64 / a.pixels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_extremes_and_red() {
        let white = Image::filled(1, 1, [255, 255, 255]).unwrap();
        let black = Image::filled(1, 1, [0, 0, 0]).unwrap();
        let red = Image::filled(1, 1, [255, 0, 0]).unwrap();
        assert!((to_luma(&white).values[0] - 1.0).abs() < 1e-12);
        assert_eq!(to_luma(&black).values[0], 0.0);
        assert!((to_luma(&red).values[0] - 0.2126).abs() < 1e-12);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let p = Plane::new(9, 7, 0.5);
        for sigma in [0.3, 1.0, 2.5, 10.0] {
            let b = gaussian_blur(&p, sigma).unwrap();
            assert!(b.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn blur_impulse_center_matches_direct_kernel() {
        let mut p = Plane::new(11, 11, 0.0);
        p.values[5 * 11 + 5] = 1.0;
        let b = gaussian_blur(&p, 1.0).unwrap();
        // direct evaluation: 1-D weights exp(-d^2/2) for d in -3..=3, normalized
        let w: Vec<f64> = (-3i32..=3).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
        let s: f64 = w.iter().sum();
        let center_1d = 1.0 / s;
        let expected = center_1d * center_1d;
        assert!((b.get(5, 5) - expected).abs() < 1e-12);
        assert!((expected - 0.15924112569070245).abs() < 1e-12);
    }

    #[test]
    fn blur_rejects_non_positive_sigma() {
        let p = Plane::new(4, 4, 0.0);
        assert!(matches!(gaussian_blur(&p, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gaussian_blur(&p, -1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gaussian_blur(&p, f64::NAN), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn psnr_cases() {
        let a = Image::filled(4, 4, [0, 0, 0]).unwrap();
        let b = Image::filled(4, 4, [1, 1, 1]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let v = psnr(&a, &b).unwrap();
        assert!((v - 10.0 * (255.0f64 * 255.0).log10()).abs() < 1e-12);
        assert!((v - 48.13).abs() < 0.01);
        let c = Image::filled(5, 4, [0, 0, 0]).unwrap();
        assert!(matches!(psnr(&a, &c), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = Image::from_fn(7, 5, |x, y| [(x * 30) as u8, (y * 50) as u8, (x ^ y) as u8]).unwrap();
        let png = img.encode_png().unwrap();
        assert_eq!(Image::peek_dimensions(&png).unwrap(), (7, 5));
        assert_eq!(img, Image::decode(&png).unwrap());
    }

    #[test]
    fn decode_rejects_unknown_bytes() {
        assert!(Image::decode(b"not an image at all").is_err());
    }

    #[test]
    fn from_rgb_validates_length() {
        assert!(Image::from_rgb(2, 2, vec![0; 11]).is_err());
        assert!(Image::from_rgb(0, 2, vec![]).is_err());
    }
}
