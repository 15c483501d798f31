//! 8-bit PNG and PGM/PPM file I/O.
//!
//! Color images are reduced to gray with BT.601 luma weights
//! (`0.299 R + 0.587 G + 0.114 B`); alpha channels are ignored.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage};

#[derive(Clone, Debug, PartialEq)]
pub enum LoadedImage {
    Gray(GrayImage),
    Color(ColorImage),
}

impl LoadedImage {
    pub fn to_gray(&self) -> GrayImage {
        match self {
            LoadedImage::Gray(g) => g.clone(),
            LoadedImage::Color(c) => c.luma(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            LoadedImage::Gray(g) => g.dims(),
            LoadedImage::Color(c) => c.dims(),
        }
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        other => Err(Error::UnsupportedImage(format!(
            "{}: unsupported extension '{other}' (use .png, .pgm or .ppm)",
            path.display()
        ))),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let img = ImageReader::with_format(std::io::BufReader::new(fs::File::open(path)?), format)
        .decode()
        .map_err(|e| Error::UnsupportedImage(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(LoadedImage::Gray(GrayImage::from_u8(h, w, buf.as_raw())?)),
        DynamicImage::ImageLumaA8(buf) => {
            let luma: Vec<u8> = buf.as_raw().chunks_exact(2).map(|p| p[0]).collect();
            Ok(LoadedImage::Gray(GrayImage::from_u8(h, w, &luma)?))
        }
        DynamicImage::ImageRgb8(buf) => Ok(LoadedImage::Color(planes(h, w, buf.as_raw(), 3)?)),
        DynamicImage::ImageRgba8(buf) => Ok(LoadedImage::Color(planes(h, w, buf.as_raw(), 4)?)),
        other => Err(Error::UnsupportedImage(format!(
            "{}: {}-bit {:?} images are not supported, only 8-bit gray or RGB",
            path.display(),
            other.color().bits_per_pixel() / other.color().channel_count() as u16,
            other.color()
        ))),
    }
}

fn planes(h: usize, w: usize, raw: &[u8], stride: usize) -> Result<ColorImage> {
    let plane = |k: usize| -> Vec<f64> { raw.chunks_exact(stride).map(|p| p[k] as f64).collect() };
    ColorImage::new(
        GrayImage::new(h, w, plane(0))?,
        GrayImage::new(h, w, plane(1))?,
        GrayImage::new(h, w, plane(2))?,
    )
}

/// Reads any supported image and converts it to gray.
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(read_image(path)?.to_gray())
}

/// Writes an 8-bit gray PNG or binary PGM; pixels are clamped and rounded.
pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (h, w) = img.dims();
    let bytes = img.to_u8();
    match format {
        ImageFormat::Pnm => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&bytes);
            fs::write(path, out)?;
        }
        _ => image::save_buffer_with_format(path, &bytes, w as u32, h as u32, image::ExtendedColorType::L8, format)
            .map_err(|e| Error::UnsupportedImage(format!("{}: {e}", path.display())))?,
    }
    Ok(())
}

/// Writes an 8-bit RGB PNG or binary PPM.
pub fn write_color(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (h, w) = img.dims();
    let (r, g, b) = (img.r.to_u8(), img.g.to_u8(), img.b.to_u8());
    let mut bytes = Vec::with_capacity(3 * w * h);
    for i in 0..w * h {
        bytes.extend_from_slice(&[r[i], g[i], b[i]]);
    }
    match format {
        ImageFormat::Pnm => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&bytes);
            fs::write(path, out)?;
        }
        _ => image::save_buffer_with_format(path, &bytes, w as u32, h as u32, image::ExtendedColorType::Rgb8, format)
            .map_err(|e| Error::UnsupportedImage(format!("{}: {e}", path.display())))?,
    }
    Ok(())
}

pub fn write_image(path: impl AsRef<Path>, img: &LoadedImage) -> Result<()> {
    match img {
        LoadedImage::Gray(g) => write_gray(path, g),
        LoadedImage::Color(c) => write_color(path, c),
    }
}
