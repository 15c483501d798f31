//! Single-channel and RGB float image planes.

use crate::error::{Error, Result};

/// A single-channel float image, row-major, nominally in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("image dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image has non-finite pixels"));
        }
        Ok(GrayImage { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        GrayImage::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        GrayImage::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    /// Top-left `rows × cols` sub-image.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || top + rows > self.rows || left + cols > self.cols {
            return Err(Error::invalid(format!(
                "crop {rows}x{cols} at ({top}, {left}) exceeds {}x{} image",
                self.rows, self.cols
            )));
        }
        GrayImage::from_fn(rows, cols, |r, c| self.get(top + r, left + c))
    }

    /// Crops to the largest size whose dimensions are multiples of `m`.
    pub fn crop_to_multiple(&self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("multiple must be positive"));
        }
        let (r, c) = (self.rows - self.rows % m, self.cols - self.cols % m);
        if r == 0 || c == 0 {
            return Err(Error::invalid(format!(
                "{}x{} image is smaller than the scale factor {m}",
                self.rows, self.cols
            )));
        }
        if (r, c) == self.dims() {
            return Ok(self.clone());
        }
        self.crop(0, 0, r, c)
    }

    /// Removes `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<Self> {
        if 2 * border >= self.rows || 2 * border >= self.cols {
            return Err(Error::invalid("border too wide for image"));
        }
        self.crop(border, border, self.rows - 2 * border, self.cols - 2 * border)
    }

    pub fn clamped(&self) -> Self {
        GrayImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.clamp(0.0, 255.0)).collect(),
        }
    }

    /// Rounds to the nearest 8-bit level.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.clamp(0.0, 255.0).round() as u8).collect()
    }

    pub fn from_u8(rows: usize, cols: usize, data: &[u8]) -> Result<Self> {
        GrayImage::new(rows, cols, data.iter().map(|&v| v as f64).collect())
    }
}

/// An RGB float image stored as three planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub r: GrayImage,
    pub g: GrayImage,
    pub b: GrayImage,
}

/// Full-range YCbCr planes (BT.601 weights, chroma offset 128).
#[derive(Clone, Debug, PartialEq)]
pub struct YCbCr {
    pub y: GrayImage,
    pub cb: GrayImage,
    pub cr: GrayImage,
}

/// BT.601 luma of one RGB triple.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

impl ColorImage {
    pub fn new(r: GrayImage, g: GrayImage, b: GrayImage) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(Error::invalid("color planes have different dimensions"));
        }
        Ok(ColorImage { r, g, b })
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        ColorImage {
            r: gray.clone(),
            g: gray.clone(),
            b: gray.clone(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn luma(&self) -> GrayImage {
        let data = self
            .r
            .pixels()
            .iter()
            .zip(self.g.pixels())
            .zip(self.b.pixels())
            .map(|((&r, &g), &b)| luma(r, g, b))
            .collect();
        GrayImage::new(self.r.rows(), self.r.cols(), data).expect("same dims as source")
    }

    pub fn to_ycbcr(&self) -> YCbCr {
        let n = self.r.pixels().len();
        let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (r, g, b) = (self.r.pixels()[i], self.g.pixels()[i], self.b.pixels()[i]);
            y.push(luma(r, g, b));
            cb.push(128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b);
            cr.push(128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b);
        }
        let (rows, cols) = self.dims();
        YCbCr {
            y: GrayImage::new(rows, cols, y).expect("dims"),
            cb: GrayImage::new(rows, cols, cb).expect("dims"),
            cr: GrayImage::new(rows, cols, cr).expect("dims"),
        }
    }

    pub fn clamped(&self) -> Self {
        ColorImage {
            r: self.r.clamped(),
            g: self.g.clamped(),
            b: self.b.clamped(),
        }
    }
}

impl YCbCr {
    pub fn to_rgb(&self) -> Result<ColorImage> {
        if self.y.dims() != self.cb.dims() || self.y.dims() != self.cr.dims() {
            return Err(Error::invalid("YCbCr planes have different dimensions"));
        }
        let n = self.y.pixels().len();
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let y = self.y.pixels()[i];
            let cb = self.cb.pixels()[i] - 128.0;
            let cr = self.cr.pixels()[i] - 128.0;
            r.push(y + 1.402 * cr);
            g.push(y - 0.344_136 * cb - 0.714_136 * cr);
            b.push(y + 1.772 * cb);
        }
        let (rows, cols) = self.y.dims();
        ColorImage::new(
            GrayImage::new(rows, cols, r)?,
            GrayImage::new(rows, cols, g)?,
            GrayImage::new(rows, cols, b)?,
        )
    }
}
