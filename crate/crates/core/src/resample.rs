//! Separable cubic resampling.
//!
//! The kernel is the Keys cubic convolution kernel with `a = −0.5`:
//!
//! ```text
//! k(x) = 1.5|x|³ − 2.5|x|² + 1                 for |x| ≤ 1
//!      = −0.5|x|³ + 2.5|x|² − 4|x| + 2         for 1 < |x| < 2
//!      = 0                                     otherwise
//! ```
//!
//! Output sample `i` sits at input coordinate `u = (i + ½)/s − ½` for scale
//! `s`. When shrinking (`s < 1`) the kernel is stretched to `k(s·x)·s`,
//! which widens the support to `4/s` taps and low-pass filters the input
//! (antialiasing). Weights are renormalised to sum to one. Samples outside
//! the image are mirrored about the edge pixel without repeating it
//! (`…, 2, 1 | 0, 1, 2, … , n−2, n−1 | n−2, …`).
//!
//! For ×2 downsampling every interior output pixel uses the 8-tap table in
//! [`DOWN2_TAPS`].

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage};

/// Weights applied to input offsets −3..=4 around `2i` when shrinking by 2.
pub const DOWN2_TAPS: [f64; 8] = [
    -0.01171875,
    -0.03515625,
    0.11328125,
    0.43359375,
    0.43359375,
    0.11328125,
    -0.03515625,
    -0.01171875,
];

pub fn cubic(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Taps {
    /// Input index of the first weight (may be negative).
    pub start: isize,
    pub weights: Vec<f64>,
}

/// Per-output-sample weights for resizing an axis of length `input` to
/// `output` samples.
pub fn axis_taps(input: usize, output: usize, antialias: bool) -> Vec<Taps> {
    let scale = output as f64 / input as f64;
    let stretch = if antialias && scale < 1.0 { scale } else { 1.0 };
    let half_width = 2.0 / stretch;
    (0..output)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale - 0.5;
            let lo = (u - half_width).floor() as isize;
            let hi = (u + half_width).ceil() as isize;
            let mut weights: Vec<f64> = (lo..=hi).map(|j| cubic((u - j as f64) * stretch) * stretch).collect();
            let mut start = lo;
            // Trim zero weights at both ends.
            while weights.first() == Some(&0.0) {
                weights.remove(0);
                start += 1;
            }
            while weights.last() == Some(&0.0) {
                weights.pop();
            }
            let sum: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= sum;
            }
            Taps { start, weights }
        })
        .collect()
}

fn apply_taps(src: &[f64], taps: &Taps) -> f64 {
    let n = src.len();
    taps.weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * src[reflect_index(taps.start + k as isize, n)])
        .fold(0.0, |acc, v| acc + v)
}

/// Resizes to `rows × cols`, filtering rows first and then columns. The
/// result is not clamped.
pub fn resize(img: &GrayImage, rows: usize, cols: usize, antialias: bool) -> Result<GrayImage> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let (m, n) = img.dims();
    let col_taps = axis_taps(n, cols, antialias);
    let row_taps = axis_taps(m, rows, antialias);

    // Horizontal pass: m × cols
    let mut tmp = Vec::with_capacity(m * cols);
    for r in 0..m {
        let src = img.row(r);
        tmp.extend(col_taps.iter().map(|t| apply_taps(src, t)));
    }
    // Vertical pass, one column at a time.
    let mut out = vec![0.0; rows * cols];
    let mut column = vec![0.0; m];
    for c in 0..cols {
        for r in 0..m {
            column[r] = tmp[r * cols + c];
        }
        for (r, t) in row_taps.iter().enumerate() {
            out[r * cols + c] = apply_taps(&column, t);
        }
    }
    GrayImage::new(rows, cols, out)
}

/// Antialiased bicubic downsampling by an integer factor. This is the
/// degradation operator used to synthesise LR images from HR ones.
pub fn degrade(hr: &GrayImage, scale: usize) -> Result<GrayImage> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let (m, n) = hr.dims();
    if m % scale != 0 || n % scale != 0 {
        return Err(Error::invalid(format!(
            "{m}x{n} image is not divisible by scale {scale}; crop it first"
        )));
    }
    if scale == 1 {
        return Ok(hr.clone());
    }
    resize(hr, m / scale, n / scale, true)
}

/// Plain bicubic interpolation by an integer factor, clamped to `[0, 255]`.
pub fn bicubic_upscale(lr: &GrayImage, scale: usize) -> Result<GrayImage> {
    if scale == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    let (m, n) = lr.dims();
    Ok(resize(lr, m * scale, n * scale, false)?.clamped())
}

pub fn bicubic_upscale_color(lr: &ColorImage, scale: usize) -> Result<ColorImage> {
    ColorImage::new(
        bicubic_upscale(&lr.r, scale)?,
        bicubic_upscale(&lr.g, scale)?,
        bicubic_upscale(&lr.b, scale)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert_eq!(cubic(0.5), 0.5625);
        assert_eq!(cubic(1.5), -0.0625);
    }

    #[test]
    fn reflect_mirrors_without_repeating_edge() {
        let got: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn down2_taps_match_reference_table() {
        let taps = axis_taps(16, 8, true);
        for (i, t) in taps.iter().enumerate().skip(2).take(4) {
            assert_eq!(t.start, 2 * i as isize - 3);
            assert_eq!(t.weights.as_slice(), &DOWN2_TAPS);
        }
    }

    #[test]
    fn upscale_taps_for_factor_two() {
        // Output sample 4 sits at u = 1.75: taps at 0..=3 with distances
        // 1.75, 0.75, 0.25, 1.25.
        let taps = axis_taps(8, 16, false);
        let t = &taps[4];
        assert_eq!(t.start, 0);
        assert_eq!(t.weights, vec![-0.0234375, 0.2265625, 0.8671875, -0.0703125]);
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = GrayImage::filled(8, 6, 100.0).unwrap();
        let lr = degrade(&img, 2).unwrap();
        assert_eq!(lr.dims(), (4, 3));
        assert!(lr.pixels().iter().all(|&v| (v - 100.0).abs() < 1e-12));
        let up = bicubic_upscale(&lr, 2).unwrap();
        assert!(up.pixels().iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn scale_one_is_identity() {
        let img = GrayImage::from_fn(5, 7, |r, c| (r * 31 + c * 17) as f64 % 256.0).unwrap();
        assert_eq!(degrade(&img, 1).unwrap(), img);
    }

    #[test]
    fn non_divisible_is_rejected() {
        let img = GrayImage::filled(5, 4, 0.0).unwrap();
        assert!(degrade(&img, 2).is_err());
    }

    #[test]
    fn checkerboard_averages_to_mid_gray() {
        // Every symmetric tap pair straddles one 0 and one 255 pixel (also
        // after mirroring), so each output is 255 · Σ(half the taps) = 127.5.
        let img = GrayImage::from_fn(4, 4, |r, c| if (r + c) % 2 == 1 { 255.0 } else { 0.0 }).unwrap();
        let lr = degrade(&img, 2).unwrap();
        let half: f64 = DOWN2_TAPS[..4].iter().sum();
        assert_eq!(half, 0.5);
        for &v in lr.pixels() {
            assert!((v - 127.5).abs() < 1e-12, "{v}");
        }
    }
}
