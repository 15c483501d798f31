//! Conversion between images and patch matrices.
//!
//! Patches are vectorised row-major and stored as columns. Extraction
//! optionally subtracts each patch's mean and keeps it alongside the
//! column so that it can be added back after reconstruction.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::resample::degrade;

/// LR/HR patch layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    /// Side of a square LR patch in pixels.
    pub lr_patch: usize,
    /// Integer upscaling factor.
    pub scale: usize,
    /// Step between neighbouring LR patches (`lr_patch − overlap`).
    pub lr_stride: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        PatchGeometry {
            lr_patch: 5,
            scale: 2,
            lr_stride: 1,
        }
    }
}

impl PatchGeometry {
    pub fn new(lr_patch: usize, scale: usize, lr_stride: usize) -> Result<Self> {
        let g = PatchGeometry {
            lr_patch,
            scale,
            lr_stride,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_patch == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if self.scale == 0 {
            return Err(Error::invalid("scale must be positive"));
        }
        if self.lr_stride == 0 || self.lr_stride > self.lr_patch {
            return Err(Error::invalid(format!(
                "stride must lie in 1..={}, got {}",
                self.lr_patch, self.lr_stride
            )));
        }
        Ok(())
    }

    pub fn hr_patch(&self) -> usize {
        self.lr_patch * self.scale
    }

    pub fn lr_dim(&self) -> usize {
        self.lr_patch * self.lr_patch
    }

    pub fn hr_dim(&self) -> usize {
        self.hr_patch() * self.hr_patch()
    }
}

/// Column-stacked vectorised patches with their subtracted means and
/// top-left origins.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    pub columns: DMatrix<f64>,
    pub means: Vec<f64>,
    pub origins: Vec<(usize, usize)>,
    /// Side length of the square patches.
    pub side: usize,
}

impl PatchMatrix {
    pub fn empty(side: usize) -> Self {
        PatchMatrix {
            columns: DMatrix::zeros(side * side, 0),
            means: Vec::new(),
            origins: Vec::new(),
            side,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.columns.as_slice()[i * d..(i + 1) * d]
    }
}

/// Top-left positions `0, stride, 2·stride, …` along an axis of `len`
/// pixels, plus `len − patch` if the regular grid misses the far edge.
pub fn patch_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    debug_assert!(len >= patch && stride > 0);
    let last = len - patch;
    let mut pos: Vec<usize> = (0..=last).step_by(stride).collect();
    if *pos.last().expect("at least position 0") != last {
        pos.push(last);
    }
    pos
}

fn read_patch(img: &GrayImage, top: usize, left: usize, side: usize, out: &mut [f64]) {
    for r in 0..side {
        let row = &img.row(top + r)[left..left + side];
        out[r * side..(r + 1) * side].copy_from_slice(row);
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Extracts all overlapping `side × side` patches at the given stride,
/// covering the image borders by clamping the final positions.
pub fn extract_patches(img: &GrayImage, side: usize, stride: usize, subtract_mean: bool) -> Result<PatchMatrix> {
    if side == 0 || stride == 0 {
        return Err(Error::invalid("patch side and stride must be positive"));
    }
    let (m, n) = img.dims();
    if m < side || n < side {
        return Err(Error::invalid(format!(
            "{m}x{n} image is smaller than the {side}x{side} patch"
        )));
    }
    let rows = patch_positions(m, side, stride);
    let cols = patch_positions(n, side, stride);
    let d = side * side;
    let count = rows.len() * cols.len();
    let mut data = vec![0.0; d * count];
    let mut means = Vec::with_capacity(count);
    let mut origins = Vec::with_capacity(count);
    for &r in &rows {
        for &c in &cols {
            let i = origins.len();
            let col = &mut data[i * d..(i + 1) * d];
            read_patch(img, r, c, side, col);
            let mu = if subtract_mean { mean(col) } else { 0.0 };
            if subtract_mean {
                for v in col.iter_mut() {
                    *v -= mu;
                }
            }
            means.push(mu);
            origins.push((r, c));
        }
    }
    Ok(PatchMatrix {
        columns: DMatrix::from_vec(d, count, data),
        means,
        origins,
        side,
    })
}

/// Mean-subtracted LR patches for inference.
pub fn extract_lr_patches(lr: &GrayImage, geom: &PatchGeometry) -> Result<PatchMatrix> {
    geom.validate()?;
    extract_patches(lr, geom.lr_patch, geom.lr_stride, true)
}

/// Column-aligned LR (`Y`) and HR (`X`) training patches. Both columns of a
/// pair have the LR patch mean removed; `means` holds that mean in both.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPairs {
    pub lr: PatchMatrix,
    pub hr: PatchMatrix,
    /// Index into the corpus of the image each pair came from.
    pub sources: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig {
    pub count: usize,
    /// Pairs whose LR patch variance falls below this are rejected.
    pub variance_floor: f64,
    pub seed: u64,
}

/// Draws `count` random LR/HR patch pairs from a corpus of HR images.
///
/// Each image is cropped to a multiple of the scale and degraded once. A
/// sample picks an image uniformly, then an LR position uniformly; the HR
/// patch starts at `scale ×` that position. Flat pairs are rejected and
/// redrawn; after `100 × count` draws the corpus is declared too flat.
pub fn sample_training_pairs(
    corpus: &[GrayImage],
    geom: &PatchGeometry,
    sampling: &SamplingConfig,
) -> Result<TrainingPairs> {
    geom.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if sampling.variance_floor.is_nan() || sampling.variance_floor < 0.0 {
        return Err(Error::invalid("variance floor must be nonnegative"));
    }
    let (p, s, hp) = (geom.lr_patch, geom.scale, geom.hr_patch());
    let mut pairs_src: Vec<(GrayImage, GrayImage)> = Vec::with_capacity(corpus.len());
    for img in corpus {
        if img.rows() < hp || img.cols() < hp {
            continue;
        }
        let hr = img.crop_to_multiple(s)?;
        let lr = degrade(&hr, s)?;
        pairs_src.push((hr, lr));
    }
    let usable: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, img)| img.rows() >= hp && img.cols() >= hp)
        .map(|(i, _)| i)
        .collect();
    if usable.is_empty() && sampling.count > 0 {
        return Err(Error::invalid(format!(
            "no corpus image is at least {hp}x{hp} pixels"
        )));
    }

    let count = sampling.count;
    let (dl, dh) = (geom.lr_dim(), geom.hr_dim());
    let mut lr_data = Vec::with_capacity(dl * count);
    let mut hr_data = Vec::with_capacity(dh * count);
    let mut means = Vec::with_capacity(count);
    let mut lr_origins = Vec::with_capacity(count);
    let mut hr_origins = Vec::with_capacity(count);
    let mut sources = Vec::with_capacity(count);

    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let max_attempts = count.saturating_mul(100);
    let mut attempts = 0;
    let mut lr_buf = vec![0.0; dl];
    let mut hr_buf = vec![0.0; dh];
    while means.len() < count {
        if attempts >= max_attempts {
            return Err(Error::CorpusTooFlat {
                requested: count,
                collected: means.len(),
                attempts,
            });
        }
        attempts += 1;
        let k = rng.random_range(0..pairs_src.len());
        let (hr, lr) = &pairs_src[k];
        let r = rng.random_range(0..=lr.rows() - p);
        let c = rng.random_range(0..=lr.cols() - p);
        read_patch(lr, r, c, p, &mut lr_buf);
        let mu = mean(&lr_buf);
        let var = lr_buf.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / dl as f64;
        if var < sampling.variance_floor {
            continue;
        }
        read_patch(hr, s * r, s * c, hp, &mut hr_buf);
        lr_data.extend(lr_buf.iter().map(|v| v - mu));
        hr_data.extend(hr_buf.iter().map(|v| v - mu));
        means.push(mu);
        lr_origins.push((r, c));
        hr_origins.push((s * r, s * c));
        sources.push(usable[k]);
    }

    Ok(TrainingPairs {
        lr: PatchMatrix {
            columns: DMatrix::from_vec(dl, count, lr_data),
            means: means.clone(),
            origins: lr_origins,
            side: p,
        },
        hr: PatchMatrix {
            columns: DMatrix::from_vec(dh, count, hr_data),
            means,
            origins: hr_origins,
            side: hp,
        },
        sources,
    })
}

/// Sums and coverage counts of overlapping patches, before averaging.
fn accumulate(patches: &PatchMatrix, dims: (usize, usize)) -> Result<(Vec<f64>, Vec<u32>)> {
    let (m, n) = dims;
    let side = patches.side;
    if patches.dim() != side * side {
        return Err(Error::invalid("patch matrix rows do not match the patch side"));
    }
    if patches.origins.len() != patches.len() {
        return Err(Error::invalid("patch matrix has mismatched origins"));
    }
    let mut sum = vec![0.0; m * n];
    let mut count = vec![0u32; m * n];
    for (i, &(top, left)) in patches.origins.iter().enumerate() {
        if top + side > m || left + side > n {
            return Err(Error::invalid(format!(
                "patch at ({top}, {left}) does not fit in {m}x{n}"
            )));
        }
        let col = patches.column(i);
        for r in 0..side {
            let base = (top + r) * n + left;
            for c in 0..side {
                sum[base + c] += col[r * side + c];
                count[base + c] += 1;
            }
        }
    }
    Ok((sum, count))
}

/// Per-pixel number of patches covering each output pixel.
pub fn coverage_counts(patches: &PatchMatrix, dims: (usize, usize)) -> Result<Vec<u32>> {
    Ok(accumulate(patches, dims)?.1)
}

/// Averages overlapping patches into an image without clamping.
pub fn assemble_unclamped(patches: &PatchMatrix, dims: (usize, usize)) -> Result<GrayImage> {
    let (sum, count) = accumulate(patches, dims)?;
    let (m, n) = dims;
    let mut out = Vec::with_capacity(m * n);
    for (i, (s, &c)) in sum.iter().zip(&count).enumerate() {
        if c == 0 {
            return Err(Error::Coverage { row: i / n, col: i % n });
        }
        out.push(s / c as f64);
    }
    GrayImage::new(m, n, out)
}

/// Averages overlapping HR patch estimates (means already re-added, origins
/// in HR coordinates) and clamps the result to `[0, 255]`.
pub fn assemble_hr_image(patches: &PatchMatrix, dims: (usize, usize)) -> Result<GrayImage> {
    Ok(assemble_unclamped(patches, dims)?.clamped())
}
