//! Training a dictionary pair from a corpus and super-resolving images
//! with it.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::coding::{batch_code, dot, SolverSettings, SparseCodes};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage, YCbCr};
use crate::learning::{decoupled_train, joint_train, TrainConfig};
use crate::par::{map_indexed, Execution};
use crate::patches::{assemble_hr_image, extract_lr_patches, sample_training_pairs, PatchGeometry, PatchMatrix, SamplingConfig};
use crate::resample::bicubic_upscale;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Joint,
    Decoupled,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Joint => "joint",
            Method::Decoupled => "decoupled",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Method::Joint),
            "decoupled" => Ok(Method::Decoupled),
            other => Err(Error::invalid(format!(
                "unknown training method '{other}' (expected joint or decoupled)"
            ))),
        }
    }
}

/// Everything needed to reproduce a trained pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRequest {
    pub config: TrainConfig,
    pub geometry: PatchGeometry,
    pub method: Method,
    /// Number of training pairs to sample.
    pub patches: usize,
    pub variance_floor: f64,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest {
            config: TrainConfig::default(),
            geometry: PatchGeometry::default(),
            method: Method::Decoupled,
            patches: 80_000,
            variance_floor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub request: TrainRequest,
    /// SHA-256 over the dimensions and pixels of the training corpus.
    pub corpus_digest: String,
}

/// Trained LR/HR dictionaries plus what produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryPair {
    pub d_l: Dictionary,
    pub d_h: Dictionary,
    pub geometry: PatchGeometry,
    pub lambda: f64,
    pub method: Method,
    pub provenance: Provenance,
}

impl DictionaryPair {
    pub fn atoms(&self) -> usize {
        self.d_l.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.d_l.len() != self.d_h.len() {
            return Err(Error::invalid(format!(
                "D_l has {} atoms but D_h has {}",
                self.d_l.len(),
                self.d_h.len()
            )));
        }
        if self.d_l.dim() != self.geometry.lr_dim() || self.d_h.dim() != self.geometry.hr_dim() {
            return Err(Error::invalid(format!(
                "dictionary rows ({}, {}) do not match {}x{} patches at scale {}",
                self.d_l.dim(),
                self.d_h.dim(),
                self.geometry.lr_patch,
                self.geometry.lr_patch,
                self.geometry.scale
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTiming {
    pub stages: Vec<(&'static str, f64)>,
}

impl StageTiming {
    fn record<T>(&mut self, name: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((name, t.elapsed().as_secs_f64()));
        out
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|(_, s)| s).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Final dictionary-learning objective (stacked space for joint).
    pub objective: f64,
    pub ridge_epsilon: Option<f64>,
    pub timing: StageTiming,
}

pub fn corpus_digest(corpus: &[GrayImage]) -> String {
    let mut h = Sha256::new();
    for img in corpus {
        h.update((img.rows() as u64).to_le_bytes());
        h.update((img.cols() as u64).to_le_bytes());
        for v in img.pixels() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples training pairs from `corpus` and trains with the requested method.
pub fn train_pair(corpus: &[GrayImage], request: &TrainRequest) -> Result<(DictionaryPair, TrainReport)> {
    request.config.validate()?;
    request.geometry.validate()?;
    if request.config.dict_size > request.patches {
        return Err(Error::invalid(format!(
            "dictionary size {} exceeds the {} training patches",
            request.config.dict_size, request.patches
        )));
    }
    let mut timing = StageTiming::default();
    let sampling = SamplingConfig {
        count: request.patches,
        variance_floor: request.variance_floor,
        seed: request.config.seed,
    };
    let pairs = timing.record("sample", || sample_training_pairs(corpus, &request.geometry, &sampling))?;
    let digest = corpus_digest(corpus);
    let (y, x) = (&pairs.lr.columns, &pairs.hr.columns);
    let (d_l, d_h, objective, ridge) = match request.method {
        Method::Decoupled => {
            let out = timing.record("train", || decoupled_train(y, x, &request.config))?;
            (out.d_l, out.d_h, out.learn_objective, Some(out.ridge_epsilon))
        }
        Method::Joint => {
            let out = timing.record("train", || joint_train(y, x, &request.config))?;
            (out.d_l, out.d_h, out.learn.objective, None)
        }
    };
    let pair = DictionaryPair {
        d_l,
        d_h,
        geometry: request.geometry,
        lambda: request.config.lambda,
        method: request.method,
        provenance: Provenance {
            request: request.clone(),
            corpus_digest: digest,
        },
    };
    Ok((
        pair,
        TrainReport {
            objective,
            ridge_epsilon: ridge,
            timing,
        },
    ))
}

/// Per-patch coding outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchReport {
    /// LR top-left corner.
    pub origin: (usize, usize),
    pub nnz: usize,
    /// `‖ŷ − D_l·w‖₂` for the mean-subtracted LR patch `ŷ`.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SrResult {
    pub image: GrayImage,
    pub patches: Vec<PatchReport>,
    pub timing: StageTiming,
}

impl SrResult {
    pub fn mean_nnz(&self) -> f64 {
        if self.patches.is_empty() {
            return 0.0;
        }
        self.patches.iter().map(|p| p.nnz as f64).sum::<f64>() / self.patches.len() as f64
    }

    pub fn max_nnz(&self) -> usize {
        self.patches.iter().map(|p| p.nnz).max().unwrap_or(0)
    }

    /// Fraction of patches whose solve hit the iteration cap.
    pub fn nonconverged_fraction(&self) -> f64 {
        if self.patches.is_empty() {
            return 0.0;
        }
        self.patches.iter().filter(|p| !p.converged).count() as f64 / self.patches.len() as f64
    }
}

/// `D_h·w + mean`, accumulated atom by atom in index order.
pub fn reconstruct_patch(d_h: &Dictionary, w: &[f64], mean: f64) -> Vec<f64> {
    let mut out = vec![0.0; d_h.dim()];
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            for (o, a) in out.iter_mut().zip(d_h.atom(j)) {
                *o += a * wj;
            }
        }
    }
    for o in out.iter_mut() {
        *o += mean;
    }
    out
}

fn coding_residual(d_l: &Dictionary, y: &[f64], w: &[f64]) -> f64 {
    let mut r = y.to_vec();
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            for (ri, a) in r.iter_mut().zip(d_l.atom(j)) {
                *ri -= a * wj;
            }
        }
    }
    dot(&r, &r).sqrt()
}

/// Upscales `lr` by the pair's scale factor:
///
/// 1. split into overlapping LR patches and remove each patch mean;
/// 2. sparse-code every patch over `D_l` with the pair's λ;
/// 3. predict each HR patch as `D_h·w` plus the LR patch mean;
/// 4. average the overlapping HR patches and clamp to `[0, 255]`.
///
/// Only `D_l`, `D_h`, λ and the geometry are consulted; the training
/// method does not affect inference.
pub fn super_resolve(lr: &GrayImage, pair: &DictionaryPair, solver: &SolverSettings) -> Result<SrResult> {
    pair.validate()?;
    let geom = &pair.geometry;
    let mut timing = StageTiming::default();
    let lr_patches = timing.record("extract", || extract_lr_patches(lr, geom))?;
    let codes: SparseCodes = timing.record("code", || batch_code(&lr_patches.columns, &pair.d_l, pair.lambda, solver))?;

    let n = lr_patches.len();
    let hp = geom.hr_patch();
    let hr_cols = timing.record("reconstruct", || {
        map_indexed(n, Execution::Parallel, |i| reconstruct_patch(&pair.d_h, codes.column(i), lr_patches.means[i]))
    });
    let mut data = Vec::with_capacity(n * hp * hp);
    for c in hr_cols {
        data.extend(c);
    }
    let hr_patches = PatchMatrix {
        columns: DMatrix::from_vec(hp * hp, n, data),
        means: lr_patches.means.clone(),
        origins: lr_patches
            .origins
            .iter()
            .map(|&(r, c)| (r * geom.scale, c * geom.scale))
            .collect(),
        side: hp,
    };
    let dims = (lr.rows() * geom.scale, lr.cols() * geom.scale);
    let image = timing.record("assemble", || assemble_hr_image(&hr_patches, dims))?;

    let patches = (0..n)
        .map(|i| PatchReport {
            origin: lr_patches.origins[i],
            nnz: codes.nnz[i],
            residual: coding_residual(&pair.d_l, lr_patches.column(i), codes.column(i)),
            converged: codes.converged[i],
        })
        .collect();
    Ok(SrResult {
        image,
        patches,
        timing,
    })
}

#[derive(Clone, Debug)]
pub struct ColorSrResult {
    pub image: ColorImage,
    pub luma: SrResult,
}

/// Super-resolves the luma channel and bicubically upscales the chroma
/// channels (full-range BT.601 YCbCr).
pub fn super_resolve_color(lr: &ColorImage, pair: &DictionaryPair, solver: &SolverSettings) -> Result<ColorSrResult> {
    let ycc = lr.to_ycbcr();
    let luma = super_resolve(&ycc.y, pair, solver)?;
    let s = pair.geometry.scale;
    let up = YCbCr {
        y: luma.image.clone(),
        cb: bicubic_upscale(&ycc.cb, s)?,
        cr: bicubic_upscale(&ycc.cr, s)?,
    };
    Ok(ColorSrResult {
        image: up.to_rgb()?.clamped(),
        luma,
    })
}
