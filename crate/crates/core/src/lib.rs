//! Example-based single-image super-resolution via sparse representation.
//!
//! The crate trains a pair of coupled dictionaries `(D_l, D_h)` from LR/HR
//! patch pairs and uses them to upscale images: every overlapping LR patch
//! is sparse-coded over `D_l`, the same code is applied to `D_h` to predict
//! the HR patch, and the predictions are averaged back into an image.
//!
//! Two trainers are provided:
//!
//! * [`learning::joint_train`]: dictionary learning in the stacked LR/HR
//!   space with one shared code matrix (the classic coupled baseline).
//! * [`learning::decoupled_train`]: learn `D_l` on LR patches alone, then
//!   solve `D_h` in closed form so that the LR codes reconstruct the HR
//!   patches with minimum squared error.
//!
//! Batch coding is data-parallel over patches when the `parallel` feature
//! (on by default) is enabled; results are bit-identical either way.

pub mod coding;
pub mod dictfile;
pub mod dictionary;
pub mod engine;
mod error;
pub mod image;
pub mod imageio;
pub mod learning;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod patches;
pub mod resample;

pub use crate::coding::{
    batch_code, kkt_residual, lasso_objective, lasso_solve, soft_threshold, LassoSolution,
    SolverSettings, SparseCodeProblem, SparseCodes,
};
pub use crate::dictionary::Dictionary;
pub use crate::engine::{
    super_resolve, super_resolve_color, train_pair, DictionaryPair, Method, SrResult,
};
pub use crate::error::{Error, Result};
pub use crate::image::{ColorImage, GrayImage};
pub use crate::learning::{RidgeEpsilon, TrainConfig};
pub use crate::metrics::{mse, psnr, ssim, MetricReport};
pub use crate::patches::{PatchGeometry, PatchMatrix};
