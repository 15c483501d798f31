//! Dictionary training.
//!
//! * [`dict_learn`] alternates sparse coding (codes given the dictionary)
//!   with a least-squares dictionary update (dictionary given the codes)
//!   on `‖Y − DW‖_F² + λ‖W‖₁`, keeping atoms at unit norm.
//! * [`joint_train`] runs the same learner on LR and HR patches stacked
//!   into one space, then splits the dictionary.
//! * [`decoupled_train`] learns `D_l` on LR patches only and then solves
//!   `D_h = XWᵀ(WWᵀ + εI)⁻¹` against the fixed LR codes `W`, which makes
//!   `D_h` the exact minimiser of the HR reconstruction error.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coding::{Coder, SolverSettings, SparseCodes};
use crate::dictionary::{normalize_with_codes, Dictionary};
use crate::error::{Error, Result};
use crate::linalg::{code_products, solve_normal_equations};
use crate::par::Execution;

/// Tikhonov term added to `WWᵀ` in every dictionary solve.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum RidgeEpsilon {
    /// `ε = 10⁻⁶ · trace(WWᵀ) / K`.
    #[default]
    Auto,
    Fixed(f64),
}

impl RidgeEpsilon {
    pub const AUTO_FACTOR: f64 = 1e-6;

    pub fn resolve(&self, wwt: &DMatrix<f64>) -> f64 {
        match *self {
            RidgeEpsilon::Fixed(e) => e,
            RidgeEpsilon::Auto => {
                let k = wwt.nrows();
                if k == 0 {
                    0.0
                } else {
                    Self::AUTO_FACTOR * wwt.trace() / k as f64
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let RidgeEpsilon::Fixed(e) = *self {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::invalid("ridge epsilon must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of atoms `K`.
    pub dict_size: usize,
    pub lambda: f64,
    pub outer_iterations: usize,
    pub solver: SolverSettings,
    pub seed: u64,
    pub ridge: RidgeEpsilon,
    /// Weight the LR and HR blocks by `1/√d` in joint training.
    pub block_weighting: bool,
    /// After splitting a joint dictionary, rescale both halves so that the
    /// LR atoms have unit norm.
    pub renormalize_split: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dict_size: 1024,
            lambda: 0.15,
            outer_iterations: 40,
            solver: SolverSettings::default(),
            seed: 0,
            ridge: RidgeEpsilon::Auto,
            block_weighting: false,
            renormalize_split: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dict_size == 0 {
            return Err(Error::invalid("dictionary size must be positive"));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::invalid("training lambda must be positive"));
        }
        if self.outer_iterations == 0 {
            return Err(Error::invalid("outer_iterations must be at least 1"));
        }
        self.solver.validate()?;
        self.ridge.validate()
    }
}

/// `‖X − DW‖_F² + λ‖W‖₁`, accumulated over the nonzero code entries.
pub fn dictionary_objective(signals: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &DMatrix<f64>, lambda: f64) -> f64 {
    let d = signals.nrows();
    let mut resid = vec![0.0; d];
    let mut err = 0.0;
    for (x, w) in signals.column_iter().zip(codes.column_iter()) {
        resid.iter_mut().zip(x.iter()).for_each(|(r, v)| *r = *v);
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (r, a) in resid.iter_mut().zip(atoms.column(j).iter()) {
                    *r -= a * wj;
                }
            }
        }
        err += resid.iter().map(|r| r * r).sum::<f64>();
    }
    err + lambda * codes.iter().map(|v| v.abs()).sum::<f64>()
}

fn check_signals(signals: &DMatrix<f64>) -> Result<()> {
    if signals.ncols() == 0 || signals.nrows() == 0 {
        return Err(Error::invalid("no training signals"));
    }
    if signals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training signals have non-finite entries"));
    }
    if signals.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("training signals are all zero"));
    }
    Ok(())
}

/// Picks `k` distinct nonzero columns uniformly at random and normalises them.
pub fn init_dictionary(signals: &DMatrix<f64>, k: usize, seed: u64) -> Result<Dictionary> {
    let usable: Vec<usize> = signals
        .column_iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(i, _)| i)
        .collect();
    if k == 0 || usable.len() < k {
        return Err(Error::invalid(format!(
            "need {k} nonzero training signals to initialise the dictionary, found {}",
            usable.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, usable.len(), k);
    let cols: Vec<_> = picks.iter().map(|p| signals.column(usable[p]).into_owned()).collect();
    Dictionary::normalized(DMatrix::from_columns(&cols))
}

/// Result of one least-squares dictionary update.
#[derive(Clone, Debug)]
pub struct DictUpdate {
    /// Unit-norm atoms; the codes passed in were rescaled to match.
    pub dictionary: Dictionary,
    /// The least-squares solution before renormalisation (dead atoms
    /// already replaced).
    pub raw_atoms: DMatrix<f64>,
    /// Atoms whose code row was entirely zero and were replaced.
    pub replaced: Vec<usize>,
    pub ridge_epsilon: f64,
}

/// Minimises `‖X − DW‖_F²` (ridge-regularised) over `D` for fixed `W`.
///
/// Only atoms with a nonzero code row take part in the solve. Unused atoms
/// are replaced by the training signals with the largest residual under
/// the new dictionary, normalised. Finally every atom is scaled to unit
/// norm and its code row is scaled inversely, so `DW` is unchanged.
pub fn least_squares_dict_update(
    signals: &DMatrix<f64>,
    codes: &mut DMatrix<f64>,
    ridge: RidgeEpsilon,
) -> Result<DictUpdate> {
    if signals.ncols() != codes.ncols() {
        return Err(Error::invalid(format!(
            "{} signals but {} code columns",
            signals.ncols(),
            codes.ncols()
        )));
    }
    ridge.validate()?;
    let k = codes.nrows();
    let d = signals.nrows();
    let live: Vec<usize> = (0..k).filter(|&j| codes.row(j).iter().any(|&v| v != 0.0)).collect();
    let dead: Vec<usize> = (0..k).filter(|&j| codes.row(j).iter().all(|&v| v == 0.0)).collect();

    let live_codes = codes.select_rows(&live);
    let (wwt, xwt) = code_products(signals, &live_codes);
    let eps = ridge.resolve(&wwt);
    let mut atoms = DMatrix::zeros(d, k);
    if !live.is_empty() {
        let live_atoms = solve_normal_equations(wwt, &xwt, eps)?;
        for (c, &j) in live.iter().enumerate() {
            atoms.set_column(j, &live_atoms.column(c));
        }
    }

    if !dead.is_empty() {
        // Residual energy of each signal under the updated live atoms.
        let mut energy: Vec<(usize, f64)> = signals
            .column_iter()
            .zip(codes.column_iter())
            .enumerate()
            .map(|(i, (x, w))| {
                let mut r = x.into_owned();
                for &j in &live {
                    if w[j] != 0.0 {
                        r.axpy(-w[j], &atoms.column(j), 1.0);
                    }
                }
                (i, r.norm_squared())
            })
            .filter(|&(i, _)| signals.column(i).norm() > 0.0)
            .collect();
        // Largest residual first; ties broken by index for determinism.
        energy.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if energy.len() < dead.len() {
            return Err(Error::invalid("not enough nonzero signals to replace unused atoms"));
        }
        for (&j, &(i, _)) in dead.iter().zip(&energy) {
            let x = signals.column(i);
            atoms.set_column(j, &(x / x.norm()));
        }
    }

    let raw_atoms = atoms.clone();
    normalize_with_codes(&mut atoms, codes);
    Ok(DictUpdate {
        dictionary: Dictionary::new(atoms)?,
        raw_atoms,
        replaced: dead,
        ridge_epsilon: eps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HalfStep {
    Coding,
    Update,
}

/// Objective values around one half-step of the alternation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub step: HalfStep,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug)]
pub struct DictLearnOutput {
    pub dictionary: Dictionary,
    /// Codes of the training signals over the final dictionary.
    pub codes: SparseCodes,
    pub history: Vec<StepRecord>,
    /// Objective of the final dictionary and codes.
    pub objective: f64,
}

/// Alternating ℓ1 dictionary learning.
///
/// Each outer iteration codes all signals (warm-started from the previous
/// codes) and then applies [`least_squares_dict_update`]. A final coding
/// pass makes the returned codes correspond to the returned dictionary.
pub fn dict_learn(signals: &DMatrix<f64>, config: &TrainConfig) -> Result<DictLearnOutput> {
    config.validate()?;
    check_signals(signals)?;
    if config.dict_size > signals.ncols() {
        return Err(Error::invalid(format!(
            "dictionary size {} exceeds the {} training signals",
            config.dict_size,
            signals.ncols()
        )));
    }
    let lambda = config.lambda;
    let mut dictionary = init_dictionary(signals, config.dict_size, config.seed)?;
    let mut codes = DMatrix::zeros(config.dict_size, signals.ncols());
    let mut history = Vec::with_capacity(2 * config.outer_iterations);

    for it in 0..config.outer_iterations {
        let before = dictionary_objective(signals, dictionary.atoms(), &codes, lambda);
        let coder = Coder::new(&dictionary, lambda, config.solver)?;
        codes = coder.code_columns(signals, Some(&codes), Execution::Parallel)?.coefficients;
        let coded = dictionary_objective(signals, dictionary.atoms(), &codes, lambda);
        history.push(StepRecord {
            iteration: it,
            step: HalfStep::Coding,
            before,
            after: coded,
        });

        // Measured on the raw solve: renormalisation changes ‖W‖₁.
        let pre_scale = codes.clone();
        let update = least_squares_dict_update(signals, &mut codes, config.ridge)?;
        let updated = dictionary_objective(signals, &update.raw_atoms, &pre_scale, lambda);
        history.push(StepRecord {
            iteration: it,
            step: HalfStep::Update,
            before: coded,
            after: updated,
        });
        dictionary = update.dictionary;
    }

    let coder = Coder::new(&dictionary, lambda, config.solver)?;
    let final_codes = coder.code_columns(signals, Some(&codes), Execution::Parallel)?;
    let objective = dictionary_objective(signals, dictionary.atoms(), &final_codes.coefficients, lambda);
    Ok(DictLearnOutput {
        dictionary,
        codes: final_codes,
        history,
        objective,
    })
}

fn check_pair_counts(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<()> {
    if y.ncols() != x.ncols() {
        return Err(Error::invalid(format!(
            "{} LR patches but {} HR patches",
            y.ncols(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Stacked LR-over-HR training space.
#[derive(Clone, Debug)]
pub struct ConcatenatedSpace {
    pub signals: DMatrix<f64>,
    pub lr_rows: usize,
    pub hr_rows: usize,
    /// Multipliers applied to the LR and HR blocks.
    pub weights: (f64, f64),
}

impl ConcatenatedSpace {
    pub fn stack(y: &DMatrix<f64>, x: &DMatrix<f64>, block_weighting: bool) -> Result<Self> {
        check_pair_counts(y, x)?;
        let (dl, dh, n) = (y.nrows(), x.nrows(), y.ncols());
        let weights = if block_weighting {
            (1.0 / (dl as f64).sqrt(), 1.0 / (dh as f64).sqrt())
        } else {
            (1.0, 1.0)
        };
        let mut z = DMatrix::zeros(dl + dh, n);
        z.rows_mut(0, dl).copy_from(&(y * weights.0));
        z.rows_mut(dl, dh).copy_from(&(x * weights.1));
        Ok(ConcatenatedSpace {
            signals: z,
            lr_rows: dl,
            hr_rows: dh,
            weights,
        })
    }

    /// Splits a stacked dictionary into its LR and HR blocks, undoing the
    /// block weights.
    pub fn split(&self, stacked: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let lr = stacked.rows(0, self.lr_rows) / self.weights.0;
        let hr = stacked.rows(self.lr_rows, self.hr_rows) / self.weights.1;
        (lr, hr)
    }
}

#[derive(Clone, Debug)]
pub struct JointOutput {
    pub d_l: Dictionary,
    pub d_h: Dictionary,
    /// Shared codes, rescaled to match `d_l` and `d_h`.
    pub codes: DMatrix<f64>,
    /// The concatenated-space dictionary before splitting.
    pub stacked: Dictionary,
    pub learn: DictLearnOutput,
}

/// Joint training in the concatenated LR/HR space with one shared code
/// matrix.
pub fn joint_train(y: &DMatrix<f64>, x: &DMatrix<f64>, config: &TrainConfig) -> Result<JointOutput> {
    let space = ConcatenatedSpace::stack(y, x, config.block_weighting)?;
    let learn = dict_learn(&space.signals, config)?;
    let (mut d_l, mut d_h) = space.split(learn.dictionary.atoms());
    let mut codes = learn.codes.coefficients.clone();
    if config.renormalize_split {
        // Same factor on both halves keeps the LR→HR mapping intact.
        let scales = normalize_with_codes(&mut d_l, &mut codes);
        for (j, s) in scales.into_iter().enumerate() {
            d_h.column_mut(j).scale_mut(s);
        }
    }
    Ok(JointOutput {
        d_l: Dictionary::new(d_l)?,
        d_h: Dictionary::new(d_h)?,
        codes,
        stacked: learn.dictionary.clone(),
        learn,
    })
}

#[derive(Clone, Debug)]
pub struct DecoupledOutput {
    pub d_l: Dictionary,
    /// Closed-form HR dictionary; atoms are not normalised.
    pub d_h: Dictionary,
    /// LR codes the HR dictionary was solved against.
    pub codes: SparseCodes,
    pub ridge_epsilon: f64,
    pub learn_objective: f64,
}

/// Learns `D_l` on the LR patches, then `D_h = XWᵀ(WWᵀ + εI)⁻¹` for the
/// final LR codes `W`. Neither `W` nor `D_h` is modified afterwards.
pub fn decoupled_train(y: &DMatrix<f64>, x: &DMatrix<f64>, config: &TrainConfig) -> Result<DecoupledOutput> {
    check_pair_counts(y, x)?;
    let learn = dict_learn(y, config)?;
    let (wwt, xwt) = code_products(x, &learn.codes.coefficients);
    let eps = config.ridge.resolve(&wwt);
    let d_h = solve_normal_equations(wwt, &xwt, eps)?;
    Ok(DecoupledOutput {
        d_l: learn.dictionary,
        d_h: Dictionary::new(d_h)?,
        codes: learn.codes,
        ridge_epsilon: eps,
        learn_objective: learn.objective,
    })
}
