//! ℓ1-regularised least squares (LASSO) sparse coding.
//!
//! Every module shares one objective convention,
//!
//! ```text
//! f(w) = ‖x − D·w‖₂² + λ·‖w‖₁
//! ```
//!
//! with no ½ factor and no normalisation by the signal dimension.
//!
//! The solver is an active-set method over a precomputed Gram matrix. Each
//! iteration either activates the inactive atom whose optimality condition
//! is most violated, or moves towards the exact minimiser of `f` on the
//! current support with the current signs, stopping at the best point of
//! that segment. Every iteration therefore lowers the objective, and the
//! solver stops with an optimality certificate: no inactive atom violates
//! `|2·d_jᵀ(Dw − x)| ≤ λ` by more than `tolerance·λ`. When the restricted
//! Gram matrix is too ill-conditioned to factor, the iteration falls back to
//! a cyclic pass of exact coordinate minimisations (soft thresholds) over
//! the support.

use nalgebra::DMatrix;

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// A support atom whose squared Cholesky pivot is below this fraction of
/// its diagonal Gram entry counts as dependent on the atoms before it.
const SUPPORT_PIVOT_FLOOR: f64 = 1e-9;

/// Relative size below which the linear term along a null direction is
/// treated as zero.
const NULL_FLOOR: f64 = 1e-9;

/// Proximal operator of `t·|·|`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Inactive atoms may violate their optimality condition by at most
    /// `tolerance·λ`; the coordinate-descent fallback also stops once a
    /// pass lowers the objective by less than this fraction of its value.
    pub tolerance: f64,
    /// Final coefficients with smaller magnitude are snapped to exactly zero.
    pub zero_threshold: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 1000,
            tolerance: 1e-6,
            zero_threshold: 1e-10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !self.zero_threshold.is_finite() || self.zero_threshold < 0.0 {
            return Err(Error::invalid("zero_threshold must be nonnegative"));
        }
        Ok(())
    }
}

/// One LASSO instance: `min_w ‖signal − D·w‖² + λ‖w‖₁`.
#[derive(Clone, Copy, Debug)]
pub struct SparseCodeProblem<'a> {
    pub dictionary: &'a Dictionary,
    pub signal: &'a [f64],
    pub lambda: f64,
}

impl<'a> SparseCodeProblem<'a> {
    pub fn new(dictionary: &'a Dictionary, signal: &'a [f64], lambda: f64) -> Result<Self> {
        let p = SparseCodeProblem {
            dictionary,
            signal,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.signal.len() != self.dictionary.dim() {
            return Err(Error::invalid(format!(
                "signal length {} does not match dictionary dimension {}",
                self.signal.len(),
                self.dictionary.dim()
            )));
        }
        if self.signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal has non-finite entries"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    /// Number of solver iterations performed.
    pub iterations: usize,
    /// `false` when `max_iterations` was reached first; the coefficients are
    /// then the best iterate found.
    pub converged: bool,
    pub objective: f64,
}

impl LassoSolution {
    pub fn nnz(&self) -> usize {
        self.coefficients.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Code matrix `W` (K × N), one column per coded signal.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCodes {
    pub coefficients: DMatrix<f64>,
    pub nnz: Vec<usize>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl SparseCodes {
    pub fn empty(atoms: usize) -> Self {
        SparseCodes {
            coefficients: DMatrix::zeros(atoms, 0),
            nnz: Vec::new(),
            converged: Vec::new(),
            iterations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn atoms(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let k = self.atoms();
        &self.coefficients.as_slice()[i * k..(i + 1) * k]
    }

    pub fn nonconverged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    pub fn mean_nnz(&self) -> f64 {
        if self.nnz.is_empty() {
            0.0
        } else {
            self.nnz.iter().sum::<usize>() as f64 / self.nnz.len() as f64
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v.abs()).sum()
    }

    fn from_solutions(atoms: usize, sols: Vec<LassoSolution>) -> Self {
        let n = sols.len();
        let mut coefficients = DMatrix::zeros(atoms, n);
        let mut nnz = Vec::with_capacity(n);
        let mut converged = Vec::with_capacity(n);
        let mut iterations = Vec::with_capacity(n);
        for (i, s) in sols.into_iter().enumerate() {
            nnz.push(s.nnz());
            converged.push(s.converged);
            iterations.push(s.iterations);
            coefficients.column_mut(i).copy_from_slice(&s.coefficients);
        }
        SparseCodes {
            coefficients,
            nnz,
            converged,
            iterations,
        }
    }
}

/// Dot product with a fixed summation order (four interleaved partial
/// sums). All inner products in the coder go through this so that single
/// and batched solves see the same rounding.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Shared state for coding many signals over one dictionary: the Gram
/// matrix `DᵀD` is computed once and read concurrently by all solves.
pub struct Coder<'a> {
    dictionary: &'a Dictionary,
    gram: Vec<f64>,
    lambda: f64,
    settings: SolverSettings,
}

impl<'a> Coder<'a> {
    pub fn new(dictionary: &'a Dictionary, lambda: f64, settings: SolverSettings) -> Result<Self> {
        check_lambda(lambda)?;
        settings.validate()?;
        let k = dictionary.len();
        let mut gram = vec![0.0; k * k];
        for j in 0..k {
            for i in 0..=j {
                let g = dot(dictionary.atom(i), dictionary.atom(j));
                gram[j * k + i] = g;
                gram[i * k + j] = g;
            }
        }
        Ok(Coder {
            dictionary,
            gram,
            lambda,
            settings,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn check_signal(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dictionary.dim() {
            return Err(Error::invalid(format!(
                "signal length {} does not match dictionary dimension {}",
                x.len(),
                self.dictionary.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signal has non-finite entries"));
        }
        Ok(())
    }

    /// Solves from a zero start.
    pub fn solve(&self, x: &[f64]) -> Result<LassoSolution> {
        self.check_signal(x)?;
        Ok(self.run(x, None, None))
    }

    /// Solves starting from `warm`; the result is never worse than `warm`.
    pub fn solve_from(&self, x: &[f64], warm: &[f64]) -> Result<LassoSolution> {
        self.check_signal(x)?;
        if warm.len() != self.dictionary.len() {
            return Err(Error::invalid("warm start has the wrong length"));
        }
        Ok(self.run(x, Some(warm), None))
    }

    /// Like [`Coder::solve`] but also returns the objective after every
    /// iteration, preceded by the objective at the starting point.
    pub fn solve_traced(&self, x: &[f64]) -> Result<(LassoSolution, Vec<f64>)> {
        self.check_signal(x)?;
        let mut trace = Vec::new();
        let sol = self.run(x, None, Some(&mut trace));
        Ok((sol, trace))
    }

    /// Codes every column of `signals` (d × N).
    pub fn code_columns(
        &self,
        signals: &DMatrix<f64>,
        warm: Option<&DMatrix<f64>>,
        exec: Execution,
    ) -> Result<SparseCodes> {
        let d = self.dictionary.dim();
        let k = self.dictionary.len();
        if signals.nrows() != d && signals.ncols() > 0 {
            return Err(Error::invalid(format!(
                "signals have {} rows but the dictionary has dimension {}",
                signals.nrows(),
                d
            )));
        }
        if signals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("signals have non-finite entries"));
        }
        if let Some(w) = warm {
            if w.nrows() != k || w.ncols() != signals.ncols() {
                return Err(Error::invalid("warm-start codes have the wrong shape"));
            }
        }
        let n = signals.ncols();
        let xs = signals.as_slice();
        let ws = warm.map(|w| w.as_slice());
        let sols = map_indexed(n, exec, |i| {
            let x = &xs[i * d..(i + 1) * d];
            let w0 = ws.map(|w| &w[i * k..(i + 1) * k]);
            self.run(x, w0, None)
        });
        Ok(SparseCodes::from_solutions(k, sols))
    }

    /// `‖x − Dw‖² + λ‖w‖₁`, evaluated through an explicit residual.
    fn objective(&self, x: &[f64], w: &[f64], resid: &mut [f64]) -> f64 {
        resid.copy_from_slice(x);
        let mut l1 = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                l1 += wj.abs();
                for (r, a) in resid.iter_mut().zip(self.dictionary.atom(j)) {
                    *r -= a * wj;
                }
            }
        }
        dot(resid, resid) + self.lambda * l1
    }

    fn run(&self, x: &[f64], warm: Option<&[f64]>, mut trace: Option<&mut Vec<f64>>) -> LassoSolution {
        let k = self.dictionary.len();
        let lambda = self.lambda;
        let max_it = self.settings.max_iterations;

        let corr: Vec<f64> = (0..k).map(|j| dot(self.dictionary.atom(j), x)).collect();
        let mut w = match warm {
            Some(w0) => w0.to_vec(),
            None => vec![0.0; k],
        };
        let mut resid = vec![0.0; x.len()];
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(x, &w, &mut resid));
        }
        let scale = corr.iter().fold(0.0f64, |m, c| m.max(2.0 * c.abs()));
        let slack = self.settings.tolerance * lambda + 1e-12 * scale;

        let mut support = Support::of(&w);
        let mut factor = Factor::default();
        let mut q = vec![0.0; k];
        let mut optimal_on_support = support.is_empty();
        let mut iterations = 0;
        let mut converged = false;

        while iterations < max_it {
            if optimal_on_support {
                // q = G·w, so the smooth gradient is 2(q − Dᵀx).
                q.iter_mut().for_each(|v| *v = 0.0);
                for &j in &support.idx {
                    axpy(&mut q, w[j], &self.gram[j * k..(j + 1) * k]);
                }
                let mut best: Option<(usize, f64)> = None;
                for j in 0..k {
                    if w[j] == 0.0 {
                        let g = 2.0 * (q[j] - corr[j]);
                        if best.is_none_or(|(_, b)| g.abs() > b.abs()) {
                            best = Some((j, g));
                        }
                    }
                }
                match best {
                    Some((j, g)) if g.abs() - lambda > slack => support.push(j, -g.signum()),
                    _ => {
                        converged = true;
                        break;
                    }
                }
            }

            iterations += 1;
            optimal_on_support = match self.support_step(&corr, &support, &mut factor, &mut w) {
                Step::Exact => true,
                Step::Partial => false,
                Step::Stuck => {
                    let before = self.objective(x, &w, &mut resid);
                    self.coordinate_pass(&corr, &support, &mut w);
                    let after = self.objective(x, &w, &mut resid);
                    // Once coordinate descent stalls, look for a violating
                    // atom again.
                    relative_decrease(before, after) < self.settings.tolerance
                }
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(x, &w, &mut resid));
            }
            support = Support::of_ordered(&support, &w);
        }

        let zt = self.settings.zero_threshold;
        for v in w.iter_mut() {
            if v.abs() < zt {
                *v = 0.0;
            }
        }
        let objective = self.objective(x, &w, &mut resid);
        LassoSolution {
            coefficients: w,
            iterations,
            converged,
            objective,
        }
    }

    /// Gram matrix restricted to the support, row-major.
    fn restricted_gram(&self, idx: &[usize]) -> Vec<f64> {
        let k = self.dictionary.len();
        let n = idx.len();
        let mut g = vec![0.0; n * n];
        for (a, &ja) in idx.iter().enumerate() {
            for (b, &jb) in idx.iter().enumerate() {
                g[a * n + b] = self.gram[ja * k + jb];
            }
        }
        g
    }

    /// One cyclic pass of exact coordinate minimisations over the support,
    /// in atom order.
    fn coordinate_pass(&self, corr: &[f64], support: &Support, w: &mut [f64]) {
        let k = self.dictionary.len();
        let mut order = support.idx.clone();
        order.sort_unstable();
        let n = order.len();
        let g = self.restricted_gram(&order);
        let mut q: Vec<f64> = (0..n)
            .map(|a| (0..n).fold(0.0, |acc, b| acc + g[a * n + b] * w[order[b]]))
            .collect();
        for (a, &j) in order.iter().enumerate() {
            let gjj = self.gram[j * k + j];
            let old = w[j];
            let new = if gjj > 0.0 {
                soft_threshold(corr[j] - q[a] + gjj * old, 0.5 * self.lambda) / gjj
            } else {
                0.0
            };
            if new != old {
                axpy(&mut q, new - old, &g[a * n..(a + 1) * n]);
                w[j] = new;
            }
        }
    }

    /// Moves `w` towards the minimiser of the objective restricted to the
    /// support with the support's signs, stopping at the best point of the
    /// segment.
    fn support_step(&self, corr: &[f64], support: &Support, factor: &mut Factor, w: &mut [f64]) -> Step {
        let k = self.dictionary.len();
        let idx = &support.idx;
        let signs = &support.signs;
        let n = idx.len();
        let gram = |a: usize, b: usize| self.gram[idx[a] * k + idx[b]];
        let half_lambda = 0.5 * self.lambda;
        let h: Vec<f64> = (0..n).map(|a| corr[idx[a]] - half_lambda * signs[a]).collect();
        let ws: Vec<f64> = idx.iter().map(|&j| w[j]).collect();

        // The restricted quadratic vᵀG v − 2vᵀh is minimised at G⁻¹h. If an
        // atom depends on the ones before it, G has a null vector z. When
        // h has a component along z the quadratic is unbounded along it and
        // the ℓ1 term stops the ray at a sign change; otherwise the
        // objective is flat along z and sliding removes an atom.
        let (p, t_max) = match factor.update(idx, &self.gram, k) {
            Ok(()) => {
                let target = factor.solve(n, &h);
                ((0..n).map(|a| target[a] - ws[a]).collect::<Vec<f64>>(), 1.0)
            }
            Err(m) => {
                let col: Vec<f64> = (0..m).map(|a| gram(a, m)).collect();
                let y = factor.solve(m, &col);
                let mut z = vec![0.0; n];
                for a in 0..m {
                    z[a] = -y[a];
                }
                z[m] = 1.0;
                let zh = dot(&z, &h);
                if zh.abs() > NULL_FLOOR * dot(&z, &z).sqrt() * dot(&h, &h).sqrt() {
                    (z.iter().map(|v| v * zh.signum()).collect(), f64::INFINITY)
                } else if self.slide_along_null(support, &z, w) {
                    return Step::Partial;
                } else {
                    return Step::Stuck;
                }
            }
        };
        if p.iter().all(|&v| v == 0.0) {
            return if t_max == 1.0 { Step::Exact } else { Step::Stuck };
        }

        // f(w + t·p) is a convex piecewise quadratic in t:
        // f(0) + b·t + a·t² + λ(Σ|w_i + t·p_i| − Σ|w_i|).
        let (a, b) = if t_max == 1.0 {
            // The target solves G·v = h, so G·w − Dᵀx = −G·p − (λ/2)·s.
            let a = factor.quadratic_form(&p);
            (a, -2.0 * a - self.lambda * dot(signs, &p))
        } else {
            let (mut a, mut b) = (0.0, 0.0);
            for r in 0..n {
                let row = &self.gram[idx[r] * k..(idx[r] + 1) * k];
                let (mut gw, mut gp) = (0.0, 0.0);
                for c in 0..n {
                    gw += row[idx[c]] * ws[c];
                    gp += row[idx[c]] * p[c];
                }
                b += 2.0 * (gw - corr[idx[r]]) * p[r];
                a += p[r] * gp;
            }
            (a.max(0.0), b)
        };
        let mut breaks: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| {
                let t = -ws[i] / p[i];
                (ws[i] != 0.0 && t > 0.0 && t < t_max).then_some((t, i))
            })
            .collect();
        breaks.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut sigma: Vec<f64> = (0..n)
            .map(|i| if ws[i] != 0.0 { ws[i].signum() } else { p[i].signum() })
            .collect();
        let mut t_lo = 0.0;
        let mut t_star = t_max;
        let mut bi = 0;
        loop {
            let t_hi = breaks.get(bi).map_or(t_max, |x| x.0);
            let slope = b + self.lambda * (0..n).map(|i| sigma[i] * p[i]).sum::<f64>();
            if slope + 2.0 * a * t_lo >= 0.0 {
                t_star = t_lo;
                break;
            }
            // On the last piece with the requested signs, f agrees with the
            // restricted quadratic, whose minimiser is the target itself.
            if bi == breaks.len() && t_max == 1.0 && (0..n).all(|i| sigma[i] == signs[i]) {
                break;
            }
            if a > 0.0 {
                let t = -slope / (2.0 * a);
                if t <= t_hi {
                    t_star = t;
                    break;
                }
            }
            if bi == breaks.len() {
                break;
            }
            while bi < breaks.len() && breaks[bi].0 == t_hi {
                let i = breaks[bi].1;
                sigma[i] = p[i].signum();
                bi += 1;
            }
            t_lo = t_hi;
        }
        if t_star == 0.0 || !t_star.is_finite() {
            return Step::Stuck;
        }

        let mut exact = t_star == 1.0 && t_max == 1.0;
        for i in 0..n {
            let mut new = if exact { ws[i] + p[i] } else { ws[i] + t_star * p[i] };
            if breaks.iter().any(|&(t, at)| at == i && t == t_star) {
                new = 0.0;
            }
            if new != 0.0 && new.signum() != signs[i] {
                exact = false;
            }
            w[idx[i]] = new;
        }
        if exact {
            Step::Exact
        } else {
            Step::Partial
        }
    }

    /// Moves along a null direction `z` of the restricted Gram matrix, which
    /// leaves the fit unchanged, until a nonzero coefficient reaches zero.
    /// The direction is oriented so that atoms at zero enter with their
    /// requested signs; the ℓ1 norm then stays constant because the signs
    /// are orthogonal to `z`.
    fn slide_along_null(&self, support: &Support, z: &[f64], w: &mut [f64]) -> bool {
        let idx = &support.idx;
        let n = idx.len();
        let forced: Vec<f64> = (0..n)
            .filter(|&i| w[idx[i]] == 0.0 && z[i] != 0.0)
            .map(|i| support.signs[i] * z[i].signum())
            .collect();
        let first_hit = |dir: f64| {
            (0..n)
                .filter_map(|i| {
                    let wi = w[idx[i]];
                    let t = -wi / (dir * z[i]);
                    (wi != 0.0 && t > 0.0).then_some((t, i))
                })
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        };
        let dir = match forced.first() {
            Some(&d) if forced.iter().all(|&f| f == d) => d,
            Some(_) => return false,
            None => match (first_hit(1.0), first_hit(-1.0)) {
                (Some(a), Some(b)) if b.0 < a.0 => -1.0,
                (None, Some(_)) => -1.0,
                _ => 1.0,
            },
        };
        let Some((t, hit)) = first_hit(dir) else {
            return false;
        };
        for i in 0..n {
            let j = idx[i];
            w[j] = if i == hit { 0.0 } else { w[j] + t * dir * z[i] };
        }
        true
    }
}

enum Step {
    /// Reached the restricted minimiser with the requested signs.
    Exact,
    /// Moved, but stopped short of the restricted minimiser.
    Partial,
    /// No descent step was found.
    Stuck,
}

/// Atoms allowed to be nonzero, with their signs, in activation order.
struct Support {
    idx: Vec<usize>,
    signs: Vec<f64>,
}

impl Support {
    fn of(w: &[f64]) -> Self {
        let idx: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        let signs = idx.iter().map(|&j| w[j].signum()).collect();
        Support { idx, signs }
    }

    /// Keeps the atoms of `prev` that are still nonzero, in the same order.
    fn of_ordered(prev: &Support, w: &[f64]) -> Self {
        let idx: Vec<usize> = prev.idx.iter().copied().filter(|&j| w[j] != 0.0).collect();
        let signs = idx.iter().map(|&j| w[j].signum()).collect();
        Support { idx, signs }
    }

    fn push(&mut self, j: usize, sign: f64) {
        self.idx.push(j);
        self.signs.push(sign);
    }

    fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }
}

/// Packed lower Cholesky factor of the Gram matrix restricted to a list of
/// atoms. Rows depend only on the atoms up to and including their own, so
/// when the list changes only rows past the longest common prefix are
/// recomputed.
#[derive(Default)]
struct Factor {
    idx: Vec<usize>,
    l: Vec<f64>,
}

impl Factor {
    /// Refactors for `idx`. Fails with the position of the first atom whose
    /// squared pivot falls below `SUPPORT_PIVOT_FLOOR` times its diagonal
    /// Gram entry, i.e. the first atom numerically dependent on the ones
    /// before it; the rows before it remain a valid factor.
    fn update(&mut self, idx: &[usize], gram: &[f64], k: usize) -> std::result::Result<(), usize> {
        // Atoms removed from the cached list are deleted from the factor
        // in place; the factor is rebuilt from the first other mismatch.
        let mut pos = 0;
        let mut matched = 0;
        while pos < self.idx.len() {
            if matched < idx.len() && self.idx[pos] == idx[matched] {
                pos += 1;
                matched += 1;
            } else if !idx[matched..].contains(&self.idx[pos]) {
                self.remove(pos);
            } else {
                self.idx.truncate(pos);
                self.l.truncate(pos * (pos + 1) / 2);
                break;
            }
        }
        let keep = self.idx.len();
        for (i, &ji) in idx.iter().enumerate().skip(keep) {
            let row = i * (i + 1) / 2;
            for (j, &jj) in idx[..=i].iter().enumerate() {
                let rj = j * (j + 1) / 2;
                let mut s = gram[ji * k + jj];
                for t in 0..j {
                    s -= self.l[row + t] * self.l[rj + t];
                }
                if i == j {
                    if s.is_nan() || s <= SUPPORT_PIVOT_FLOOR * gram[ji * k + ji] {
                        self.l.truncate(row);
                        return Err(i);
                    }
                    self.l.push(s.sqrt());
                } else {
                    self.l.push(s / self.l[rj + j]);
                }
            }
            self.idx.push(ji);
        }
        Ok(())
    }

    /// Deletes the atom at position `p`: the trailing block absorbs the
    /// removed column through a rank-one update.
    fn remove(&mut self, p: usize) {
        let n = self.idx.len();
        let mut x: Vec<f64> = (p + 1..n).map(|i| self.l[i * (i + 1) / 2 + p]).collect();
        let mut packed = Vec::with_capacity((n - 1) * n / 2);
        for i in 0..n {
            if i == p {
                continue;
            }
            let row = &self.l[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
            packed.extend(row.iter().enumerate().filter(|&(j, _)| j != p).map(|(_, v)| *v));
        }
        self.l = packed;
        self.idx.remove(p);
        let m = n - 1;
        let at = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for (kk, c) in (p..m).enumerate() {
            let lkk = self.l[at(c, c)];
            let r = lkk.hypot(x[kk]);
            let (cs, sn) = (r / lkk, x[kk] / lkk);
            self.l[at(c, c)] = r;
            for (ii, i) in (c + 1..m).enumerate() {
                let xi = &mut x[kk + 1 + ii];
                let lik = (self.l[at(i, c)] + sn * *xi) / cs;
                *xi = cs * *xi - sn * lik;
                self.l[at(i, c)] = lik;
            }
        }
    }

    /// Solves `L·Lᵀ·x = rhs` with the leading `m × m` block.
    fn solve(&self, m: usize, rhs: &[f64]) -> Vec<f64> {
        let row = |i: usize| &self.l[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
        let mut y = rhs[..m].to_vec();
        for i in 0..m {
            let r = row(i);
            y[i] = (y[i] - dot(&r[..i], &y[..i])) / r[i];
        }
        for i in (0..m).rev() {
            let r = row(i);
            y[i] /= r[i];
            let yi = y[i];
            axpy(&mut y[..i], -yi, &r[..i]);
        }
        y
    }

    /// `pᵀ·L·Lᵀ·p = ‖Lᵀp‖²`.
    fn quadratic_form(&self, p: &[f64]) -> f64 {
        let n = self.idx.len();
        let mut u = vec![0.0; n];
        for (i, &pi) in p.iter().enumerate().take(n) {
            let off = i * (i + 1) / 2;
            axpy(&mut u[..=i], pi, &self.l[off..off + i + 1]);
        }
        dot(&u, &u)
    }
}

/// `y += α·x`.
#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn relative_decrease(before: f64, after: f64) -> f64 {
    (before - after) / before.abs().max(f64::MIN_POSITIVE)
}

/// Solves one LASSO instance from a zero start.
pub fn lasso_solve(problem: &SparseCodeProblem<'_>, settings: &SolverSettings) -> Result<LassoSolution> {
    problem.validate()?;
    Coder::new(problem.dictionary, problem.lambda, *settings)?.solve(problem.signal)
}

/// Codes every column of `signals` independently over `dictionary`.
/// Column `i` of the result is bit-identical to `lasso_solve` on column `i`.
pub fn batch_code(
    signals: &DMatrix<f64>,
    dictionary: &Dictionary,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<SparseCodes> {
    batch_code_with(signals, dictionary, lambda, settings, Execution::Parallel)
}

pub fn batch_code_with(
    signals: &DMatrix<f64>,
    dictionary: &Dictionary,
    lambda: f64,
    settings: &SolverSettings,
    exec: Execution,
) -> Result<SparseCodes> {
    Coder::new(dictionary, lambda, *settings)?.code_columns(signals, None, exec)
}

/// `‖x − Dw‖₂² + λ‖w‖₁`.
pub fn lasso_objective(problem: &SparseCodeProblem<'_>, w: &[f64]) -> Result<f64> {
    let r = residual(problem, w)?;
    Ok(dot(&r, &r) + problem.lambda * w.iter().map(|v| v.abs()).sum::<f64>())
}

fn residual(problem: &SparseCodeProblem<'_>, w: &[f64]) -> Result<Vec<f64>> {
    let d = problem.dictionary;
    if w.len() != d.len() || problem.signal.len() != d.dim() {
        return Err(Error::invalid("dimension mismatch between dictionary, signal and code"));
    }
    // r = D·w − x
    let mut r: Vec<f64> = problem.signal.iter().map(|v| -v).collect();
    for (j, &wj) in w.iter().enumerate() {
        if wj != 0.0 {
            for (ri, a) in r.iter_mut().zip(d.atom(j)) {
                *ri += a * wj;
            }
        }
    }
    Ok(r)
}

/// Largest violation of the LASSO optimality conditions. With
/// `g_j = 2·d_jᵀ(Dw − x)`, active coordinates must satisfy
/// `g_j + λ·sign(w_j) = 0` and inactive ones `|g_j| ≤ λ`.
pub fn kkt_residual(problem: &SparseCodeProblem<'_>, w: &[f64]) -> Result<f64> {
    let r = residual(problem, w)?;
    let lambda = problem.lambda;
    let worst = w
        .iter()
        .enumerate()
        .map(|(j, &wj)| {
            let g = 2.0 * dot(problem.dictionary.atom(j), &r);
            if wj != 0.0 {
                (g + lambda * wj.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    Ok(worst)
}
