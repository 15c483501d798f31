//! Helpers shared by the integration tests: random problem generators and
//! independent reference implementations.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_sr::{Dictionary, GrayImage};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; plenty for test data.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn random_dictionary(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Dictionary {
    let atoms = DMatrix::from_fn(d, k, |_, _| gaussian(rng));
    Dictionary::normalized(atoms).unwrap()
}

/// A signal that is a sparse combination of atoms plus a little noise.
pub fn random_signal(dict: &Dictionary, active: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; dict.dim()];
    for _ in 0..active {
        let j = rng.random_range(0..dict.len());
        let c = gaussian(rng) * 2.0;
        for (xi, a) in x.iter_mut().zip(dict.atom(j)) {
            *xi += c * a;
        }
    }
    for xi in x.iter_mut() {
        *xi += 0.05 * gaussian(rng);
    }
    x
}

pub fn objective(dict: &Dictionary, x: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let d = dict.atoms();
    let r = d * DVector::from_column_slice(w) - DVector::from_column_slice(x);
    r.norm_squared() + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// FISTA with adaptive restart on `‖x − Dw‖² + λ‖w‖₁`, followed by an
/// exact solve on the sign pattern it finds.
pub fn lasso_oracle(dict: &Dictionary, x: &[f64], lambda: f64) -> Vec<f64> {
    let d = dict.atoms();
    let k = dict.len();
    let g = d.transpose() * d;
    let c = d.transpose() * DVector::from_column_slice(x);
    let lip = 2.0 * g.symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let shrink = |v: f64, t: f64| v.signum() * (v.abs() - t).max(0.0);
    let f = |w: &DVector<f64>| {
        (w.transpose() * &g * w)[0] - 2.0 * w.dot(&c) + lambda * w.lp_norm(1)
    };

    let mut w = DVector::zeros(k);
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut prev = f(&w);
    for _ in 0..20000 {
        let grad = 2.0 * (&g * &y - &c);
        let next = (&y - step * grad).map(|v| shrink(v, step * lambda));
        let fn_ = f(&next);
        if fn_ > prev {
            // Restart momentum.
            t = 1.0;
            y = w.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + ((t - 1.0) / t_next) * (&next - &w);
        let done = (prev - fn_).abs() <= 1e-16 * prev.abs().max(1.0);
        w = next;
        t = t_next;
        prev = fn_;
        if done {
            break;
        }
    }

    // Polish: solve the stationarity system on the detected support.
    let support: Vec<usize> = (0..k).filter(|&j| w[j].abs() > 1e-9).collect();
    if !support.is_empty() {
        let gs = DMatrix::from_fn(support.len(), support.len(), |a, b| g[(support[a], support[b])]);
        let rhs = DVector::from_fn(support.len(), |a, _| c[support[a]] - lambda / 2.0 * w[support[a]].signum());
        if let Some(chol) = gs.cholesky() {
            let ws = chol.solve(&rhs);
            let consistent = support.iter().zip(ws.iter()).all(|(&j, &v)| v.signum() == w[j].signum());
            if consistent {
                let mut polished = DVector::zeros(k);
                for (&j, &v) in support.iter().zip(ws.iter()) {
                    polished[j] = v;
                }
                if f(&polished) < f(&w) {
                    w = polished;
                }
            }
        }
    }
    w.iter().copied().collect()
}

pub fn texture(rows: usize, cols: usize, seed: usize) -> GrayImage {
    GrayImage::from_fn(rows, cols, |r, c| {
        let (x, y) = (c as f64, r as f64);
        let s = seed as f64;
        let v = 128.0
            + 60.0 * ((x * (0.31 + 0.05 * s) + y * 0.17).sin())
            + 40.0 * ((y * (0.23 + 0.03 * s) - x * 0.11).cos())
            + 20.0 * (((x + 3.0 * s) * (y + 1.0) * 0.013).sin());
        v.clamp(0.0, 255.0).floor()
    })
    .unwrap()
}

/// Small training corpus of smooth synthetic textures.
pub fn corpus() -> Vec<GrayImage> {
    (0..4).map(|i| texture(40 + 4 * i, 48, i)).collect()
}

/// Column-major random matrix with entries uniform in `[-1, 1)`.
pub fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
