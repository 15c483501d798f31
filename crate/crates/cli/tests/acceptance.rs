//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_sr::engine::{Provenance, TrainRequest};
use sparse_sr::imageio::{read_gray, write_gray};
use sparse_sr::learning::{decoupled_train, dict_learn};
use sparse_sr::metrics::psnr_from_mse;
use sparse_sr::resample::{bicubic_upscale, degrade};
use sparse_sr::{
    kkt_residual, lasso_solve, mse, psnr, ssim, super_resolve, train_pair, Dictionary, DictionaryPair, GrayImage,
    Method, PatchGeometry, RidgeEpsilon, SolverSettings, SparseCodeProblem, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u: f64 = r.random_range(f64::EPSILON..1.0);
    let v: f64 = r.random_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn random_dictionary(d: usize, k: usize, r: &mut ChaCha8Rng) -> Dictionary {
    Dictionary::normalized(DMatrix::from_fn(d, k, |_, _| gaussian(r))).unwrap()
}

fn objective(d: &DMatrix<f64>, x: &[f64], lambda: f64, w: &[f64]) -> f64 {
    let r = d * DVector::from_column_slice(w) - DVector::from_column_slice(x);
    r.norm_squared() + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// FISTA with adaptive restart, then an exact solve on the detected sign
/// pattern.
fn lasso_oracle(dict: &Dictionary, x: &[f64], lambda: f64) -> Vec<f64> {
    let d = dict.atoms();
    let k = dict.len();
    let g = d.transpose() * d;
    let c = d.transpose() * DVector::from_column_slice(x);
    let step = 1.0 / (2.0 * g.symmetric_eigenvalues().max());
    let f = |w: &DVector<f64>| (w.transpose() * &g * w)[0] - 2.0 * w.dot(&c) + lambda * w.lp_norm(1);
    let mut w = DVector::zeros(k);
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut prev = f(&w);
    for _ in 0..50000 {
        let grad = 2.0 * (&g * &y - &c);
        let next = (&y - step * grad).map(|v| v.signum() * (v.abs() - step * lambda).max(0.0));
        let fv = f(&next);
        if fv > prev {
            t = 1.0;
            y = w.clone();
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + ((t - 1.0) / t_next) * (&next - &w);
        let done = prev - fv <= 1e-16 * prev.abs().max(1.0);
        w = next;
        t = t_next;
        prev = fv;
        if done {
            break;
        }
    }
    let support: Vec<usize> = (0..k).filter(|&j| w[j].abs() > 1e-9).collect();
    if !support.is_empty() {
        let gs = DMatrix::from_fn(support.len(), support.len(), |a, b| g[(support[a], support[b])]);
        let rhs = DVector::from_fn(support.len(), |a, _| c[support[a]] - lambda / 2.0 * w[support[a]].signum());
        if let Some(chol) = gs.cholesky() {
            let ws = chol.solve(&rhs);
            if support.iter().zip(ws.iter()).all(|(&j, &v)| v.signum() == w[j].signum()) {
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

fn solver_optimality() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let settings = SolverSettings::default();
    let (mut worst_kkt, mut worst_gap) = (0.0f64, 0.0f64);
    let mut failures = 0;
    let mut solver_time = 0.0;
    for _ in 0..100 {
        let d = r.random_range(10..=50);
        let k = r.random_range(20..=100);
        let lambda = 10f64.powf(r.random_range(-2.0..=0.0));
        let dict = random_dictionary(d, k, &mut r);
        let mut x = vec![0.0; d];
        for _ in 0..r.random_range(1..=d / 2) {
            let j = r.random_range(0..k);
            let a = 2.0 * gaussian(&mut r);
            for (xi, v) in x.iter_mut().zip(dict.atom(j)) {
                *xi += a * v;
            }
        }
        for xi in x.iter_mut() {
            *xi += 0.1 * gaussian(&mut r);
        }
        let p = SparseCodeProblem::new(&dict, &x, lambda).unwrap();
        let t = Instant::now();
        let sol = lasso_solve(&p, &settings).unwrap();
        solver_time += t.elapsed().as_secs_f64();
        let kkt = kkt_residual(&p, &sol.coefficients).unwrap() / lambda;
        let oracle = lasso_oracle(&dict, &x, lambda);
        let reference = objective(dict.atoms(), &x, lambda, &oracle);
        let gap = (sol.objective - reference) / reference;
        worst_kkt = worst_kkt.max(kkt);
        worst_gap = worst_gap.max(gap.abs());
        if kkt.is_nan() || kkt > 1e-4 || gap.is_nan() || gap > 1e-6 || !sol.converged {
            failures += 1;
        }
    }
    let total = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && total < 30.0,
        format!(
            "100 instances, {failures} failing; max kkt/λ {worst_kkt:.2e}, max |objective gap| {worst_gap:.2e}; \
             solver {solver_time:.2}s, total with oracle {total:.2}s"
        ),
    )
}

fn closed_form_hr() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut worst_cert = 0.0f64;
    let mut beaten = 0;
    for i in 0..20 {
        let (dl, dh, n, k) = (9, 36, 200, 12 + i % 8);
        let y = DMatrix::from_fn(dl, n, |_, _| 20.0 * gaussian(&mut r));
        let x = DMatrix::from_fn(dh, n, |_, _| 20.0 * gaussian(&mut r));
        let cfg = TrainConfig {
            dict_size: k,
            outer_iterations: 3,
            seed: i as u64,
            ridge: RidgeEpsilon::Fixed(0.0),
            ..TrainConfig::default()
        };
        let out = decoupled_train(&y, &x, &cfg).unwrap();
        let w = &out.codes.coefficients;
        let d_h = out.d_h.atoms();
        let cert = ((&x - d_h * w) * w.transpose()).norm() / (x.norm() * w.norm());
        worst_cert = worst_cert.max(cert);
        let err = (&x - d_h * w).norm_squared();
        for j in 0..1000 {
            let scale = 10f64.powi(-(j % 8));
            let p = d_h + DMatrix::from_fn(dh, k, |_, _| scale * gaussian(&mut r));
            if (&x - &p * w).norm_squared() < err {
                beaten += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_cert < 1e-8 && beaten == 0 && secs < 10.0,
        format!("20 instances, max certificate {worst_cert:.2e}, {beaten}/20000 perturbations better, {secs:.2}s"),
    )
}

fn alternation_descent() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let y = DMatrix::from_fn(25, 500, |_, _| 10.0 * gaussian(&mut r));
    let cfg = TrainConfig {
        dict_size: 64,
        outer_iterations: 10,
        ..TrainConfig::default()
    };
    let out = dict_learn(&y, &cfg).unwrap();
    let worst = out
        .history
        .iter()
        .map(|h| h.after - h.before)
        .fold(f64::NEG_INFINITY, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 60.0,
        format!(
            "{} half-steps, largest change {worst:.3e}, objective {:.4e} -> {:.4e}, {secs:.2}s",
            out.history.len(),
            out.history[0].before,
            out.objective
        ),
    )
}

/// Straight-line single-threaded inference for the default geometry.
fn reference_sr(lr: &GrayImage, p: &DictionaryPair) -> GrayImage {
    let (m, n) = lr.dims();
    let (side, s) = (5usize, 2usize);
    let hp = side * s;
    let mut sum = vec![0.0f64; m * s * n * s];
    let mut count = vec![0u32; m * s * n * s];
    for top in 0..=m - side {
        for left in 0..=n - side {
            let mut patch = Vec::with_capacity(side * side);
            for r in 0..side {
                for c in 0..side {
                    patch.push(lr.get(top + r, left + c));
                }
            }
            let mut total = 0.0;
            for v in &patch {
                total += v;
            }
            let mean = total / patch.len() as f64;
            for v in patch.iter_mut() {
                *v -= mean;
            }
            let prob = SparseCodeProblem::new(&p.d_l, &patch, p.lambda).unwrap();
            let w = lasso_solve(&prob, &SolverSettings::default()).unwrap().coefficients;
            let mut hr = vec![0.0; hp * hp];
            for (j, &wj) in w.iter().enumerate() {
                if wj != 0.0 {
                    for (i, a) in p.d_h.atom(j).iter().enumerate() {
                        hr[i] += a * wj;
                    }
                }
            }
            for v in hr.iter_mut() {
                *v += mean;
            }
            for r in 0..hp {
                for c in 0..hp {
                    let idx = (top * s + r) * (n * s) + left * s + c;
                    sum[idx] += hr[r * hp + c];
                    count[idx] += 1;
                }
            }
        }
    }
    let data = sum
        .iter()
        .zip(&count)
        .map(|(v, &c)| (v / c as f64).clamp(0.0, 255.0))
        .collect();
    GrayImage::new(m * s, n * s, data).unwrap()
}

fn pipeline_equivalence() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let pair = DictionaryPair {
        d_l: random_dictionary(25, 64, &mut r),
        d_h: Dictionary::new(DMatrix::from_fn(100, 64, |_, _| 20.0 * gaussian(&mut r))).unwrap(),
        geometry: PatchGeometry::default(),
        lambda: 0.15,
        method: Method::Decoupled,
        provenance: Provenance {
            request: TrainRequest::default(),
            corpus_digest: String::new(),
        },
    };
    let pixels = (0..49).map(|_| r.random_range(0..=255u8) as f64).collect();
    let lr = GrayImage::new(7, 7, pixels).unwrap();
    let got = super_resolve(&lr, &pair, &SolverSettings::default()).unwrap().image;
    let want = reference_sr(&lr, &pair);
    let differing = got
        .pixels()
        .iter()
        .zip(want.pixels())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    outcome(differing == 0, format!("7x7 -> 14x14, {differing} pixels differ in bits"))
}

fn metric_identities() -> Outcome {
    let p1 = psnr_from_mse(1.0);
    let a = GrayImage::new(2, 2, vec![0.0; 4]).unwrap();
    let b = GrayImage::new(2, 2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
    let m = mse(&a, &b).unwrap();
    let img = GrayImage::from_fn(16, 16, |r, c| ((r * 37 + c * 11) % 256) as f64).unwrap();
    let s = ssim(&img, &img).unwrap();
    outcome(
        (p1 - 48.1308).abs() <= 1e-3 && m == 6.25 && s == 1.0,
        format!("PSNR(MSE=1) = {p1:.4} dB, MSE(2x2) = {m}, SSIM(a,a) = {s}"),
    )
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load_dir(dir: &Path) -> Vec<(String, GrayImage)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), read_gray(&p).unwrap()))
        .collect()
}

/// Outer iterations for the desk-scale run; see the README.
const DESK_OUTER_ITERATIONS: usize = 3;

fn method_ordering() -> Outcome {
    let start = Instant::now();
    let corpus: Vec<GrayImage> = load_dir(&data_dir().join("train")).into_iter().map(|(_, g)| g).collect();
    let tests = load_dir(&data_dir().join("test"));
    let base = TrainRequest {
        config: TrainConfig {
            dict_size: 512,
            lambda: 0.15,
            outer_iterations: DESK_OUTER_ITERATIONS,
            ..TrainConfig::default()
        },
        geometry: PatchGeometry::default(),
        patches: 20000,
        ..TrainRequest::default()
    };
    let (joint, _) = train_pair(&corpus, &TrainRequest { method: Method::Joint, ..base.clone() }).unwrap();
    let (dec, _) = train_pair(&corpus, &TrainRequest { method: Method::Decoupled, ..base.clone() }).unwrap();
    let (mut bic_sum, mut joint_sum, mut dec_sum) = (0.0, 0.0, 0.0);
    let mut rows = Vec::new();
    for (name, img) in &tests {
        let hr = img.crop_to_multiple(2).unwrap();
        let lr = degrade(&hr, 2).unwrap();
        let b = psnr(&hr, &bicubic_upscale(&lr, 2).unwrap()).unwrap();
        let j = psnr(&hr, &super_resolve(&lr, &joint, &base.config.solver).unwrap().image).unwrap();
        let d = psnr(&hr, &super_resolve(&lr, &dec, &base.config.solver).unwrap().image).unwrap();
        rows.push(format!("{name} {b:.2}/{j:.2}/{d:.2}"));
        bic_sum += b;
        joint_sum += j;
        dec_sum += d;
    }
    let n = tests.len() as f64;
    let (bic, jnt, dcp) = (bic_sum / n, joint_sum / n, dec_sum / n);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        tests.len() >= 3 && dcp > bic + 1.0 && dcp >= jnt - 0.05 && secs < 1800.0,
        format!(
            "avg PSNR bicubic {bic:.3}, joint {jnt:.3}, decoupled {dcp:.3} dB \
             (bicubic/joint/decoupled: {}); {secs:.0}s",
            rows.join(", ")
        ),
    )
}

fn bicubic_anchor() -> Outcome {
    let lena = read_gray(data_dir().join("test/lena.png")).unwrap().crop_to_multiple(2).unwrap();
    let lr = degrade(&lena, 2).unwrap();
    let p = psnr(&lena, &bicubic_upscale(&lr, 2).unwrap()).unwrap();
    outcome(
        (p - 32.79).abs() <= 1.5,
        format!("Lena bicubic x2: {p:.3} dB (reference 32.79 ± 1.5)"),
    )
}

fn srtool(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_srtool"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let train_dir = data_dir().join("train").to_string_lossy().into_owned();
    let flags = ["--patches", "2000", "--dict-size", "64", "--outer-iterations", "3", "--seed", "11"];
    let mut ok = true;
    for name in ["a.srdict", "b.srdict"] {
        let mut args = vec!["train"];
        args.extend(flags);
        let out = p(name);
        args.extend([train_dir.as_str(), out.as_str()]);
        ok &= srtool(&args);
    }
    let lena = read_gray(data_dir().join("test/lena.png")).unwrap();
    let crop = lena.crop(200, 200, 96, 96).unwrap();
    write_gray(p("lr.png"), &degrade(&crop, 2).unwrap()).unwrap();
    for out in ["o1.png", "o2.png"] {
        ok &= srtool(&["sr", &p("a.srdict"), &p("lr.png"), &p(out)]);
    }
    if !ok {
        return outcome(false, "srtool invocation failed".into());
    }
    let same_dict = fs::read(p("a.srdict")).unwrap() == fs::read(p("b.srdict")).unwrap();
    let same_img = fs::read(p("o1.png")).unwrap() == fs::read(p("o2.png")).unwrap();
    outcome(
        same_dict && same_img,
        format!("train twice: identical = {same_dict}; sr twice: identical = {same_img}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 solver optimality", solver_optimality),
        ("2 closed-form HR dictionary", closed_form_hr),
        ("3 alternation descent", alternation_descent),
        ("4 pipeline equivalence", pipeline_equivalence),
        ("5 metric identities", metric_identities),
        ("6 desk-scale method ordering", method_ordering),
        ("7 bicubic anchor", bicubic_anchor),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/{} criteria passed", 8 - failed, 8);
    if failed > 0 {
        std::process::exit(1);
    }
}
