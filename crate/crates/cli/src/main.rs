//! `srtool`: train dictionary pairs, super-resolve images and tabulate
//! quality metrics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sparse_sr::dictfile;
use sparse_sr::engine::{super_resolve, super_resolve_color, Method, SrResult, StageTiming, TrainRequest};
use sparse_sr::imageio::{self, LoadedImage};
use sparse_sr::metrics::MetricReport;
use sparse_sr::patches::{sample_training_pairs, PatchGeometry, SamplingConfig};
use sparse_sr::resample::{bicubic_upscale, degrade};
use sparse_sr::{train_pair, GrayImage, RidgeEpsilon, SolverSettings, TrainConfig};

mod table;

use table::{MetricTable, Column};

#[derive(Parser)]
#[command(name = "srtool", version, about = "Example-based super-resolution with coupled sparse dictionaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an LR/HR dictionary pair from a directory of HR images.
    Train(TrainArgs),
    /// Super-resolve one image with a trained dictionary pair.
    Sr(SrArgs),
    /// Compare bicubic, joint and decoupled results against ground truth.
    Eval(EvalArgs),
    /// Write randomly sampled LR/HR training pairs to CSV.
    SamplePatches(SampleArgs),
}

#[derive(Args, Clone)]
struct GeometryArgs {
    /// Side length of LR patches in pixels.
    #[arg(long, default_value_t = 5)]
    lr_patch: usize,
    /// Upscaling factor.
    #[arg(long, default_value_t = 2)]
    scale: usize,
    /// Step between LR patches (1 means 4 pixels of overlap for 5x5 patches).
    #[arg(long, default_value_t = 1)]
    lr_stride: usize,
}

impl GeometryArgs {
    fn geometry(&self) -> Result<PatchGeometry> {
        Ok(PatchGeometry::new(self.lr_patch, self.scale, self.lr_stride)?)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of training images (PNG, PGM or PPM).
    corpus: PathBuf,
    /// Output dictionary file.
    output: PathBuf,
    /// Training method.
    #[arg(long, default_value = "decoupled")]
    method: Method,
    #[command(flatten)]
    geometry: GeometryArgs,
    /// Number of atoms K.
    #[arg(long, default_value_t = 1024)]
    dict_size: usize,
    /// Weight of the l1 penalty.
    #[arg(long, default_value_t = 0.15)]
    lambda: f64,
    /// Number of training patch pairs to sample.
    #[arg(long, default_value_t = 80000)]
    patches: usize,
    /// Alternations between sparse coding and dictionary update.
    #[arg(long, default_value_t = 40)]
    outer_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LR patches with lower intensity variance are not sampled.
    #[arg(long, default_value_t = 10.0)]
    variance_floor: f64,
    /// Ridge term added to WWᵀ: "auto" or a nonnegative number.
    #[arg(long, default_value = "auto")]
    ridge_epsilon: String,
    /// Weight the LR and HR blocks by 1/sqrt(d) in joint training.
    #[arg(long)]
    block_weighting: bool,
    /// Keep the split joint dictionaries exactly as learned.
    #[arg(long)]
    no_renormalize_split: bool,
    #[command(flatten)]
    solver: TrainSolverArgs,
}

#[derive(Args)]
struct TrainSolverArgs {
    /// Iteration cap for each sparse coding problem.
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Solver optimality tolerance, relative to lambda.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Coefficients smaller than this are set to zero.
    #[arg(long, default_value_t = 1e-10)]
    zero_threshold: f64,
}

/// Solver overrides; unset fields keep the values stored in the dictionary.
#[derive(Args, Clone, Default)]
struct SolverOverrides {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    zero_threshold: Option<f64>,
}

impl SolverOverrides {
    fn apply(&self, base: SolverSettings) -> SolverSettings {
        SolverSettings {
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            tolerance: self.tolerance.unwrap_or(base.tolerance),
            zero_threshold: self.zero_threshold.unwrap_or(base.zero_threshold),
        }
    }
}

#[derive(Args)]
struct SrArgs {
    /// Trained dictionary file.
    dict: PathBuf,
    /// Low-resolution input image.
    input: PathBuf,
    /// Output image (.png, .pgm or .ppm).
    output: PathBuf,
    /// Write one CSV row per LR patch: origin, nonzeros, coding residual.
    #[arg(long)]
    dump_codes: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth HR images.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Dictionary for the Joint column, run on the degraded images.
    #[arg(long, conflicts_with = "joint_dir")]
    joint_dict: Option<PathBuf>,
    /// Directory of precomputed Joint outputs named like the inputs.
    #[arg(long)]
    joint_dir: Option<PathBuf>,
    /// Dictionary for the Decoupled column.
    #[arg(long, conflicts_with = "decoupled_dir")]
    decoupled_dict: Option<PathBuf>,
    /// Directory of precomputed Decoupled outputs named like the inputs.
    #[arg(long)]
    decoupled_dir: Option<PathBuf>,
    /// Upscaling factor when no dictionary is given.
    #[arg(long, default_value_t = 2)]
    scale: usize,
    /// Ignore a border of `scale` pixels when computing metrics.
    #[arg(long)]
    crop_border: bool,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args)]
struct SampleArgs {
    /// Directory of training images.
    corpus: PathBuf,
    /// Output CSV file.
    output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    variance_floor: f64,
    #[command(flatten)]
    geometry: GeometryArgs,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("SRTOOL_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                sparse_sr::par::configure_threads(n);
            }
            _ => {
                eprintln!("error: SRTOOL_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Sr(a) => sr(a),
        Command::Eval(a) => eval(a),
        Command::SamplePatches(a) => sample_patches(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

/// Reads every image in `dir`, in file-name order, as gray.
fn load_corpus(dir: &Path) -> Result<Vec<GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read corpus directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file() && is_image(p));
    paths.sort();
    if paths.is_empty() {
        bail!("no PNG, PGM or PPM images in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| imageio::read_gray(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn print_timing(timing: &StageTiming) {
    println!("timing:");
    for (stage, secs) in &timing.stages {
        println!("  {stage:<10} {secs:>9.3} s");
    }
    println!("  {:<10} {:>9.3} s", "total", timing.total());
}

fn train(a: TrainArgs) -> Result<()> {
    let ridge = match a.ridge_epsilon.as_str() {
        "auto" => RidgeEpsilon::Auto,
        v => RidgeEpsilon::Fixed(
            v.parse()
                .with_context(|| format!("--ridge-epsilon must be 'auto' or a number, got '{v}'"))?,
        ),
    };
    let request = TrainRequest {
        config: TrainConfig {
            dict_size: a.dict_size,
            lambda: a.lambda,
            outer_iterations: a.outer_iterations,
            solver: SolverSettings {
                max_iterations: a.solver.max_iterations,
                tolerance: a.solver.tolerance,
                zero_threshold: a.solver.zero_threshold,
            },
            seed: a.seed,
            ridge,
            block_weighting: a.block_weighting,
            renormalize_split: !a.no_renormalize_split,
        },
        geometry: a.geometry.geometry()?,
        method: a.method,
        patches: a.patches,
        variance_floor: a.variance_floor,
    };
    request.config.validate()?;
    let corpus = load_corpus(&a.corpus)?;
    let (pair, report) = train_pair(&corpus, &request)?;
    dictfile::write(&a.output, &pair).with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "method {}: {} atoms, D_l {}x{}, D_h {}x{}",
        pair.method,
        pair.atoms(),
        pair.d_l.dim(),
        pair.atoms(),
        pair.d_h.dim(),
        pair.atoms()
    );
    println!("final objective: {:.6e}", report.objective);
    if let Some(e) = report.ridge_epsilon {
        println!("ridge epsilon: {e:.6e}");
    }
    print_timing(&report.timing);
    println!("wrote {}", a.output.display());
    Ok(())
}

fn print_sr_stats(res: &SrResult) {
    println!(
        "patches: {}, mean nonzeros: {:.2}, max nonzeros: {}, not converged: {:.2}%",
        res.patches.len(),
        res.mean_nnz(),
        res.max_nnz(),
        100.0 * res.nonconverged_fraction()
    );
    print_timing(&res.timing);
}

fn dump_codes(path: &Path, res: &SrResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["row", "col", "nnz", "residual", "converged"])?;
    for p in &res.patches {
        w.write_record([
            p.origin.0.to_string(),
            p.origin.1.to_string(),
            p.nnz.to_string(),
            format!("{:e}", p.residual),
            p.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn wants_gray(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn sr(a: SrArgs) -> Result<()> {
    let pair = dictfile::read(&a.dict).with_context(|| format!("reading {}", a.dict.display()))?;
    let solver = a.solver.apply(pair.provenance.request.config.solver);
    let input = imageio::read_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let luma = match &input {
        LoadedImage::Gray(g) => {
            let res = super_resolve(g, &pair, &solver)?;
            imageio::write_gray(&a.output, &res.image)?;
            res
        }
        LoadedImage::Color(c) => {
            let res = super_resolve_color(c, &pair, &solver)?;
            if wants_gray(&a.output) {
                imageio::write_gray(&a.output, &res.luma.image)?;
            } else {
                imageio::write_color(&a.output, &res.image)?;
            }
            res.luma
        }
    };
    let (h, w) = luma.image.dims();
    println!("output {}x{} written to {}", w, h, a.output.display());
    print_sr_stats(&luma);
    if let Some(path) = &a.dump_codes {
        dump_codes(path, &luma)?;
    }
    Ok(())
}

/// Where the numbers for one table column come from.
enum Source {
    Dict(Box<sparse_sr::DictionaryPair>),
    Dir(PathBuf),
}

fn eval(a: EvalArgs) -> Result<()> {
    let load = |path: &Option<PathBuf>, dir: &Option<PathBuf>| -> Result<Option<Source>> {
        Ok(match (path, dir) {
            (Some(p), _) => Some(Source::Dict(Box::new(
                dictfile::read(p).with_context(|| format!("reading {}", p.display()))?,
            ))),
            (None, Some(d)) => Some(Source::Dir(d.clone())),
            (None, None) => None,
        })
    };
    let mut sources = vec![(Column::Bicubic, None)];
    if let Some(s) = load(&a.joint_dict, &a.joint_dir)? {
        sources.push((Column::Joint, Some(s)));
    }
    if let Some(s) = load(&a.decoupled_dict, &a.decoupled_dir)? {
        sources.push((Column::Decoupled, Some(s)));
    }
    let scale = a.scale;
    for (_, s) in &sources {
        if let Some(Source::Dict(pair)) = s {
            if pair.geometry.scale != scale {
                bail!(
                    "dictionary was trained for scale {} but --scale is {scale}",
                    pair.geometry.scale
                );
            }
        }
    }
    let shave = if a.crop_border { scale } else { 0 };

    let mut table = MetricTable::new(sources.iter().map(|(c, _)| *c).collect());
    for path in &a.images {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let hr = imageio::read_gray(path)
            .with_context(|| format!("reading {}", path.display()))?
            .crop_to_multiple(scale)?;
        let lr = degrade(&hr, scale)?;
        let mut row = Vec::with_capacity(sources.len());
        for (col, src) in &sources {
            let estimate = match src {
                None => bicubic_upscale(&lr, scale)?,
                Some(Source::Dict(pair)) => {
                    let solver = a.solver.apply(pair.provenance.request.config.solver);
                    super_resolve(&lr, pair, &solver)?.image
                }
                Some(Source::Dir(dir)) => {
                    let file = dir.join(path.file_name().context("image path has no file name")?);
                    imageio::read_gray(&file).with_context(|| format!("reading {} output {}", col, file.display()))?
                }
            };
            if estimate.dims() != hr.dims() {
                bail!(
                    "{} output for {name} is {}x{} but the ground truth is {}x{}",
                    col,
                    estimate.cols(),
                    estimate.rows(),
                    hr.cols(),
                    hr.rows()
                );
            }
            row.push(MetricReport::compute(&hr, &estimate, shave)?);
        }
        table.push(name, row);
    }
    print!("{}", table.to_text());
    if let Some(path) = &a.csv {
        std::fs::write(path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sample_patches(a: SampleArgs) -> Result<()> {
    let geometry = a.geometry.geometry()?;
    let corpus = load_corpus(&a.corpus)?;
    let pairs = sample_training_pairs(
        &corpus,
        &geometry,
        &SamplingConfig {
            count: a.count,
            variance_floor: a.variance_floor,
            seed: a.seed,
        },
    )?;
    let mut w = csv::Writer::from_path(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let mut header = vec!["source".to_string(), "lr_row".into(), "lr_col".into(), "mean".into()];
    header.extend((0..geometry.lr_dim()).map(|i| format!("lr{i}")));
    header.extend((0..geometry.hr_dim()).map(|i| format!("hr{i}")));
    w.write_record(&header)?;
    for i in 0..pairs.lr.len() {
        let (r, c) = pairs.lr.origins[i];
        let mut rec = vec![
            pairs.sources[i].to_string(),
            r.to_string(),
            c.to_string(),
            pairs.lr.means[i].to_string(),
        ];
        rec.extend(pairs.lr.column(i).iter().map(|v| v.to_string()));
        rec.extend(pairs.hr.column(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote {} patch pairs to {}", pairs.lr.len(), a.output.display());
    Ok(())
}
