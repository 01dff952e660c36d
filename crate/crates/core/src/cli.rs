//! Command-line driver: data synthesis, mask generation, two-stage
//! training, evaluation, and figure export.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 I/O
//! failure, 5 invalid data or file format, 6 training diverged.
//!
//! Configuration precedence for training/eval commands: built-in defaults,
//! then the `--config` JSON file, then explicit flags. The config file
//! rejects unknown keys. `MCMR_VERBOSE=1` enables progress notes on stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::{self, DatasetManifest, SlicePair};
use crate::error::{Error, Result};
use crate::masks::{self, LineMask};
use crate::metrics::{error_map, write_pgm16, write_report_csv};
use crate::sampler::{load_sampler, save_sampler};
use crate::train::{evaluate, reconstruct_slice, train_stage1, train_stage2, TrainConfig};
use crate::unet;
use crate::ImageSlice;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_DATA: i32 = 5;
pub const EXIT_DIVERGED: i32 = 6;

/// JSON experiment configuration; any field may be overridden by a flag.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub batch_size: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub lambda: Option<f64>,
    pub slope: Option<f64>,
    pub multi_contrast: Option<bool>,
    pub depth: Option<usize>,
    pub base_channels: Option<usize>,
    pub residual: Option<bool>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

#[derive(Parser)]
#[command(
    name = "mcmr",
    about = "Learned Cartesian line sampling and multi-contrast de-aliasing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory containing manifest.json
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for checkpoints and logs
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Adam learning rate (default 0.0005)
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size (default 4)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of optimization steps (default 500)
    #[arg(long)]
    steps: Option<usize>,
    /// RNG seed for init and batching (default 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Line budget for mask extraction (default 6)
    #[arg(long)]
    budget: Option<usize>,
    /// L1 sparsity coefficient (default 0.01)
    #[arg(long)]
    lambda: Option<f64>,
    /// Sigmoid slope (default 10)
    #[arg(long)]
    slope: Option<f64>,
    /// U-net depth (default 3)
    #[arg(long)]
    depth: Option<usize>,
    /// U-net base channel count (default 16)
    #[arg(long)]
    base_channels: Option<usize>,
    /// Drop the reference-contrast input channel (default: multi-contrast)
    #[arg(long)]
    single_contrast: bool,
    /// Add the zero-filled input to the network output (default off)
    #[arg(long)]
    residual: bool,
}

impl TrainArgs {
    fn resolve(&self) -> Result<(TrainConfig, PathBuf, PathBuf)> {
        let file = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.lr.or(file.learning_rate).unwrap_or(d.learning_rate),
            adam_beta1: file.adam_beta1.unwrap_or(d.adam_beta1),
            adam_beta2: file.adam_beta2.unwrap_or(d.adam_beta2),
            adam_eps: file.adam_eps.unwrap_or(d.adam_eps),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
            steps: self.steps.or(file.steps).unwrap_or(d.steps),
            seed: self.seed.or(file.seed).unwrap_or(d.seed),
            budget: self.budget.or(file.budget).unwrap_or(d.budget),
            lambda: self.lambda.or(file.lambda).unwrap_or(d.lambda),
            slope: self.slope.or(file.slope).unwrap_or(d.slope),
            multi_contrast: if self.single_contrast {
                false
            } else {
                file.multi_contrast.unwrap_or(d.multi_contrast)
            },
            depth: self.depth.or(file.depth).unwrap_or(d.depth),
            base_channels: self.base_channels.or(file.base_channels).unwrap_or(d.base_channels),
            residual: self.residual || file.residual.unwrap_or(d.residual),
        };
        cfg.validate()?;
        let data = self
            .data
            .clone()
            .or(file.data)
            .ok_or_else(|| Error::InvalidConfig("--data (or config `data`) is required".into()))?;
        let out = self
            .out
            .clone()
            .or(file.out)
            .ok_or_else(|| Error::InvalidConfig("--out (or config `out`) is required".into()))?;
        Ok((cfg, data, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired-contrast dataset with a train/val/test manifest
    Synth {
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Number of slice pairs (default 300)
        #[arg(long, default_value_t = 300)]
        pairs: usize,
        /// Square image size in pixels (default 64)
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Generation and split seed (default 0)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training fraction (default 0.6667)
        #[arg(long, default_value_t = 0.6667)]
        train_frac: f64,
        /// Validation fraction (default 0.1333)
        #[arg(long, default_value_t = 0.1333)]
        val_frac: f64,
        /// Test fraction (default 0.2)
        #[arg(long, default_value_t = 0.2)]
        test_frac: f64,
    },
    /// Generate a classical baseline mask file
    MakeMask {
        /// Mask family: lowres, equidistant, or gaussian
        #[arg(long)]
        kind: String,
        /// Total number of phase-encode lines
        #[arg(long)]
        n: usize,
        /// Number of sampled lines
        #[arg(long)]
        budget: usize,
        /// Output mask JSON path
        #[arg(long)]
        out: PathBuf,
        /// Fraction of the budget placed centrally, equidistant only (default 2/3)
        #[arg(long)]
        center_fraction: Option<f64>,
        /// Gaussian density width, gaussian only (default n/6)
        #[arg(long)]
        sigma: Option<f64>,
        /// Sampling seed, gaussian only (default 0)
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stage 1: jointly train the sampler and a reconstructor
    TrainAcq(TrainArgs),
    /// Binarize a trained sampler checkpoint into a mask file
    ExtractMask {
        /// Sampler checkpoint base path (without extension)
        #[arg(long)]
        sampler: PathBuf,
        /// Number of lines to keep
        #[arg(long)]
        budget: usize,
        /// Output mask JSON path
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 2: train the de-aliasing reconstructor with a fixed mask
    TrainRecon {
        #[command(flatten)]
        train: TrainArgs,
        /// Mask JSON file produced by make-mask or extract-mask
        #[arg(long)]
        mask: PathBuf,
    },
    /// Evaluate a trained reconstructor on the test split
    Eval {
        /// Dataset directory containing manifest.json
        #[arg(long)]
        data: PathBuf,
        /// Mask JSON file
        #[arg(long)]
        mask: PathBuf,
        /// Reconstructor checkpoint base path (without extension)
        #[arg(long)]
        weights: PathBuf,
        /// Output directory for report.csv and report.json
        #[arg(long)]
        out: PathBuf,
        /// Label recorded as the mask source (default: mask file stem)
        #[arg(long)]
        mask_label: Option<String>,
    },
    /// Export mask/reconstruction/error-map images (PGM) plus a metrics CSV
    ExportFigures {
        /// Dataset directory containing manifest.json
        #[arg(long)]
        data: PathBuf,
        /// Mask JSON file
        #[arg(long)]
        mask: PathBuf,
        /// Reconstructor checkpoint base path (without extension)
        #[arg(long)]
        weights: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Number of test slices to render (default 4)
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

fn verbose() -> bool {
    std::env::var("MCMR_VERBOSE").map(|v| !v.is_empty() && v != "0").unwrap_or(false)
}

fn note(msg: &str) {
    if verbose() {
        eprintln!("[mcmr] {msg}");
    }
}

fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<SlicePair>, Vec<SlicePair>, Vec<SlicePair>)> {
    let manifest = DatasetManifest::load(&dir.join("manifest.json"))?;
    let train = data::load_split(dir, &manifest.train)?;
    let val = data::load_split(dir, &manifest.val)?;
    let test = data::load_split(dir, &manifest.test)?;
    Ok((manifest, train, val, test))
}

fn cmd_synth(
    out: &Path,
    pairs: usize,
    size: usize,
    seed: u64,
    fractions: (f64, f64, f64),
) -> Result<()> {
    if pairs == 0 {
        return Err(Error::InvalidConfig("--pairs must be positive".into()));
    }
    let pair_dir = out.join("pairs");
    fs::create_dir_all(&pair_dir)?;
    let mut files = Vec::with_capacity(pairs);
    for i in 0..pairs {
        let pair_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let pair = data::generate_phantom_pair(size, size, pair_seed)?;
        let rel = format!("pairs/{}.mcmr", pair.id);
        data::write_pair(&pair, &out.join(&rel))?;
        files.push(rel);
    }
    let (train, val, test) = data::split(&files, fractions, seed)?;
    let manifest = DatasetManifest {
        version: 1,
        height: size,
        width: size,
        train,
        val,
        test,
        seed: Some(seed),
    };
    manifest.save(&out.join("manifest.json"))?;
    note(&format!("wrote {} pairs under {}", pairs, out.display()));
    Ok(())
}

fn cmd_make_mask(
    kind: &str,
    n: usize,
    budget: usize,
    out: &Path,
    center_fraction: Option<f64>,
    sigma: Option<f64>,
    seed: u64,
) -> Result<()> {
    let mask = match kind {
        "lowres" => masks::lowres_mask(n, budget)?,
        "equidistant" => masks::equidistant_mask(n, budget, center_fraction.unwrap_or(2.0 / 3.0))?,
        "gaussian" => masks::gaussian_mask(n, budget, sigma.unwrap_or(n as f64 / 6.0), seed)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown mask kind `{other}` (expected lowres, equidistant, or gaussian)"
            )))
        }
    };
    mask.save(out)?;
    Ok(())
}

fn cmd_train_acq(args: &TrainArgs) -> Result<()> {
    let (cfg, data_dir, out) = args.resolve()?;
    let (_, train, val, _) = load_dataset(&data_dir)?;
    note(&format!("stage 1: {} steps on {} slices", cfg.steps, train.len()));
    let (sampler, net, log) = train_stage1(&train, &val, &cfg)?;
    fs::create_dir_all(&out)?;
    save_sampler(&sampler, &out.join("sampler"))?;
    unet::save(&net, &out.join("recon_stage1"))?;
    log.write_csv(&out.join("log_stage1.csv"))?;
    if let Some(mask) = &log.final_mask {
        mask.save(&out.join("learned_mask.json"))?;
    }
    note(&format!("stage 1 done in {:.1}s", log.wall_clock_secs));
    Ok(())
}

fn cmd_extract_mask(sampler_base: &Path, budget: usize, out: &Path) -> Result<()> {
    let params = load_sampler(sampler_base)?;
    let mask = crate::sampler::extract_mask(&params, budget)?;
    mask.save(out)?;
    Ok(())
}

fn cmd_train_recon(args: &TrainArgs, mask_path: &Path) -> Result<()> {
    let (cfg, data_dir, out) = args.resolve()?;
    let mask = LineMask::load(mask_path)?;
    let (_, train, val, _) = load_dataset(&data_dir)?;
    note(&format!(
        "stage 2: {} steps, mask {} of {} lines",
        cfg.steps,
        mask.budget(),
        mask.n_lines()
    ));
    let (net, log) = train_stage2(&train, &val, &mask, &cfg)?;
    fs::create_dir_all(&out)?;
    unet::save(&net, &out.join("recon"))?;
    log.write_csv(&out.join("log_stage2.csv"))?;
    note(&format!("stage 2 done in {:.1}s", log.wall_clock_secs));
    Ok(())
}

fn cmd_eval(
    data_dir: &Path,
    mask_path: &Path,
    weights: &Path,
    out: &Path,
    mask_label: Option<&str>,
) -> Result<()> {
    let mask = LineMask::load(mask_path)?;
    let net = unet::load(weights)?;
    let (_, _, _, test) = load_dataset(data_dir)?;
    let label = mask_label
        .map(str::to_string)
        .or_else(|| mask_path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "mask".into());
    let multi = net.config.in_channels == 2;
    let report = evaluate(&net, &mask, &test, multi, &label)?;
    fs::create_dir_all(out)?;
    write_report_csv(&report, &out.join("report.csv"))?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "mean over {} slices: MAE {:.5}, PSNR {:.2} dB, SSIM {:.4} (R = {:.2})",
        report.per_slice.len(),
        report.mean_mae,
        report.mean_psnr_db,
        report.mean_ssim,
        report.acceleration
    );
    Ok(())
}

/// Renders the mask as an image: sampled rows white.
fn mask_image(mask: &LineMask, width: usize) -> ImageSlice {
    let mut img = ImageSlice::zeros(mask.n_lines(), width);
    for &row in mask.indices() {
        for x in 0..width {
            img.pixels_mut()[row * width + x] = 1.0;
        }
    }
    img
}

fn cmd_export_figures(
    data_dir: &Path,
    mask_path: &Path,
    weights: &Path,
    out: &Path,
    count: usize,
) -> Result<()> {
    let mask = LineMask::load(mask_path)?;
    let net = unet::load(weights)?;
    let (manifest, _, _, test) = load_dataset(data_dir)?;
    let multi = net.config.in_channels == 2;
    fs::create_dir_all(out)?;
    write_pgm16(&mask_image(&mask, manifest.width), &out.join("mask.pgm"))?;
    for pair in test.iter().take(count) {
        let (zf, recon) = reconstruct_slice(&net, &mask, pair, multi)?;
        let err = error_map(&recon, &pair.t2)?;
        write_pgm16(&pair.t2, &out.join(format!("{}_gt.pgm", pair.id)))?;
        write_pgm16(&pair.t1, &out.join(format!("{}_ref.pgm", pair.id)))?;
        write_pgm16(&zf, &out.join(format!("{}_zerofilled.pgm", pair.id)))?;
        write_pgm16(&recon, &out.join(format!("{}_recon.pgm", pair.id)))?;
        write_pgm16(&err, &out.join(format!("{}_error.pgm", pair.id)))?;
    }
    let label = mask_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mask".into());
    let report = evaluate(&net, &mask, &test, multi, &label)?;
    write_report_csv(&report, &out.join("report.csv"))?;
    Ok(())
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::Io(_) => EXIT_IO,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, pairs, size, seed, train_frac, val_frac, test_frac } => {
            cmd_synth(&out, pairs, size, seed, (train_frac, val_frac, test_frac))
        }
        Command::MakeMask { kind, n, budget, out, center_fraction, sigma, seed } => {
            cmd_make_mask(&kind, n, budget, &out, center_fraction, sigma, seed)
        }
        Command::TrainAcq(args) => cmd_train_acq(&args),
        Command::ExtractMask { sampler, budget, out } => cmd_extract_mask(&sampler, budget, &out),
        Command::TrainRecon { train, mask } => cmd_train_recon(&train, &mask),
        Command::Eval { data, mask, weights, out, mask_label } => {
            cmd_eval(&data, &mask, &weights, &out, mask_label.as_deref())
        }
        Command::ExportFigures { data, mask, weights, out, count } => {
            cmd_export_figures(&data, &mask, &weights, &out, count)
        }
    }
}

/// Parses argv and runs one subcommand; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
