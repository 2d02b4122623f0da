use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::fold::{default_shifts, FoldConfig};
use crate::image::GrayImage;
use crate::model::SRModel;
use crate::pipeline::{eval_model, load_images, super_resolve, train_model, TrainSpec};
use crate::sparse::{LipschitzStrategy, SparseCodeConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const CONFIG_HELP: &str = "\
Configuration file: one `key = value` per line, `#` starts a comment.
Keys and defaults:
  a          = 4          cube edge (a >= 2)
  r          = 7          number of shifted copies (r >= a)
  c          = 2          downsampling rate (c >= 2)
  m          = 128        dictionary atoms
  n          = 4          tube length, must equal a
  lambda     = 0.05       sparsity weight (> 0)
  T          = 10         outer training iterations
  S          = 50         inner FISTA iterations
  N          = 10000      sampled cubes, 0 = every position
  seed       = 1          single source of randomness
  tol        = 1e-7       FISTA relative stopping tolerance
  eta        = 1          step safety factor (>= 1)
  lipschitz  = spectral   spectral | frobenius
Environment: TSR_THREADS caps worker threads (0 = automatic).";

#[derive(Debug, Parser)]
#[command(name = "tsr", version, about = "Tensor sparse-coding image super-resolution", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a dictionary pair from a directory of high-resolution images.
    #[command(after_help = CONFIG_HELP)]
    Train {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Upscale one low-resolution image.
    #[command(after_help = CONFIG_HELP)]
    Superres {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score a model against ground-truth images next to a bicubic baseline.
    #[command(after_help = CONFIG_HELP)]
    Eval {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        truth_dir: PathBuf,
    },
    /// Print the header, atom norms and stored training settings of a model.
    #[command(after_help = CONFIG_HELP)]
    Inspect {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub a: usize,
    pub r: usize,
    pub c: usize,
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub samples: usize,
    pub seed: u32,
    pub tol: f64,
    pub eta: f64,
    pub lipschitz: LipschitzStrategy,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            a: 4,
            r: 7,
            c: 2,
            m: 128,
            n: 4,
            lambda: 0.05,
            outer_iters: 10,
            inner_iters: 50,
            samples: 10_000,
            seed: 1,
            tol: 1e-7,
            eta: 1.0,
            lipschitz: LipschitzStrategy::Spectral,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, Error> {
    raw.parse()
        .map_err(|_| Error::Config(format!("cannot parse value {raw:?} for key {key}")))
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut cfg = CliConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            match key {
                "a" => cfg.a = parse_value(key, value)?,
                "r" => cfg.r = parse_value(key, value)?,
                "c" => cfg.c = parse_value(key, value)?,
                "m" => cfg.m = parse_value(key, value)?,
                "n" => cfg.n = parse_value(key, value)?,
                "lambda" => cfg.lambda = parse_value(key, value)?,
                "T" => cfg.outer_iters = parse_value(key, value)?,
                "S" => cfg.inner_iters = parse_value(key, value)?,
                "N" => cfg.samples = parse_value(key, value)?,
                "seed" => cfg.seed = parse_value(key, value)?,
                "tol" => cfg.tol = parse_value(key, value)?,
                "eta" => cfg.eta = parse_value(key, value)?,
                "lipschitz" => cfg.lipschitz = value.parse()?,
                other => return Err(Error::Config(format!("line {}: unknown key {other}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fold(&self) -> FoldConfig {
        FoldConfig {
            cube: self.a,
            shifts: default_shifts(self.r),
            factor: self.c,
            sample_budget: self.samples,
            seed: self.seed,
        }
    }

    pub fn sparse(&self) -> SparseCodeConfig {
        SparseCodeConfig {
            lambda: self.lambda,
            max_iter: self.inner_iters,
            tol: self.tol,
            lipschitz: self.lipschitz,
            eta: self.eta,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.r > 127 {
            return Err(Error::Config(format!("r = {} violates r <= 127", self.r)));
        }
        self.fold().validate()?;
        if self.n != self.a {
            return Err(Error::Config(format!("n = {} violates n = a = {}", self.n, self.a)));
        }
        if self.m == 0 {
            return Err(Error::Config("m = 0 violates m >= 1".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::Config("T = 0 violates T >= 1".into()));
        }
        self.sparse().validate()
    }
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(format!("{what} {} does not exist", path.display())))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("TSR_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("TSR_THREADS = {raw:?} is not a thread count")))?;
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn cmd_train(config: &Path, images: &Path, out: &Path, stdout: &mut String) -> Result<(), Failure> {
    require(config, "config file")?;
    require(images, "image directory")?;
    let text = fs::read_to_string(config).map_err(Error::from)?;
    let cfg = CliConfig::parse(&text).map_err(|e| Failure::usage(e.to_string()))?;
    let images: Vec<GrayImage> = load_images(images)?.into_iter().map(|(_, img)| img).collect();
    if images.is_empty() {
        return Err(Failure::usage("image directory contains no PNG or PGM files"));
    }
    let spec = TrainSpec {
        images,
        fold: cfg.fold(),
        sparse: cfg.sparse(),
        atoms: cfg.m,
        outer_iters: cfg.outer_iters,
        out: Some(out.to_path_buf()),
    };
    let trained = train_model(&spec)?;
    let trace = &trained.pair.meta.outer_trace;
    for (t, value) in trace.iter().enumerate().skip(1) {
        let _ = writeln!(stdout, "outer {t}/{}  objective {value:.9e}", cfg.outer_iters);
    }
    for w in &trained.pair.meta.warnings {
        let _ = writeln!(stdout, "note: {w}");
    }
    let _ = writeln!(stdout, "model written to {}", out.display());
    Ok(())
}

fn cmd_superres(model: &Path, input: &Path, out: &Path, stdout: &mut String) -> Result<(), Failure> {
    require(model, "model file")?;
    require(input, "input image")?;
    let model = SRModel::load(model)?;
    let low = GrayImage::load(input)?;
    let start = Instant::now();
    let high = super_resolve(&model, &low)?;
    high.save(out)?;
    let _ = writeln!(
        stdout,
        "{}x{} -> {}x{} in {:.3} s",
        low.width(),
        low.height(),
        high.width(),
        high.height(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_eval(model: &Path, truth_dir: &Path, stdout: &mut String) -> Result<(), Failure> {
    require(model, "model file")?;
    require(truth_dir, "ground-truth directory")?;
    let model = SRModel::load(model)?;
    let truths = load_images(truth_dir)?;
    let report = eval_model(&model, &truths)?;
    let _ = writeln!(
        stdout,
        "{:<24} {:>10} {:>12} {:>10} {:>12}",
        "image", "psnr_dB", "bicubic_dB", "mae", "bicubic_mae"
    );
    for e in &report.entries {
        let _ = writeln!(
            stdout,
            "{:<24} {:>10.4} {:>12.4} {:>10.6} {:>12.6}",
            e.name, e.psnr, e.psnr_bicubic, e.mae, e.mae_bicubic
        );
    }
    let _ = writeln!(
        stdout,
        "{:<24} {:>10.4} {:>12.4} {:>10.6} {:>12.6}",
        "mean", report.mean_psnr, report.mean_psnr_bicubic, report.mean_mae, report.mean_mae_bicubic
    );
    Ok(())
}

fn cmd_inspect(model: &Path, stdout: &mut String) -> Result<(), Failure> {
    require(model, "model file")?;
    let m = SRModel::load(model)?;
    let (lo, mean, hi) = m.atom_norm_stats();
    let shifts: Vec<String> = m.shifts.iter().map(|(dx, dy)| format!("({dx},{dy})")).collect();
    let _ = writeln!(stdout, "format version {}", m.version);
    let _ = writeln!(
        stdout,
        "a={} r={} c={} m={} n={} d_h={} d_l={}",
        m.cube,
        m.shifts.len(),
        m.factor,
        m.atoms(),
        m.tube_len(),
        m.dh.n1(),
        m.dl.n1()
    );
    let _ = writeln!(stdout, "shifts {}", shifts.join(" "));
    let _ = writeln!(stdout, "filter set {}", m.filter_set);
    let _ = writeln!(stdout, "atom norm^2 min={lo:.12} mean={mean:.12} max={hi:.12}");
    let _ = writeln!(stdout, "training lambda={} seed={}", m.lambda, m.seed);
    Ok(())
}

/// Folds a clap error into one line: the message plus the usage string.
fn one_line_usage(err: &clap::Error) -> String {
    let text = err.render().to_string();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().unwrap_or("invalid arguments").to_string();
    match lines.find(|l| l.starts_with("Usage:")) {
        Some(usage) => format!("{first} ({usage})"),
        None => first,
    }
}

/// Runs the command line and returns `(exit code, stdout text, stderr line)`.
pub fn run_captured<I, T>(args: I) -> (i32, String, Option<String>)
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => return (0, e.render().to_string(), None),
        Err(e) => return (EXIT_USAGE, String::new(), Some(one_line_usage(&e))),
    };
    let mut stdout = String::new();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Train { config, images, out } => cmd_train(config, images, out, &mut stdout),
        Command::Superres { model, input, out } => cmd_superres(model, input, out, &mut stdout),
        Command::Eval { model, truth_dir } => cmd_eval(model, truth_dir, &mut stdout),
        Command::Inspect { model } => cmd_inspect(model, &mut stdout),
    });
    match result {
        Ok(()) => (0, stdout, None),
        Err(f) => (f.code, stdout, Some(f.message.replace('\n', " "))),
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let (code, out, err) = run_captured(std::env::args_os());
    print!("{out}");
    if let Some(line) = err {
        eprintln!("error: {}", line.trim_start_matches("error: "));
    }
    code
}
