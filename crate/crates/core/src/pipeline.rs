//! Training and generation drivers.
//!
//! High-resolution cubes are learned as residuals over the bicubic
//! reconstruction of their own low-resolution version. Generation therefore
//! starts from the upsampled input and adds whatever detail the recovery
//! dictionary predicts; with all codes zero the output is the upsampled
//! input itself.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::dict::{stack_problem, train_dictionaries, DictionaryPair, LearnConfig};
use crate::error::{Error, Result};
use crate::fold::{
    enumerate_origins, extract_features, fold_at, fold_exhaustive, fold_features, select_origins,
    shift_concat, unfold, FoldConfig, TensorBlock, FILTER_SET_DERIVATIVES,
};
use crate::image::{downsample, upsample, GrayImage};
use crate::metrics::{mae, psnr};
use crate::model::{SRModel, FORMAT_VERSION};
use crate::sparse::{fista, SparseCodeConfig};
use crate::tensor::{tproduct, Tensor3};

/// Largest residual magnitude still treated as no high-frequency content;
/// resampling a constant image leaves rounding noise of a few ulp.
pub const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Everything `train_model` needs.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub images: Vec<GrayImage>,
    /// Cube geometry, shift set, rate `c`, budget `N` and the seed.
    pub fold: FoldConfig,
    /// Inner coding settings; `lambda` and `max_iter` (`S`) live here.
    pub sparse: SparseCodeConfig,
    pub atoms: usize,
    pub outer_iters: usize,
    /// Written after training when set.
    pub out: Option<PathBuf>,
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::Config("no training images".into()));
        }
        self.fold.validate()?;
        self.sparse.validate()?;
        if self.atoms == 0 {
            return Err(Error::Config("m = 0 violates m >= 1".into()));
        }
        if self.outer_iters == 0 {
            return Err(Error::Config("T = 0 violates T >= 1".into()));
        }
        let (a, c) = (self.fold.cube, self.fold.factor);
        for (i, img) in self.images.iter().enumerate() {
            let (w, h) = (img.width(), img.height());
            if w % c != 0 || h % c != 0 || w / c < a || h / c < a {
                return Err(Error::Geometry {
                    expected: format!(
                        "image {i} with sides divisible by c = {c} and at least {} pixels",
                        a * c
                    ),
                    actual: format!("{w}x{h}"),
                });
            }
        }
        Ok(())
    }
}

/// A trained model plus the in-memory training record.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SRModel,
    pub pair: DictionaryPair,
}

/// High-resolution residual volume and low-resolution feature volumes of
/// one training image.
struct Prepared {
    residual: Tensor3,
    features: Vec<Tensor3>,
}

fn prepare(img: &GrayImage, cfg: &FoldConfig) -> Result<Prepared> {
    let high = shift_concat(img, &cfg.shifts);
    let low_up = upsample(&downsample(img, cfg.factor)?, cfg.factor)?;
    let low = shift_concat(&low_up, &cfg.shifts);
    Ok(Prepared {
        residual: high.try_sub(&low)?,
        features: extract_features(&low),
    })
}

pub fn train_model(spec: &TrainSpec) -> Result<TrainedModel> {
    spec.validate()?;
    let cfg = &spec.fold;
    let prepared: Vec<Prepared> = spec
        .images
        .par_iter()
        .map(|img| prepare(img, cfg))
        .collect::<Result<_>>()?;

    let mut all = Vec::new();
    for (i, p) in prepared.iter().enumerate() {
        all.extend(enumerate_origins(p.residual.dims(), cfg.cube, i)?);
    }
    let origins = select_origins(all, cfg.sample_budget, cfg.seed);
    let residuals: Vec<&Tensor3> = prepared.iter().map(|p| &p.residual).collect();
    let th = fold_at(&residuals, &origins, cfg.cube)?;
    if th.block.max_abs() <= DEGENERATE_RESIDUAL {
        return Err(Error::Degenerate(
            "every high-resolution block is zero once the low-resolution content is removed".into(),
        ));
    }
    let features: Vec<Vec<Tensor3>> = prepared.into_iter().map(|p| p.features).collect();
    let tl = fold_features(&features, &origins, cfg.cube)?;
    info!("training on {} cubes from {} images", origins.len(), spec.images.len());

    let problem = stack_problem(&th, &tl, spec.sparse.lambda)?;
    let learn = LearnConfig {
        atoms: spec.atoms,
        outer_iters: spec.outer_iters,
        sparse: spec.sparse.clone(),
        seed: cfg.seed,
    };
    let pair = train_dictionaries(&problem, &learn)?;
    for w in &pair.meta.warnings {
        warn!("{w}");
    }
    let model = SRModel {
        version: FORMAT_VERSION,
        cube: cfg.cube,
        shifts: cfg.shifts.clone(),
        factor: cfg.factor,
        seed: cfg.seed,
        lambda: spec.sparse.lambda,
        filter_set: FILTER_SET_DERIVATIVES,
        dh: pair.dh.clone(),
        dl: pair.dl.clone(),
    };
    if let Some(path) = &spec.out {
        model.save(path)?;
    }
    Ok(TrainedModel { model, pair })
}

/// Coding settings used at generation time for `model`: the stored `λ`
/// with default iteration count and tolerance.
pub fn generation_config(model: &SRModel) -> SparseCodeConfig {
    SparseCodeConfig {
        lambda: model.lambda,
        ..SparseCodeConfig::default()
    }
}

/// Upscales `low` by the model's factor.
pub fn super_resolve(model: &SRModel, low: &GrayImage) -> Result<GrayImage> {
    super_resolve_with(model, low, &generation_config(model))
}

pub fn super_resolve_with(model: &SRModel, low: &GrayImage, coding: &SparseCodeConfig) -> Result<GrayImage> {
    model.validate()?;
    let (a, c) = (model.cube, model.factor);
    let (w, h) = (low.width() * c, low.height() * c);
    if w < a || h < a {
        return Err(Error::Geometry {
            expected: format!("upscaled size of at least {a}x{a}"),
            actual: format!("{w}x{h} from a {}x{} input", low.width(), low.height()),
        });
    }
    let up = upsample(low, c)?;
    let base = shift_concat(&up, &model.shifts);
    let features = extract_features(&base);
    let origins = fold_exhaustive(&base, a)?.origins;
    let tl = fold_features(&[features], &origins, a)?;
    let codes = fista(&model.dl, &tl.block, coding)?;
    let detail_block = TensorBlock {
        block: tproduct(&model.dh, &codes.coeffs)?,
        origins,
        cube: a,
    };
    let detail = unfold(&detail_block, base.dims(), None)?;
    let values = (0..h)
        .flat_map(|row| (0..w).map(move |col| (row, col)))
        .map(|(row, col)| up.get(row, col) + detail.get(row, col, 0))
        .collect();
    GrayImage::clamped(w, h, values)
}

/// Provider of low-resolution inputs for generation.
pub trait LowResSource {
    /// Next `(name, image)` pair, or `None` when exhausted.
    fn next_image(&mut self) -> Option<Result<(String, GrayImage)>>;
}

/// Every PNG and PGM file of a directory, in file name order.
pub struct DirectorySource {
    paths: std::vec::IntoIter<PathBuf>,
}

impl DirectorySource {
    pub fn open(dir: &Path) -> Result<Self> {
        Ok(DirectorySource {
            paths: list_images(dir)?.into_iter(),
        })
    }
}

impl LowResSource for DirectorySource {
    fn next_image(&mut self) -> Option<Result<(String, GrayImage)>> {
        let path = self.paths.next()?;
        Some(GrayImage::load(&path).map(|img| (file_name(&path), img)))
    }
}

/// Runs [`super_resolve`] over a whole source.
pub fn super_resolve_source(model: &SRModel, source: &mut dyn LowResSource) -> Result<Vec<(String, GrayImage)>> {
    let mut out = Vec::new();
    while let Some(item) = source.next_image() {
        let (name, low) = item?;
        out.push((name, super_resolve(model, &low)?));
    }
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Sorted PNG/PGM paths in `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_images(dir: &Path) -> Result<Vec<(String, GrayImage)>> {
    list_images(dir)?
        .iter()
        .map(|p| GrayImage::load(p).map(|img| (file_name(p), img)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub name: String,
    pub psnr: f64,
    pub mae: f64,
    pub psnr_bicubic: f64,
    pub mae_bicubic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    pub mean_psnr: f64,
    pub mean_mae: f64,
    pub mean_psnr_bicubic: f64,
    pub mean_mae_bicubic: f64,
}

/// Downsamples each ground-truth image, super-resolves it, and scores both
/// the result and plain bicubic upsampling against the original.
pub fn eval_model(model: &SRModel, truths: &[(String, GrayImage)]) -> Result<EvalReport> {
    if truths.is_empty() {
        return Err(Error::Degenerate("no ground-truth images to evaluate".into()));
    }
    let entries: Vec<EvalEntry> = truths
        .par_iter()
        .map(|(name, truth)| {
            let low = downsample(truth, model.factor)?;
            let sr = super_resolve(model, &low)?;
            let bic = upsample(&low, model.factor)?;
            Ok(EvalEntry {
                name: name.clone(),
                psnr: psnr(&sr, truth)?,
                mae: mae(&sr, truth)?,
                psnr_bicubic: psnr(&bic, truth)?,
                mae_bicubic: mae(&bic, truth)?,
            })
        })
        .collect::<Result<_>>()?;
    let n = entries.len() as f64;
    let mean = |f: fn(&EvalEntry) -> f64| entries.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        mean_psnr: mean(|e| e.psnr),
        mean_mae: mean(|e| e.mae),
        mean_psnr_bicubic: mean(|e| e.psnr_bicubic),
        mean_mae_bicubic: mean(|e| e.mae_bicubic),
        entries,
    })
}
