//! Image tensors and the cube sampling that turns them into tensor blocks.
//!
//! An image is first replicated into `r` shifted copies (a `height×width×r`
//! tensor). Folding cuts `a×a×a` cubes out of that tensor and lays each cube
//! out as an `a²×a` slab: cube entry `(i, j, k)` goes to row `i + a·j`, tube
//! index `k`. Slabs become the lateral slices of a `d×N×n` block. Unfolding
//! scatters slabs back and averages overlaps.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{Dims, Tensor3};

/// Number of derivative feature volumes produced by [`extract_features`].
pub const FEATURE_COUNT: usize = 6;

/// Identifier of the feature filter set written into model files.
pub const FILTER_SET_DERIVATIVES: u8 = 0;

/// Cube sampling parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldConfig {
    /// Cube edge `a`; blocks have `d = a²` rows and tube length `n = a`.
    pub cube: usize,
    /// Pixel offsets `(dx, dy)` of the shifted copies; `r = shifts.len()`.
    pub shifts: Vec<(i8, i8)>,
    /// Downsampling rate `c`.
    pub factor: usize,
    /// Maximum number of cubes `N`; 0 samples every stride-1 position.
    pub sample_budget: usize,
    pub seed: u32,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            cube: 4,
            shifts: default_shifts(7),
            factor: 2,
            sample_budget: 10_000,
            seed: 1,
        }
    }
}

impl FoldConfig {
    pub fn shift_count(&self) -> usize {
        self.shifts.len()
    }

    /// Rows of a high-resolution block, `a²`.
    pub fn patch_dim(&self) -> usize {
        self.cube * self.cube
    }

    /// Rows of a low-resolution feature block, `6a²`.
    pub fn feature_dim(&self) -> usize {
        FEATURE_COUNT * self.patch_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.cube < 2 {
            return Err(Error::Config(format!("a = {} violates a >= 2", self.cube)));
        }
        if self.shifts.len() < self.cube {
            return Err(Error::Config(format!(
                "r = {} violates r >= a = {}",
                self.shifts.len(),
                self.cube
            )));
        }
        if self.factor < 2 {
            return Err(Error::Config(format!("c = {} violates c >= 2", self.factor)));
        }
        if self.shifts[0] != (0, 0) {
            return Err(Error::Config("first shift must be (0, 0)".into()));
        }
        for (i, s) in self.shifts.iter().enumerate() {
            if self.shifts[..i].contains(s) {
                return Err(Error::Config(format!("duplicate shift {s:?}")));
            }
        }
        Ok(())
    }
}

/// The standard shift set: the origin, the four axis neighbours, the two main
/// diagonals, then the anti-diagonals, continuing ring by ring outward.
///
/// For `r = 7` this is `(0,0) (1,0) (0,1) (-1,0) (0,-1) (1,1) (-1,-1)`.
pub fn default_shifts(r: usize) -> Vec<(i8, i8)> {
    let mut out = vec![(0, 0)];
    let mut ring: i8 = 1;
    while out.len() < r {
        let s = ring;
        let candidates = [
            (s, 0),
            (0, s),
            (-s, 0),
            (0, -s),
            (s, s),
            (-s, -s),
            (s, -s),
            (-s, s),
        ];
        out.extend(candidates.iter().copied().take(r - out.len()));
        ring += 1;
    }
    out
}

/// Stacks `r` translated copies of `x` into a `height×width×r` tensor.
///
/// Copy `k` is `x` moved by `shifts[k] = (dx, dy)` (dx to the right, dy
/// down) with edge replication filling the vacated border.
pub fn shift_concat(x: &GrayImage, shifts: &[(i8, i8)]) -> Tensor3 {
    Tensor3::from_fn((x.height(), x.width(), shifts.len()), |row, col, k| {
        let (dx, dy) = shifts[k];
        x.get_clamped(row as isize - dy as isize, col as isize - dx as isize)
    })
}

/// Position of one cube: source image and the cube's corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CubeOrigin {
    pub image: usize,
    pub row: usize,
    pub col: usize,
    pub slice: usize,
}

/// A `d×N×n` tensor block together with the cube origin of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlock {
    pub block: Tensor3,
    pub origins: Vec<CubeOrigin>,
    pub cube: usize,
}

impl TensorBlock {
    pub fn samples(&self) -> usize {
        self.origins.len()
    }
}

fn check_fits(dims: Dims, a: usize) -> Result<()> {
    let (p, q, r) = dims;
    if p < a || q < a || r < a {
        return Err(Error::Geometry {
            expected: format!("every dimension >= cube size {a}"),
            actual: format!("{p}x{q}x{r}"),
        });
    }
    Ok(())
}

/// Every stride-1 cube origin of one image tensor, lexicographic in
/// `(row, col, slice)`.
pub fn enumerate_origins(dims: Dims, a: usize, image: usize) -> Result<Vec<CubeOrigin>> {
    check_fits(dims, a)?;
    let (p, q, r) = dims;
    let mut out = Vec::with_capacity((p - a + 1) * (q - a + 1) * (r - a + 1));
    for row in 0..=p - a {
        for col in 0..=q - a {
            for slice in 0..=r - a {
                out.push(CubeOrigin {
                    image,
                    row,
                    col,
                    slice,
                });
            }
        }
    }
    Ok(out)
}

/// Uniform draw of `budget` origins without replacement, kept in their
/// original order. A zero or oversized budget keeps everything.
pub fn select_origins(all: Vec<CubeOrigin>, budget: usize, seed: u32) -> Vec<CubeOrigin> {
    if budget == 0 || budget >= all.len() {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut picked = index::sample(&mut rng, all.len(), budget).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

/// Cuts the cubes at `origins` out of `volumes` (indexed by
/// `CubeOrigin::image`).
pub fn fold_at(volumes: &[&Tensor3], origins: &[CubeOrigin], a: usize) -> Result<TensorBlock> {
    if origins.is_empty() {
        return Err(Error::Degenerate("no cubes to fold".into()));
    }
    for o in origins {
        let vol = volumes.get(o.image).ok_or(Error::IndexOutOfRange {
            index: o.image,
            len: volumes.len(),
        })?;
        let (p, q, r) = vol.dims();
        if o.row + a > p || o.col + a > q || o.slice + a > r {
            return Err(Error::Geometry {
                expected: format!("cube of {a} at {o:?} inside the volume"),
                actual: format!("{p}x{q}x{r}"),
            });
        }
    }
    let mut block = Tensor3::zeros(a * a, origins.len(), a);
    for (s, o) in origins.iter().enumerate() {
        let vol = volumes[o.image];
        for k in 0..a {
            for j in 0..a {
                for i in 0..a {
                    block.set(i + a * j, s, k, vol.get(o.row + i, o.col + j, o.slice + k));
                }
            }
        }
    }
    Ok(TensorBlock {
        block,
        origins: origins.to_vec(),
        cube: a,
    })
}

/// Folds a single image tensor, honouring the sample budget of `cfg`.
pub fn fold(x: &Tensor3, cfg: &FoldConfig) -> Result<TensorBlock> {
    let all = enumerate_origins(x.dims(), cfg.cube, 0)?;
    let origins = select_origins(all, cfg.sample_budget, cfg.seed);
    fold_at(&[x], &origins, cfg.cube)
}

/// Folds a single image tensor at every stride-1 position.
pub fn fold_exhaustive(x: &Tensor3, a: usize) -> Result<TensorBlock> {
    let origins = enumerate_origins(x.dims(), a, 0)?;
    fold_at(&[x], &origins, a)
}

/// Scatters the cubes of a single-image block back into a `dims` tensor.
///
/// Pixels covered by several cubes get the mean of all contributions, taken
/// as a running mean so that identical contributions reproduce the value
/// exactly. Pixels no cube touches are copied from `fallback`.
pub fn unfold(t: &TensorBlock, dims: Dims, fallback: Option<&Tensor3>) -> Result<Tensor3> {
    let a = t.cube;
    let (p, q, r) = dims;
    if t.block.dims() != (a * a, t.origins.len(), a) {
        return Err(Error::InvalidShape(format!(
            "block {:?} does not match {} cubes of edge {a}",
            t.block.dims(),
            t.origins.len()
        )));
    }
    if let Some(fb) = fallback {
        if fb.dims() != dims {
            return Err(Error::DimensionMismatch {
                op: "unfold fallback",
                left: dims,
                right: fb.dims(),
            });
        }
    }
    let mut out = Tensor3::zeros(p, q, r);
    let mut counts = vec![0u32; p * q * r];
    for (s, o) in t.origins.iter().enumerate() {
        if o.image != t.origins[0].image {
            return Err(Error::InvalidShape("unfold expects cubes from a single image".into()));
        }
        if o.row + a > p || o.col + a > q || o.slice + a > r {
            return Err(Error::Geometry {
                expected: format!("cube at {o:?} inside {p}x{q}x{r}"),
                actual: format!("cube edge {a}"),
            });
        }
        for k in 0..a {
            for j in 0..a {
                for i in 0..a {
                    let idx = out.index(o.row + i, o.col + j, o.slice + k);
                    counts[idx] += 1;
                    let v = t.block.get(i + a * j, s, k);
                    let data = out.data_mut();
                    data[idx] += (v - data[idx]) / counts[idx] as f64;
                }
            }
        }
    }
    for k in 0..r {
        for i in 0..p {
            for j in 0..q {
                let idx = out.index(i, j, k);
                if counts[idx] == 0 {
                    let fb = fallback.ok_or(Error::UncoveredPixel {
                        row: i,
                        col: j,
                        slice: k,
                    })?;
                    out.data_mut()[idx] = fb.get(i, j, k);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
    Slice,
}

/// Correlates `x` with a centered odd-length filter along `axis`, replicating
/// edges.
fn filter_axis(x: &Tensor3, taps: &[f64], axis: Axis) -> Tensor3 {
    let (p, q, r) = x.dims();
    let half = (taps.len() / 2) as isize;
    Tensor3::from_fn(x.dims(), |i, j, k| {
        taps.iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(t, w)| {
                let off = t as isize - half;
                let v = match axis {
                    Axis::Row => x.get((i as isize + off).clamp(0, p as isize - 1) as usize, j, k),
                    Axis::Col => x.get(i, (j as isize + off).clamp(0, q as isize - 1) as usize, k),
                    Axis::Slice => x.get(i, j, (k as isize + off).clamp(0, r as isize - 1) as usize),
                };
                w * v
            })
            .sum()
    })
}

const FIRST_DERIVATIVE: [f64; 3] = [-1.0, 0.0, 1.0];
const SECOND_DERIVATIVE: [f64; 5] = [1.0, 0.0, -2.0, 0.0, 1.0];

/// The six derivative feature volumes of an upsampled low-resolution image
/// tensor, ordered `[d1x, d1y, d2x, d2y, d1z, d2z]` where x runs along
/// columns, y along rows and z along the shift axis. `d1 = [-1, 0, 1]`,
/// `d2 = [1, 0, -2, 0, 1]`, edges replicated.
pub fn extract_features(x: &Tensor3) -> Vec<Tensor3> {
    vec![
        filter_axis(x, &FIRST_DERIVATIVE, Axis::Col),
        filter_axis(x, &FIRST_DERIVATIVE, Axis::Row),
        filter_axis(x, &SECOND_DERIVATIVE, Axis::Col),
        filter_axis(x, &SECOND_DERIVATIVE, Axis::Row),
        filter_axis(x, &FIRST_DERIVATIVE, Axis::Slice),
        filter_axis(x, &SECOND_DERIVATIVE, Axis::Slice),
    ]
}

/// Folds each feature volume at `origins` and stacks the blocks along the
/// first dimension, giving `6a²` rows.
pub fn fold_features(
    features: &[Vec<Tensor3>],
    origins: &[CubeOrigin],
    a: usize,
) -> Result<TensorBlock> {
    let mut blocks = Vec::with_capacity(FEATURE_COUNT);
    for f in 0..FEATURE_COUNT {
        let vols: Vec<&Tensor3> = features.iter().map(|per_image| &per_image[f]).collect();
        blocks.push(fold_at(&vols, origins, a)?.block);
    }
    let refs: Vec<&Tensor3> = blocks.iter().collect();
    Ok(TensorBlock {
        block: Tensor3::vstack(&refs)?,
        origins: origins.to_vec(),
        cube: a,
    })
}
