//! Binary model file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TSR1"
//! u32 version
//! u32 a, r, c, m, n, d_h, d_l, seed
//! f64 lambda
//! r × (i8 dx, i8 dy)          shift set
//! u8  filter set id           0 = six derivative filters
//! f64 × d_h·m·n               dh, slice-major then rows then columns
//! f64 × d_l·m·n               dl, same order
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fold::{FoldConfig, FEATURE_COUNT, FILTER_SET_DERIVATIVES};
use crate::tensor::Tensor3;

pub const MAGIC: &[u8; 4] = b"TSR1";
pub const FORMAT_VERSION: u32 = 1;

/// A trained dictionary pair together with everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct SRModel {
    pub version: u32,
    pub cube: usize,
    pub shifts: Vec<(i8, i8)>,
    pub factor: usize,
    pub seed: u32,
    pub lambda: f64,
    pub filter_set: u8,
    /// `d_h×m×n` recovery dictionary.
    pub dh: Tensor3,
    /// `d_l×m×n` feature dictionary.
    pub dl: Tensor3,
}

impl SRModel {
    pub fn atoms(&self) -> usize {
        self.dh.n2()
    }

    pub fn tube_len(&self) -> usize {
        self.dh.n3()
    }

    /// Fold settings for generation (exhaustive sampling).
    pub fn fold_config(&self) -> FoldConfig {
        FoldConfig {
            cube: self.cube,
            shifts: self.shifts.clone(),
            factor: self.factor,
            sample_budget: 0,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fold_config().validate()?;
        let a = self.cube;
        let expect_h = (a * a, self.dh.n2(), a);
        let expect_l = (FEATURE_COUNT * a * a, self.dh.n2(), a);
        if self.dh.dims() != expect_h || self.dl.dims() != expect_l {
            return Err(Error::Format(format!(
                "dictionary shapes {:?} / {:?} do not match cube size {a}",
                self.dh.dims(),
                self.dl.dims()
            )));
        }
        if self.filter_set != FILTER_SET_DERIVATIVES {
            return Err(Error::Format(format!("unknown filter set {}", self.filter_set)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Format(format!("invalid lambda {}", self.lambda)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header_u32 = |v: usize, name: &str| -> Result<u32> {
            u32::try_from(v).map_err(|_| Error::Format(format!("{name} = {v} does not fit in u32")))
        };
        let mut out = Vec::with_capacity(64 + 8 * (self.dh.data().len() + self.dl.data().len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        for (v, name) in [
            (self.cube, "a"),
            (self.shifts.len(), "r"),
            (self.factor, "c"),
            (self.atoms(), "m"),
            (self.tube_len(), "n"),
            (self.dh.n1(), "d_h"),
            (self.dl.n1(), "d_l"),
        ] {
            out.extend_from_slice(&header_u32(v, name)?.to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        for &(dx, dy) in &self.shifts {
            out.extend_from_slice(&dx.to_le_bytes());
            out.extend_from_slice(&dy.to_le_bytes());
        }
        out.push(self.filter_set);
        for v in self.dh.data().iter().chain(self.dl.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let mut dims = [0usize; 7];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let [a, shift_count, factor, m, n, d_h, d_l] = dims;
        let seed = r.u32()?;
        let lambda = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let mut shifts = Vec::with_capacity(shift_count);
        for _ in 0..shift_count {
            let pair = r.take(2)?;
            shifts.push((pair[0] as i8, pair[1] as i8));
        }
        let filter_set = r.take(1)?[0];
        let payload = |rows: usize| rows.checked_mul(m).and_then(|v| v.checked_mul(n));
        let (len_h, len_l) = match (payload(d_h), payload(d_l)) {
            (Some(h), Some(l)) => (h, l),
            _ => return Err(Error::Format("payload size overflows".into())),
        };
        let expected = r
            .pos
            .checked_add((len_h + len_l).saturating_mul(8))
            .and_then(|v| v.checked_add(4));
        if expected != Some(bytes.len()) {
            return Err(Error::Format(format!(
                "file is {} bytes, header declares {}",
                bytes.len(),
                expected.map_or("an impossible size".to_string(), |v| v.to_string())
            )));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Checksum);
        }
        let mut floats = |count: usize| -> Result<Vec<f64>> {
            let raw = r.take(count * 8)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let dh = Tensor3::from_vec((d_h, m, n), floats(len_h)?).map_err(|e| Error::Format(e.to_string()))?;
        let dl = Tensor3::from_vec((d_l, m, n), floats(len_l)?).map_err(|e| Error::Format(e.to_string()))?;
        if n != a {
            return Err(Error::Format(format!("tube length n = {n} differs from cube size a = {a}")));
        }
        let model = SRModel {
            version,
            cube: a,
            shifts,
            factor,
            seed,
            lambda,
            filter_set,
            dh,
            dl,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        SRModel::from_bytes(&fs::read(path)?)
    }

    /// `(min, mean, max)` of `‖[dh; dl](:,j,:)‖²_F` over atoms.
    pub fn atom_norm_stats(&self) -> (f64, f64, f64) {
        let norms: Vec<f64> = (0..self.atoms())
            .map(|j| self.dh.lateral_norm_sq(j).unwrap() + self.dl.lateral_norm_sq(j).unwrap())
            .collect();
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        (min, mean, max)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
