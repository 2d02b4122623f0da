//! Grayscale images, file I/O and resampling.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// Grayscale image with intensities in `[0, 1]`, stored row-major
/// (`height` rows of `width` pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidShape(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(index) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "pixel {index} = {} outside [0, 1]",
                pixels[index]
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        GrayImage::new(width, height, pixels)
    }

    /// Builds an image from arbitrary values, clamping into `[0, 1]`.
    pub fn clamped(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        GrayImage::new(width, height, values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Pixel with coordinates clamped into the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
            DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
            DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
                })
                .map(|v: f64| v.clamp(0.0, 1.0))
                .collect(),
        };
        GrayImage::new(w, h, pixels)
    }

    /// Reads a PNG or binary PGM file. Color inputs are reduced to luminance.
    pub fn load(path: &Path) -> Result<Self> {
        let wrap = |e: image::ImageError| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let reader = ImageReader::open(path)?.with_guessed_format()?;
        let img = reader.decode().map_err(wrap)?;
        GrayImage::from_dynamic(img)
    }

    /// 8-bit quantized pixels, `round(255 v)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    /// Writes an 8-bit image; `.pgm` produces binary P5, anything else PNG.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_u8();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
        if is_pgm {
            let mut f = fs::File::create(path)?;
            write!(f, "P5\n{} {}\n255\n", self.width, self.height)?;
            f.write_all(&bytes)?;
            return Ok(());
        }
        image::save_buffer_with_format(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Box-mean downsampling by an integer factor.
pub fn downsample(x: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 || !x.width.is_multiple_of(factor) || !x.height.is_multiple_of(factor) {
        return Err(Error::Geometry {
            expected: format!("dimensions divisible by {factor}"),
            actual: format!("{}x{}", x.width, x.height),
        });
    }
    let (w, h) = (x.width / factor, x.height / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let pixels = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| {
            let mut sum = 0.0;
            for dr in 0..factor {
                for dc in 0..factor {
                    sum += x.get(r * factor + dr, c * factor + dc);
                }
            }
            (sum * norm).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(w, h, pixels)
}

const CATMULL_ROM: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CATMULL_ROM;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Tap offsets and weights for each output index of a 1-D upsampling by
/// `factor`, using pixel-center alignment.
fn taps(out_len: usize, factor: usize) -> Vec<(isize, [f64; 4])> {
    (0..out_len)
        .map(|o| {
            let src = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = src.floor();
            let t = src - base;
            let w = [
                cubic_kernel(t + 1.0),
                cubic_kernel(t),
                cubic_kernel(1.0 - t),
                cubic_kernel(2.0 - t),
            ];
            (base as isize - 1, w)
        })
        .collect()
}

/// Bicubic (Catmull-Rom) upsampling by an integer factor with edge
/// replication, clamped to `[0, 1]`.
pub fn upsample(x: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 {
        return Err(Error::InvalidParameter("upsampling factor must be positive".into()));
    }
    let (w, h) = (x.width * factor, x.height * factor);
    let col_taps = taps(w, factor);
    let row_taps = taps(h, factor);
    // horizontal pass: x.height rows of w samples
    let mut tmp = vec![0.0; x.height * w];
    for r in 0..x.height {
        for (c, (start, wt)) in col_taps.iter().enumerate() {
            tmp[r * w + c] = (0..4)
                .map(|t| wt[t] * x.get_clamped(r as isize, start + t as isize))
                .sum();
        }
    }
    let last = x.height as isize - 1;
    let mut out = vec![0.0; h * w];
    for (r, (start, wt)) in row_taps.iter().enumerate() {
        for c in 0..w {
            let v: f64 = (0..4)
                .map(|t| wt[t] * tmp[(start + t as isize).clamp(0, last) as usize * w + c])
                .sum();
            out[r * w + c] = v.clamp(0.0, 1.0);
        }
    }
    GrayImage::new(w, h, out)
}
