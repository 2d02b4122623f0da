//! Reconstruction quality metrics on `[0, 1]` intensities.

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Geometry {
            expected: format!("{}x{}", a.width(), a.height()),
            actual: format!("{}x{}", b.width(), b.height()),
        });
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.pixels().len() as f64)
}

pub fn mae(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.pixels().len() as f64)
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((-10.0 * e.log10()).min(PSNR_CAP_DB))
}
