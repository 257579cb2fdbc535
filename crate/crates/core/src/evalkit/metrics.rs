//! PSNR and SSIM on `[0, 1]` single-channel images.

use crate::error::{Error, Result};
use crate::lfcore::Image;

/// Returned by [`psnr_y`] for identical images.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if (a.h, a.w, a.c) != (b.h, b.w, b.c) {
        return Err(Error::Shape(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.h, a.w, a.c, b.h, b.w, b.c
        )));
    }
    if a.data.is_empty() {
        return Err(Error::Shape("metric inputs are empty".into()));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.data.len() as f64)
}

/// `10 log10(1 / MSE)` for peak 1; [`PSNR_IDENTICAL`] when MSE is zero.
pub fn psnr_y(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        PSNR_IDENTICAL
    } else {
        -10.0 * m.log10()
    })
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// Mean SSIM over all fully contained Gaussian windows (11x11, sigma 1.5,
/// dynamic range 1). Images smaller than the window use the largest odd
/// window that fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    if a.c != 1 {
        return Err(Error::Shape(format!(
            "ssim expects one channel, got {}",
            a.c
        )));
    }
    let mut k = SSIM_WINDOW.min(a.h).min(a.w);
    if k.is_multiple_of(2) {
        k -= 1;
    }
    let g = gaussian(k, SSIM_SIGMA);
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let (oh, ow) = (a.h - k + 1, a.w - k + 1);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    let wgt = gi * gj;
                    let p = a.data[(y + i) * a.w + x + j];
                    let q = b.data[(y + i) * b.w + x + j];
                    ma += wgt * p;
                    mb += wgt * q;
                    saa += wgt * p * p;
                    sbb += wgt * q * q;
                    sab += wgt * p * q;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}
