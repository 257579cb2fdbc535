//! Separable bicubic resampling (Keys kernel, a = -0.5).
//!
//! Pixel centers map as `x_in = (x_out + 0.5) / scale - 0.5`. When
//! shrinking with antialiasing, the kernel is stretched by `1 / scale`.
//! Borders reflect symmetrically (edge pixel repeated).

use super::Image;
use crate::error::{Error, Result};

const KEYS_A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        ((KEYS_A + 2.0) * ax - (KEYS_A + 3.0)) * ax * ax + 1.0
    } else if ax < 2.0 {
        ((KEYS_A * ax - 5.0 * KEYS_A) * ax + 8.0 * KEYS_A) * ax - 4.0 * KEYS_A
    } else {
        0.0
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Per output sample: `(input index, weight)` pairs summing to one.
fn contributions(n_in: usize, n_out: usize, scale: f64, antialias: bool) -> Vec<Vec<(usize, f64)>> {
    let stretch = if antialias && scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let left = (center - support).floor() as isize;
            let right = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for j in left..=right {
                let wgt = cubic((center - j as f64) * stretch);
                if wgt == 0.0 {
                    continue;
                }
                total += wgt;
                let idx = reflect(j, n_in);
                match taps.iter_mut().find(|t| t.0 == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn output_len(n: usize, scale: f64) -> Result<usize> {
    let exact = n as f64 * scale;
    let rounded = exact.round();
    if !(scale > 0.0) || (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::Invalid(format!(
            "scale {scale} does not map size {n} to a positive integer"
        )));
    }
    Ok(rounded as usize)
}

/// Resize without clamping; linear in the input.
pub fn resize_bicubic_unclamped(img: &Image, scale: f64, antialias: bool) -> Result<Image> {
    let oh = output_len(img.h, scale)?;
    let ow = output_len(img.w, scale)?;
    let c = img.c;
    let cols = contributions(img.w, ow, scale, antialias);
    let rows = contributions(img.h, oh, scale, antialias);

    let mut tmp = vec![0.0; img.h * ow * c];
    for y in 0..img.h {
        for (x, taps) in cols.iter().enumerate() {
            for ch in 0..c {
                tmp[(y * ow + x) * c + ch] = taps
                    .iter()
                    .map(|&(j, wgt)| wgt * img.data[(y * img.w + j) * c + ch])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; oh * ow * c];
    for (y, taps) in rows.iter().enumerate() {
        for x in 0..ow {
            for ch in 0..c {
                out[(y * ow + x) * c + ch] = taps
                    .iter()
                    .map(|&(j, wgt)| wgt * tmp[(j * ow + x) * c + ch])
                    .sum();
            }
        }
    }
    Image::new(oh, ow, c, out)
}

/// Bicubic resize with values clamped to `[0, 1]`. Antialiasing should be
/// on for downscaling; it has no effect when enlarging.
pub fn resize_bicubic(img: &Image, scale: f64, antialias: bool) -> Result<Image> {
    let mut out = resize_bicubic_unclamped(img, scale, antialias)?;
    out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img_from(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> Image {
        let mut d = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                d.push(f(y, x));
            }
        }
        Image::new(h, w, 1, d).unwrap()
    }

    #[test]
    fn constant_is_preserved_at_any_scale() {
        let img = Image::filled(12, 8, 3, 0.37);
        for &s in &[0.5, 0.25, 2.0, 4.0, 1.5] {
            let out = resize_bicubic(&img, s, true).unwrap();
            assert!(
                out.data.iter().all(|v| (v - 0.37).abs() < 1e-12),
                "scale {s}"
            );
        }
    }

    #[test]
    fn upscale_then_downscale_smooth_ramp() {
        let img = img_from(16, 16, |y, x| 0.2 + 0.6 * (y + x) as f64 / 30.0);
        let up = resize_bicubic(&img, 2.0, true).unwrap();
        let back = resize_bicubic(&up, 0.5, true).unwrap();
        let err = back
            .data
            .iter()
            .zip(&img.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "max err {err}");
    }

    #[test]
    fn checkerboard_downscale_is_strictly_interior() {
        let img = img_from(4, 4, |y, x| ((y + x) % 2) as f64);
        let out = resize_bicubic(&img, 0.5, true).unwrap();
        assert_eq!((out.h, out.w), (2, 2));
        assert!(
            out.data.iter().all(|&v| v > 0.0 && v < 1.0),
            "{:?}",
            out.data
        );
    }

    #[test]
    fn non_integral_size_is_rejected() {
        let img = Image::filled(5, 5, 1, 0.5);
        assert!(resize_bicubic(&img, 0.5, true).is_err());
        assert!(resize_bicubic(&img, 0.0, true).is_err());
    }

    #[test]
    fn identity_scale_is_exact() {
        let img = img_from(5, 7, |y, x| ((y * 7 + x) as f64 / 40.0).min(1.0));
        let out = resize_bicubic(&img, 1.0, true).unwrap();
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn keys_kernel_values() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert!((cubic(0.5) - 0.5625).abs() < 1e-15);
        assert!((cubic(1.5) + 0.0625).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn resize_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0, up in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = img_from(8, 6, |_, _| rng.random());
            let y = img_from(8, 6, |_, _| rng.random());
            let s = if up { 2.0 } else { 0.5 };
            let combo = Image::new(8, 6, 1, x.data.iter().zip(&y.data).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let lhs = resize_bicubic_unclamped(&combo, s, true).unwrap();
            let rx = resize_bicubic_unclamped(&x, s, true).unwrap();
            let ry = resize_bicubic_unclamped(&y, s, true).unwrap();
            for i in 0..lhs.data.len() {
                prop_assert!((lhs.data[i] - (a * rx.data[i] + b * ry.data[i])).abs() < 1e-6);
            }
        }
    }
}
