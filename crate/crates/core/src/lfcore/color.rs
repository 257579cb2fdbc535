//! Full-range BT.601 (JPEG) RGB <-> YCbCr on `[0, 1]` values.

use super::{ColorSpace, LightField};
use crate::error::{Error, Result};

/// Luma weights for R, G, B.
pub const BT601_LUMA: [f64; 3] = [0.299, 0.587, 0.114];

const CB: [f64; 3] = [-0.168_736, -0.331_264, 0.5];
const CR: [f64; 3] = [0.5, -0.418_688, -0.081_312];

fn expect(lf: &LightField, cs: ColorSpace) -> Result<()> {
    if lf.color_space() != cs {
        return Err(Error::Invalid(format!(
            "expected a {cs:?} light field, got {:?}",
            lf.color_space()
        )));
    }
    Ok(())
}

fn dot(w: &[f64; 3], p: &[f64]) -> f64 {
    w[0] * p[0] + w[1] * p[1] + w[2] * p[2]
}

/// Luma only; the result is a single-channel `Y` light field.
pub fn rgb_to_y(lf: &LightField) -> Result<LightField> {
    expect(lf, ColorSpace::Rgb)?;
    let data = lf
        .data()
        .chunks_exact(3)
        .map(|p| dot(&BT601_LUMA, p).clamp(0.0, 1.0))
        .collect();
    Ok(lf.with_data(ColorSpace::Y, 1, data))
}

/// Y channel of a light field in any color space.
pub fn to_y(lf: &LightField) -> Result<LightField> {
    match lf.color_space() {
        ColorSpace::Y => Ok(lf.clone()),
        ColorSpace::Rgb => rgb_to_y(lf),
        ColorSpace::YCbCr => {
            let data = lf.data().iter().step_by(3).copied().collect();
            Ok(lf.with_data(ColorSpace::Y, 1, data))
        }
    }
}

pub fn rgb_to_ycbcr(lf: &LightField) -> Result<LightField> {
    expect(lf, ColorSpace::Rgb)?;
    let mut data = Vec::with_capacity(lf.data().len());
    for p in lf.data().chunks_exact(3) {
        data.push(dot(&BT601_LUMA, p).clamp(0.0, 1.0));
        data.push((0.5 + dot(&CB, p)).clamp(0.0, 1.0));
        data.push((0.5 + dot(&CR, p)).clamp(0.0, 1.0));
    }
    Ok(lf.with_data(ColorSpace::YCbCr, 3, data))
}

pub fn ycbcr_to_rgb(lf: &LightField) -> Result<LightField> {
    expect(lf, ColorSpace::YCbCr)?;
    let mut data = Vec::with_capacity(lf.data().len());
    for p in lf.data().chunks_exact(3) {
        let (y, cb, cr) = (p[0], p[1] - 0.5, p[2] - 0.5);
        data.push((y + 1.402 * cr).clamp(0.0, 1.0));
        data.push((y - 0.344_136 * cb - 0.714_136 * cr).clamp(0.0, 1.0));
        data.push((y + 1.772 * cb).clamp(0.0, 1.0));
    }
    Ok(lf.with_data(ColorSpace::Rgb, 3, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(r: f64, g: f64, b: f64) -> LightField {
        LightField::new((1, 1), (1, 1), ColorSpace::Rgb, vec![r, g, b]).unwrap()
    }

    #[test]
    fn luma_of_primaries() {
        assert!((rgb_to_y(&px(1.0, 1.0, 1.0)).unwrap().data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(rgb_to_y(&px(0.0, 0.0, 0.0)).unwrap().data()[0], 0.0);
        assert_eq!(rgb_to_y(&px(1.0, 0.0, 0.0)).unwrap().data()[0], 0.299);
    }

    #[test]
    fn ycbcr_roundtrip() {
        let lf = LightField::new(
            (1, 2),
            (1, 2),
            ColorSpace::Rgb,
            vec![
                0.2, 0.4, 0.6, 0.9, 0.1, 0.3, 0.0, 1.0, 0.5, 0.33, 0.33, 0.33,
            ],
        )
        .unwrap();
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&lf).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(lf.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn wrong_color_space_is_rejected() {
        let y = LightField::new((1, 1), (1, 1), ColorSpace::Y, vec![0.5]).unwrap();
        assert!(rgb_to_y(&y).is_err());
        assert!(ycbcr_to_rgb(&y).is_err());
    }
}
