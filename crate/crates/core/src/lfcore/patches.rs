use super::{resize_bicubic, Image, LightField};
use crate::error::{Error, Result};

/// Square windows tiled row-major with `stride`; ragged remainders are
/// dropped. Every patch covers the same window in every view.
pub fn extract_patches(lf: &LightField, size: usize, stride: usize) -> Result<Vec<LightField>> {
    let (h, w) = lf.spatial();
    if size == 0 || stride == 0 {
        return Err(Error::Invalid(
            "patch size and stride must be positive".into(),
        ));
    }
    if size > h || size > w {
        return Err(Error::Invalid(format!(
            "patch size {size} exceeds spatial extent {h}x{w}"
        )));
    }
    let (u, v) = lf.angular();
    let c = lf.channels();
    let mut out = Vec::new();
    for y0 in (0..=h - size).step_by(stride) {
        for x0 in (0..=w - size).step_by(stride) {
            let mut data = Vec::with_capacity(u * v * size * size * c);
            for a in 0..u {
                for b in 0..v {
                    let view = lf.view_slice(a, b);
                    for y in y0..y0 + size {
                        let row = (y * w + x0) * c;
                        data.extend_from_slice(&view[row..row + size * c]);
                    }
                }
            }
            out.push(LightField::from_parts(
                (u, v),
                (size, size),
                lf.color_space(),
                data,
            ));
        }
    }
    Ok(out)
}

/// Per-view antialiased bicubic downscale by `1 / alpha`.
pub fn degrade(lf: &LightField, alpha: usize) -> Result<LightField> {
    let (h, w) = lf.spatial();
    if alpha == 0 || h % alpha != 0 || w % alpha != 0 {
        return Err(Error::Invalid(format!(
            "spatial size {h}x{w} is not divisible by {alpha}"
        )));
    }
    let scale = 1.0 / alpha as f64;
    let views = lf
        .views()
        .iter()
        .map(|img| resize_bicubic(img, scale, true))
        .collect::<Result<Vec<Image>>>()?;
    LightField::from_views(lf.angular(), lf.color_space(), &views)
}
