//! On-disk scene format: one directory per scene holding
//! `view_UU_VV.png` (8-bit), `meta.json` and optionally `disparity.f32`
//! (row-major little-endian `f32`, `H x W`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ColorSpace, Image, LightField};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const DISPARITY_FILE: &str = "disparity.f32";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub angular_res: [usize; 2],
    pub baseline_mult: Option<f64>,
    pub disparity_range: Option<[f64; 2]>,
    pub color_space: ColorSpace,
    /// `[H, W]`; also the shape of the disparity map.
    pub spatial_res: [usize; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub lf: LightField,
    pub meta: SceneMeta,
    /// Center-view disparity, `H * W` values.
    pub disparity: Option<Vec<f64>>,
}

pub fn view_file_name(u: usize, v: usize) -> String {
    format!("view_{u:02}_{v:02}.png")
}

fn quantize(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|&x| quantize(x)).collect();
    let (w, h) = (img.w as u32, img.h as u32);
    let res = match img.c {
        1 => image::GrayImage::from_raw(w, h, bytes).map(|b| b.save(path)),
        3 => image::RgbImage::from_raw(w, h, bytes).map(|b| b.save(path)),
        c => return Err(Error::Invalid(format!("cannot write a {c}-channel PNG"))),
    };
    res.expect("buffer length matches dimensions")
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_png(path: &Path, channels: usize) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h, raw) = match channels {
        1 => {
            let b = img.to_luma8();
            (b.width(), b.height(), b.into_raw())
        }
        3 => {
            let b = img.to_rgb8();
            (b.width(), b.height(), b.into_raw())
        }
        c => return Err(Error::Invalid(format!("cannot read a {c}-channel PNG"))),
    };
    Image::new(
        h as usize,
        w as usize,
        channels,
        raw.into_iter().map(|b| b as f64 / 255.0).collect(),
    )
}

pub fn write_scene(dir: &Path, scene: &Scene) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (u, v) = scene.lf.angular();
    for a in 0..u {
        for b in 0..v {
            write_png(&dir.join(view_file_name(a, b)), &scene.lf.view(a, b))?;
        }
    }
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&scene.meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;
    if let Some(disp) = &scene.disparity {
        let bytes: Vec<u8> = disp
            .iter()
            .flat_map(|&d| (d as f32).to_le_bytes())
            .collect();
        let p = dir.join(DISPARITY_FILE);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<SceneMeta> {
    let p = dir.join(META_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_scene(dir: &Path) -> Result<Scene> {
    let meta = read_meta(dir)?;
    let [u, v] = meta.angular_res;
    let c = meta.color_space.channels();
    let mut views = Vec::with_capacity(u * v);
    for a in 0..u {
        for b in 0..v {
            let p = dir.join(view_file_name(a, b));
            if !p.exists() {
                return Err(Error::Missing(p.display().to_string()));
            }
            views.push(read_png(&p, c)?);
        }
    }
    let lf = LightField::from_views((u, v), meta.color_space, &views)?;
    let [h, w] = meta.spatial_res;
    if lf.spatial() != (h, w) {
        return Err(Error::Shape(format!(
            "{}: views are {:?}, meta says {h}x{w}",
            dir.display(),
            lf.spatial()
        )));
    }
    let dp = dir.join(DISPARITY_FILE);
    let disparity = if dp.exists() {
        let bytes = fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
        if bytes.len() != h * w * 4 {
            return Err(Error::Shape(format!(
                "{}: {} bytes, expected {}",
                dp.display(),
                bytes.len(),
                h * w * 4
            )));
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
        )
    } else {
        None
    };
    Ok(Scene {
        lf,
        meta,
        disparity,
    })
}

/// Scene directories directly under `root` (those holding `meta.json`),
/// sorted by name.
pub fn list_scenes(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(META_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn read_dataset(root: &Path) -> Result<Vec<Scene>> {
    let dirs = list_scenes(root)?;
    if dirs.is_empty() {
        return Err(Error::Missing(format!(
            "no scenes under {}",
            root.display()
        )));
    }
    dirs.iter().map(|d| read_scene(d)).collect()
}
