//! Procedural light fields from layered fronto-parallel planes.
//!
//! View `(u, v)` sees layer point `(y - d (u - uc), x - d (v - vc))` at
//! pixel `(y, x)`, where `d = k_d * unit_disparity / depth`. Nearer layers
//! cover farther ones. Textures wrap around their tile, so no view reads
//! outside valid data, and the center view never depends on `k_d`.

mod texture;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lfcore::dataset::{self, Scene, SceneMeta};
use crate::lfcore::{ColorSpace, Image, LightField};

pub use texture::{Rgb, Texture};

/// Binary support of a layer in its own (unshifted) pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Full,
    Rect { y: f64, x: f64, h: f64, w: f64 },
    Disk { cy: f64, cx: f64, r: f64 },
}

impl Region {
    pub fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Region::Full => true,
            Region::Rect { y: y0, x: x0, h, w } => y >= y0 && y < y0 + h && x >= x0 && x < x0 + w,
            Region::Disk { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub texture: Texture,
    pub depth: f64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Far to near.
    pub layers: Vec<Layer>,
    pub angular_res: usize,
    /// `[H, W]`.
    pub spatial_res: [usize; 2],
    /// Pixels of shift per view at unit baseline and unit inverse depth.
    pub unit_disparity: f64,
    pub seed: u64,
    /// Mirror every layer left to right.
    #[serde(default)]
    pub mirror: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl DisparityMap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    pub fn range(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
                (lo.min(d), hi.max(d))
            })
    }
}

fn layer_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sample_wrapped(tile: &Image, y: f64, x: f64, out: &mut [f64]) {
    let (h, w) = (tile.h as i64, tile.w as i64);
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    let yi = (y0 as i64).rem_euclid(h) as usize;
    let xi = (x0 as i64).rem_euclid(w) as usize;
    let y1 = (yi + 1) % tile.h;
    let x1 = (xi + 1) % tile.w;
    for (ch, o) in out.iter_mut().enumerate() {
        let top = tile.at(yi, xi, ch) * (1.0 - tx) + tile.at(yi, x1, ch) * tx;
        let bot = tile.at(y1, xi, ch) * (1.0 - tx) + tile.at(y1, x1, ch) * tx;
        *o = top * (1.0 - ty) + bot * ty;
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Invalid("scene has no layers".into()));
        }
        if self.angular_res == 0 || self.spatial_res.contains(&0) {
            return Err(Error::Invalid("scene resolution must be positive".into()));
        }
        if !self.unit_disparity.is_finite() {
            return Err(Error::Invalid("unit disparity must be finite".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(l.depth > 0.0 && l.depth.is_finite()) {
                return Err(Error::Invalid(format!(
                    "layer {i} depth {} is not positive",
                    l.depth
                )));
            }
            if i > 0 && l.depth > self.layers[i - 1].depth {
                return Err(Error::Invalid(format!(
                    "layer {i} is farther than layer {}",
                    i - 1
                )));
            }
            l.texture.validate()?;
        }
        if !self.layers.iter().any(|l| l.region == Region::Full) {
            return Err(Error::Invalid("no layer covers the full frame".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        (self.angular_res as f64 - 1.0) / 2.0
    }

    /// Disparity of layer `i` at baseline multiplier `k_d`.
    pub fn layer_disparity(&self, i: usize, k_d: u32) -> f64 {
        k_d as f64 * (self.unit_disparity / self.layers[i].depth)
    }

    pub fn mirrored(&self) -> SceneSpec {
        SceneSpec {
            mirror: !self.mirror,
            ..self.clone()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<SceneSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SceneSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// A random scene: a noise background and a few textured occluders at
    /// nearer depths.
    pub fn random(seed: u64, angular_res: usize, spatial_res: [usize; 2]) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [h, w] = spatial_res;
        let (hf, wf) = (h as f64, w as f64);
        let color = |rng: &mut ChaCha8Rng| -> Rgb { [rng.random(), rng.random(), rng.random()] };
        let mut layers = vec![Layer {
            texture: Texture::Noise {
                cell: rng.random_range(6.0..16.0),
                octaves: 3,
                colors: [color(&mut rng), color(&mut rng)],
            },
            depth: rng.random_range(4.0..8.0),
            region: Region::Full,
        }];
        let count = rng.random_range(2..=4);
        let mut depth: f64 = rng.random_range(2.5..3.5);
        for _ in 0..count {
            let colors = [color(&mut rng), color(&mut rng)];
            let texture = match rng.random_range(0..4) {
                0 => Texture::Checker {
                    period: rng.random_range(2.0..6.0),
                    colors,
                },
                1 => Texture::Stripes {
                    period: rng.random_range(3.0..8.0),
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                    colors,
                },
                2 => Texture::Gradient {
                    period: rng.random_range(6.0..20.0),
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                    colors,
                },
                _ => Texture::Noise {
                    cell: rng.random_range(2.0..6.0),
                    octaves: 2,
                    colors,
                },
            };
            let region = if rng.random::<bool>() {
                Region::Rect {
                    y: rng.random_range(0.0..hf * 0.7),
                    x: rng.random_range(0.0..wf * 0.7),
                    h: rng.random_range(hf * 0.2..hf * 0.5),
                    w: rng.random_range(wf * 0.2..wf * 0.5),
                }
            } else {
                Region::Disk {
                    cy: rng.random_range(0.0..hf),
                    cx: rng.random_range(0.0..wf),
                    r: rng.random_range(hf.min(wf) * 0.1..hf.min(wf) * 0.3),
                }
            };
            layers.push(Layer {
                texture,
                depth,
                region,
            });
            depth *= rng.random_range(0.55..0.9);
        }
        SceneSpec {
            layers,
            angular_res,
            spatial_res,
            unit_disparity: 1.0,
            seed,
            mirror: false,
        }
    }
}

struct Prepared<'a> {
    spec: &'a SceneSpec,
    tiles: Vec<Image>,
}

impl Prepared<'_> {
    /// Index of the nearest layer covering view-relative point `(y, x)`
    /// and its layer-space coordinates.
    fn hit(&self, y: f64, x: f64, k_d: u32, du: f64, dv: f64) -> (usize, f64, f64) {
        let w1 = self.spec.spatial_res[1] as f64 - 1.0;
        for i in (0..self.spec.layers.len()).rev() {
            let d = self.spec.layer_disparity(i, k_d);
            let ly = y - d * du;
            let mut lx = x - d * dv;
            if self.spec.mirror {
                lx = w1 - lx;
            }
            if self.spec.layers[i].region.contains(ly, lx) {
                return (i, ly, lx);
            }
        }
        unreachable!("validated scenes have a full-frame layer")
    }
}

fn prepare(spec: &SceneSpec) -> Result<Prepared<'_>> {
    spec.validate()?;
    let [h, w] = spec.spatial_res;
    let tiles = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| l.texture.rasterize(h, w, layer_seed(spec.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { spec, tiles })
}

/// Center-view disparity of the visible layer.
pub fn disparity_map(spec: &SceneSpec, k_d: u32) -> Result<DisparityMap> {
    spec.validate()?;
    let p = Prepared {
        spec,
        tiles: Vec::new(),
    };
    let [h, w] = spec.spatial_res;
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (i, _, _) = p.hit(y as f64, x as f64, k_d, 0.0, 0.0);
            data.push(spec.layer_disparity(i, k_d));
        }
    }
    Ok(DisparityMap { h, w, data })
}

/// RGB light field and center-view disparity at baseline multiplier `k_d`.
pub fn render(spec: &SceneSpec, k_d: u32) -> Result<(LightField, DisparityMap)> {
    let p = prepare(spec)?;
    let a = spec.angular_res;
    let [h, w] = spec.spatial_res;
    let c = spec.center();
    let mut data = vec![0.0; a * a * h * w * 3];
    for u in 0..a {
        for v in 0..a {
            let (du, dv) = (u as f64 - c, v as f64 - c);
            let base = (u * a + v) * h * w * 3;
            for y in 0..h {
                for x in 0..w {
                    let (i, ly, lx) = p.hit(y as f64, x as f64, k_d, du, dv);
                    let k = base + (y * w + x) * 3;
                    sample_wrapped(&p.tiles[i], ly, lx, &mut data[k..k + 3]);
                }
            }
        }
    }
    let lf = LightField::new_clamped((a, a), (h, w), ColorSpace::Rgb, data)?;
    Ok((lf, disparity_map(spec, k_d)?))
}

/// `(min, max)` visible-layer disparity in the center view.
pub fn disparity_range(spec: &SceneSpec, k_d: u32) -> Result<(f64, f64)> {
    Ok(disparity_map(spec, k_d)?.range())
}

/// Render and write one scene directory in the dataset format.
pub fn write_rendered(dir: &Path, spec: &SceneSpec, k_d: u32) -> Result<Scene> {
    let scene = render_scene(spec, k_d)?;
    dataset::write_scene(dir, &scene)?;
    Ok(scene)
}

/// [`render`] packaged with dataset metadata.
pub fn render_scene(spec: &SceneSpec, k_d: u32) -> Result<Scene> {
    let (lf, disp) = render(spec, k_d)?;
    let (lo, hi) = disp.range();
    let scene = Scene {
        meta: SceneMeta {
            angular_res: [spec.angular_res; 2],
            baseline_mult: Some(k_d as f64),
            disparity_range: Some([lo, hi]),
            color_space: ColorSpace::Rgb,
            spatial_res: spec.spatial_res,
        },
        lf,
        disparity: Some(disp.data),
    };
    Ok(scene)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpiAxis {
    /// Fixed `u` and `y`; rows are `v`, columns are `x`.
    Row,
    /// Fixed `v` and `x`; rows are `u`, columns are `y`.
    Col,
}

pub fn epi_extract(
    lf: &LightField,
    axis: EpiAxis,
    spatial_index: usize,
    angular_index: usize,
) -> Result<Image> {
    let (u, v) = lf.angular();
    let (h, w) = lf.spatial();
    let c = lf.channels();
    let (rows, cols, s_lim, a_lim) = match axis {
        EpiAxis::Row => (v, w, h, u),
        EpiAxis::Col => (u, h, w, v),
    };
    if spatial_index >= s_lim || angular_index >= a_lim {
        return Err(Error::Invalid(format!(
            "EPI index ({spatial_index}, {angular_index}) out of range ({s_lim}, {a_lim})"
        )));
    }
    let mut img = Image::zeros(rows, cols, c);
    for r in 0..rows {
        for q in 0..cols {
            for ch in 0..c {
                *img.at_mut(r, q, ch) = match axis {
                    EpiAxis::Row => lf.at(angular_index, r, spatial_index, q, ch),
                    EpiAxis::Col => lf.at(r, angular_index, q, spatial_index, ch),
                };
            }
        }
    }
    Ok(img)
}

/// Slope (columns per row) of a rising `level` crossing tracked through
/// the EPI: in the middle row the crossing closest to the middle column,
/// then the nearest crossing in each row moving outwards. `None` if some
/// row has no crossing.
pub fn epi_edge_slope(epi: &Image, channel: usize, level: f64) -> Option<f64> {
    let crossings = |r: usize| -> Vec<f64> {
        (0..epi.w.saturating_sub(1))
            .filter_map(|q| {
                let (a, b) = (epi.at(r, q, channel), epi.at(r, q + 1, channel));
                (a < level && b >= level).then(|| q as f64 + (level - a) / (b - a))
            })
            .collect()
    };
    let nearest = |r: usize, target: f64| -> Option<f64> {
        crossings(r)
            .into_iter()
            .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
    };
    let mid = epi.h / 2;
    let anchor = nearest(mid, epi.w as f64 / 2.0)?;
    let mut pts = vec![(mid as f64, anchor)];
    let mut prev = anchor;
    for r in (0..mid).rev() {
        prev = nearest(r, prev)?;
        pts.push((r as f64, prev));
    }
    prev = anchor;
    for r in mid + 1..epi.h {
        prev = nearest(r, prev)?;
        pts.push((r as f64, prev));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
