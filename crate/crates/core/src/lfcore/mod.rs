//! Light-field data model and structure-preserving transforms.
//!
//! A [`LightField`] stores a `U x V` array of sub-aperture images (SAIs),
//! each `H x W x C`, as one row-major `[U, V, H, W, C]` buffer with values
//! canonically in `[0, 1]`.

mod augment;
mod color;
pub mod dataset;
mod patches;
mod resize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use augment::{augment, Symmetry};
pub use color::{rgb_to_y, rgb_to_ycbcr, to_y, ycbcr_to_rgb, BT601_LUMA};
pub use patches::{degrade, extract_patches};
pub use resize::{resize_bicubic, resize_bicubic_unclamped};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "YCbCr")]
    YCbCr,
    #[serde(rename = "Y")]
    Y,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
            ColorSpace::Y => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ValueRange {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl ValueRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// One `H x W x C` image, interleaved row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "image data has {} values, expected {h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f64) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![value; h * w * c],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize, ch: usize) -> &mut f64 {
        &mut self.data[(y * self.w + x) * self.c + ch]
    }

    /// Single channel `ch` as a `1`-channel image.
    pub fn channel(&self, ch: usize) -> Image {
        let data = self.data.iter().skip(ch).step_by(self.c).copied().collect();
        Image {
            h: self.h,
            w: self.w,
            c: 1,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    u: usize,
    v: usize,
    h: usize,
    w: usize,
    c: usize,
    color_space: ColorSpace,
    range: ValueRange,
    data: Vec<f64>,
}

impl LightField {
    pub fn new(
        angular: (usize, usize),
        spatial: (usize, usize),
        color_space: ColorSpace,
        data: Vec<f64>,
    ) -> Result<Self> {
        let (u, v) = angular;
        let (h, w) = spatial;
        let c = color_space.channels();
        if u == 0 || v == 0 {
            return Err(Error::Shape(
                "angular resolution must be at least 1x1".into(),
            ));
        }
        if data.len() != u * v * h * w * c {
            return Err(Error::Shape(format!(
                "light field data has {} values, expected {u}x{v}x{h}x{w}x{c}",
                data.len()
            )));
        }
        let range = ValueRange::default();
        if let Some(bad) = data.iter().find(|x| !x.is_finite() || !range.contains(**x)) {
            return Err(Error::Invalid(format!(
                "light field value {bad} outside [{}, {}]",
                range.lo, range.hi
            )));
        }
        Ok(Self {
            u,
            v,
            h,
            w,
            c,
            color_space,
            range,
            data,
        })
    }

    /// Clamps values into the canonical range before construction.
    pub fn new_clamped(
        angular: (usize, usize),
        spatial: (usize, usize),
        color_space: ColorSpace,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        let r = ValueRange::default();
        for x in &mut data {
            *x = if x.is_nan() { r.lo } else { r.clamp(*x) };
        }
        Self::new(angular, spatial, color_space, data)
    }

    pub fn filled(
        angular: (usize, usize),
        spatial: (usize, usize),
        color_space: ColorSpace,
        value: f64,
    ) -> Result<Self> {
        let n = angular.0 * angular.1 * spatial.0 * spatial.1 * color_space.channels();
        Self::new(angular, spatial, color_space, vec![value; n])
    }

    /// Views listed in row-major angular order.
    pub fn from_views(
        angular: (usize, usize),
        color_space: ColorSpace,
        views: &[Image],
    ) -> Result<Self> {
        if views.len() != angular.0 * angular.1 {
            return Err(Error::Shape(format!(
                "{} views for a {}x{} array",
                views.len(),
                angular.0,
                angular.1
            )));
        }
        let first = views
            .first()
            .ok_or_else(|| Error::Shape("light field needs at least one view".into()))?;
        let (h, w) = (first.h, first.w);
        let mut data = Vec::with_capacity(views.len() * h * w * color_space.channels());
        for img in views {
            if img.h != h || img.w != w || img.c != color_space.channels() {
                return Err(Error::Shape(
                    "views differ in shape or channel count".into(),
                ));
            }
            data.extend_from_slice(&img.data);
        }
        Self::new(angular, (h, w), color_space, data)
    }

    pub fn angular(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn value_range(&self) -> ValueRange {
        self.range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn num_views(&self) -> usize {
        self.u * self.v
    }

    fn view_len(&self) -> usize {
        self.h * self.w * self.c
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(((u * self.v + v) * self.h + y) * self.w + x) * self.c + ch]
    }

    pub fn view_slice(&self, u: usize, v: usize) -> &[f64] {
        let n = self.view_len();
        let i = u * self.v + v;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn view(&self, u: usize, v: usize) -> Image {
        Image {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.view_slice(u, v).to_vec(),
        }
    }

    pub fn views(&self) -> Vec<Image> {
        (0..self.u)
            .flat_map(|u| (0..self.v).map(move |v| (u, v)))
            .map(|(u, v)| self.view(u, v))
            .collect()
    }

    /// Index of the central view in raster order. Requires odd `U`, `V`.
    pub fn center(&self) -> (usize, usize) {
        (self.u / 2, self.v / 2)
    }

    pub fn to_sai_grid(&self) -> SaiGrid {
        SaiGrid {
            u: self.u,
            v: self.v,
            color_space: self.color_space,
            views: self.views(),
        }
    }

    pub fn from_sai_grid(grid: &SaiGrid) -> Result<Self> {
        Self::from_views((grid.u, grid.v), grid.color_space, &grid.views)
    }

    /// Central `a x a` views; offsets are `(U - a) / 2`, `(V - a) / 2`.
    pub fn crop_angular(&self, a: usize) -> Result<LightField> {
        if a == 0 || a > self.u || a > self.v {
            return Err(Error::Invalid(format!(
                "cannot crop {a}x{a} views from a {}x{} array",
                self.u, self.v
            )));
        }
        if !(self.u - a).is_multiple_of(2) || !(self.v - a).is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "central {a}x{a} crop of {}x{} is not centered (parity)",
                self.u, self.v
            )));
        }
        let (ou, ov) = ((self.u - a) / 2, (self.v - a) / 2);
        let mut data = Vec::with_capacity(a * a * self.view_len());
        for u in 0..a {
            for v in 0..a {
                data.extend_from_slice(self.view_slice(ou + u, ov + v));
            }
        }
        Ok(LightField {
            u: a,
            v: a,
            data,
            ..self.clone()
        })
    }

    /// Top-left `h x w` window of every view.
    pub fn crop_spatial(&self, h: usize, w: usize) -> Result<LightField> {
        if h == 0 || w == 0 || h > self.h || w > self.w {
            return Err(Error::Invalid(format!(
                "cannot crop {h}x{w} from {}x{} views",
                self.h, self.w
            )));
        }
        let row = self.w * self.c;
        let mut data = Vec::with_capacity(self.u * self.v * h * w * self.c);
        for u in 0..self.u {
            for v in 0..self.v {
                let view = self.view_slice(u, v);
                for y in 0..h {
                    data.extend_from_slice(&view[y * row..y * row + w * self.c]);
                }
            }
        }
        Ok(LightField {
            h,
            w,
            data,
            ..self.clone()
        })
    }

    /// Same geometry, new values (already validated by the caller's math).
    pub(crate) fn with_data(
        &self,
        color_space: ColorSpace,
        c: usize,
        data: Vec<f64>,
    ) -> LightField {
        debug_assert_eq!(data.len(), self.u * self.v * self.h * self.w * c);
        LightField {
            c,
            color_space,
            data,
            ..self.clone()
        }
    }

    pub(crate) fn from_parts(
        angular: (usize, usize),
        spatial: (usize, usize),
        color_space: ColorSpace,
        data: Vec<f64>,
    ) -> LightField {
        LightField {
            u: angular.0,
            v: angular.1,
            h: spatial.0,
            w: spatial.1,
            c: color_space.channels(),
            color_space,
            range: ValueRange::default(),
            data,
        }
    }

    pub fn to_macro_pixel(&self) -> MacroPixelImage {
        let (u, v, h, w, c) = (self.u, self.v, self.h, self.w, self.c);
        let row = v * w * c;
        let mut data = vec![0.0; u * h * row];
        for uu in 0..u {
            for vv in 0..v {
                for y in 0..h {
                    for x in 0..w {
                        let dst = ((y * u + uu) * (v * w) + (x * v + vv)) * c;
                        let src = (((uu * v + vv) * h + y) * w + x) * c;
                        data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
                    }
                }
            }
        }
        MacroPixelImage {
            u,
            v,
            h,
            w,
            color_space: self.color_space,
            data,
        }
    }

    pub fn from_macro_pixel(mp: &MacroPixelImage) -> Result<LightField> {
        let (u, v, h, w) = (mp.u, mp.v, mp.h, mp.w);
        let c = mp.color_space.channels();
        let mut data = vec![0.0; u * v * h * w * c];
        for uu in 0..u {
            for vv in 0..v {
                for y in 0..h {
                    for x in 0..w {
                        let src = ((y * u + uu) * (v * w) + (x * v + vv)) * c;
                        let dst = (((uu * v + vv) * h + y) * w + x) * c;
                        data[dst..dst + c].copy_from_slice(&mp.data[src..src + c]);
                    }
                }
            }
        }
        LightField::new((u, v), (h, w), mp.color_space, data)
    }
}

/// The `U x V` array-of-images view of a light field.
#[derive(Clone, Debug, PartialEq)]
pub struct SaiGrid {
    pub u: usize,
    pub v: usize,
    pub color_space: ColorSpace,
    /// Row-major over `(u, v)`.
    pub views: Vec<Image>,
}

impl SaiGrid {
    pub fn get(&self, u: usize, v: usize) -> &Image {
        &self.views[u * self.v + v]
    }
}

/// `[U*H, V*W, C]` interleaving: pixel `(h, w)` of view `(u, v)` sits at
/// `(h*U + u, w*V + v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroPixelImage {
    pub u: usize,
    pub v: usize,
    pub h: usize,
    pub w: usize,
    pub color_space: ColorSpace,
    pub data: Vec<f64>,
}

impl MacroPixelImage {
    pub fn height(&self) -> usize {
        self.u * self.h
    }

    pub fn width(&self) -> usize {
        self.v * self.w
    }

    pub fn at(&self, row: usize, col: usize, ch: usize) -> f64 {
        let c = self.color_space.channels();
        self.data[(row * self.width() + col) * c + ch]
    }
}
