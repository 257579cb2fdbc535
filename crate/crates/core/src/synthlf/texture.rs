//! Procedural RGB textures rasterized onto a periodic `H x W` tile.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lfcore::{dataset::read_png, Image};

pub type Rgb = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Texture {
    /// Smooth periodic value noise; `cell` is the lattice spacing in pixels.
    Noise {
        cell: f64,
        octaves: usize,
        colors: [Rgb; 2],
    },
    Checker {
        period: f64,
        colors: [Rgb; 2],
    },
    /// Triangle-wave ramp along `angle` (radians), so it tiles.
    Gradient {
        period: f64,
        angle: f64,
        colors: [Rgb; 2],
    },
    Stripes {
        period: f64,
        angle: f64,
        colors: [Rgb; 2],
    },
    /// An RGB PNG of exactly the scene resolution.
    Image {
        path: PathBuf,
    },
}

fn mix(c: &[Rgb; 2], t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    [
        c[0][0] + (c[1][0] - c[0][0]) * t,
        c[0][1] + (c[1][1] - c[0][1]) * t,
        c[0][2] + (c[1][2] - c[0][2]) * t,
    ]
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

struct Lattice {
    ny: usize,
    nx: usize,
    values: Vec<f64>,
}

impl Lattice {
    fn new(ny: usize, nx: usize, rng: &mut ChaCha8Rng) -> Self {
        let values = (0..ny * nx).map(|_| rng.random::<f64>()).collect();
        Self { ny, nx, values }
    }

    /// `fy`, `fx` in lattice units, periodic.
    fn eval(&self, fy: f64, fx: f64) -> f64 {
        let (y0, x0) = (fy.floor(), fx.floor());
        let (ty, tx) = (smooth(fy - y0), smooth(fx - x0));
        let yi = (y0 as i64).rem_euclid(self.ny as i64) as usize;
        let xi = (x0 as i64).rem_euclid(self.nx as i64) as usize;
        let (y1, x1) = ((yi + 1) % self.ny, (xi + 1) % self.nx);
        let at = |y: usize, x: usize| self.values[y * self.nx + x];
        let top = at(yi, xi) * (1.0 - tx) + at(yi, x1) * tx;
        let bot = at(y1, xi) * (1.0 - tx) + at(y1, x1) * tx;
        top * (1.0 - ty) + bot * ty
    }
}

fn validate_colors(colors: &[Rgb; 2]) -> Result<()> {
    if colors.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Invalid("texture colors must lie in [0, 1]".into()));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Invalid(format!(
            "texture {name} must be positive, got {v}"
        )));
    }
    Ok(())
}

impl Texture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Texture::Noise {
                cell,
                octaves,
                colors,
            } => {
                positive("cell", *cell)?;
                if *octaves == 0 {
                    return Err(Error::Invalid("noise needs at least one octave".into()));
                }
                validate_colors(colors)
            }
            Texture::Checker { period, colors }
            | Texture::Gradient { period, colors, .. }
            | Texture::Stripes { period, colors, .. } => {
                positive("period", *period)?;
                validate_colors(colors)
            }
            Texture::Image { .. } => Ok(()),
        }
    }

    pub fn rasterize(&self, h: usize, w: usize, seed: u64) -> Result<Image> {
        self.validate()?;
        let mut img = Image::zeros(h, w, 3);
        let mut put = |f: &dyn Fn(f64, f64) -> Rgb| {
            for y in 0..h {
                for x in 0..w {
                    let c = f(y as f64, x as f64);
                    for ch in 0..3 {
                        *img.at_mut(y, x, ch) = c[ch];
                    }
                }
            }
        };
        match self {
            Texture::Noise {
                cell,
                octaves,
                colors,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut layers = Vec::new();
                let mut c = *cell;
                for _ in 0..*octaves {
                    let ny = ((h as f64 / c).round() as usize).max(1);
                    let nx = ((w as f64 / c).round() as usize).max(1);
                    layers.push(Lattice::new(ny, nx, &mut rng));
                    c /= 2.0;
                }
                put(&|y, x| {
                    let (mut acc, mut amp, mut norm) = (0.0, 1.0, 0.0);
                    for l in &layers {
                        acc += amp * l.eval(y * l.ny as f64 / h as f64, x * l.nx as f64 / w as f64);
                        norm += amp;
                        amp *= 0.5;
                    }
                    mix(colors, acc / norm)
                });
            }
            Texture::Checker { period, colors } => put(&|y, x| {
                let a = (y / period).floor() as i64 + (x / period).floor() as i64;
                colors[a.rem_euclid(2) as usize]
            }),
            Texture::Gradient {
                period,
                angle,
                colors,
            } => put(&|y, x| {
                let p = (y * angle.sin() + x * angle.cos()) / period;
                mix(colors, 1.0 - (2.0 * (p - p.floor()) - 1.0).abs())
            }),
            Texture::Stripes {
                period,
                angle,
                colors,
            } => put(&|y, x| {
                let p = (y * angle.sin() + x * angle.cos()) / period;
                colors[usize::from(p - p.floor() >= 0.5)]
            }),
            Texture::Image { path } => {
                let loaded = read_png(path, 3)?;
                if (loaded.h, loaded.w) != (h, w) {
                    return Err(Error::Shape(format!(
                        "texture image {} is {}x{}, scene is {h}x{w}",
                        path.display(),
                        loaded.h,
                        loaded.w
                    )));
                }
                img = loaded;
            }
        }
        Ok(img)
    }
}
