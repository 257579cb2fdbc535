//! Joint spatial-angular dihedral symmetries.
//!
//! A [`Symmetry`] is a signed 2x2 permutation matrix `M` acting on centered
//! coordinates. The same `M` moves pixels `(y, x)` inside every view and
//! views `(u, v)` inside the array, so a point with per-view shift
//! `d * (u - uc, v - vc)` keeps disparity `d` after the transform.

use super::LightField;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Symmetry {
    m: [[i8; 2]; 2],
}

const IDENTITY: [[i8; 2]; 2] = [[1, 0], [0, 1]];
const FLIP_H: [[i8; 2]; 2] = [[1, 0], [0, -1]];
const FLIP_V: [[i8; 2]; 2] = [[-1, 0], [0, 1]];
// Counterclockwise quarter turn in (row, col) coordinates.
const ROT90: [[i8; 2]; 2] = [[0, -1], [1, 0]];

fn matmul(a: [[i8; 2]; 2], b: [[i8; 2]; 2]) -> [[i8; 2]; 2] {
    let mut r = [[0i8; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

impl Symmetry {
    pub fn identity() -> Self {
        Self { m: IDENTITY }
    }

    /// Flips first (horizontal mirrors columns, vertical mirrors rows), then
    /// `rot90` counterclockwise quarter turns.
    pub fn new(flip_h: bool, flip_v: bool, rot90: u8) -> Self {
        let mut m = IDENTITY;
        if flip_h {
            m = matmul(FLIP_H, m);
        }
        if flip_v {
            m = matmul(FLIP_V, m);
        }
        for _ in 0..rot90 % 4 {
            m = matmul(ROT90, m);
        }
        Self { m }
    }

    /// The 8 elements of the group, in a fixed order.
    pub fn all() -> [Symmetry; 8] {
        let mut out = [Symmetry::identity(); 8];
        for (i, s) in out.iter_mut().enumerate() {
            *s = Symmetry::new(i & 4 != 0, false, (i & 3) as u8);
        }
        out
    }

    /// Position of `self` in [`Symmetry::all`].
    pub fn index(&self) -> usize {
        Symmetry::all()
            .iter()
            .position(|s| s == self)
            .expect("closed group")
    }

    /// Apply `self` first, then `next`.
    pub fn then(&self, next: &Symmetry) -> Symmetry {
        Symmetry {
            m: matmul(next.m, self.m),
        }
    }

    pub fn inverse(&self) -> Symmetry {
        let m = self.m;
        Symmetry {
            m: [[m[0][0], m[1][0]], [m[0][1], m[1][1]]],
        }
    }

    pub fn matrix(&self) -> [[i8; 2]; 2] {
        self.m
    }

    pub fn swaps_axes(&self) -> bool {
        self.m[0][0] == 0
    }

    pub fn apply(&self, lf: &LightField) -> Result<LightField> {
        let (u, v) = lf.angular();
        let (h, w) = lf.spatial();
        let c = lf.channels();
        if self.swaps_axes() && u != v {
            return Err(Error::Invalid(format!(
                "quarter-turn symmetry needs a square angular array, got {u}x{v}"
            )));
        }
        let (ou, ov) = if self.swaps_axes() { (v, u) } else { (u, v) };
        let (oh, ow) = if self.swaps_axes() { (w, h) } else { (h, w) };
        let inv = self.inverse().m;
        // Doubled centered coordinates keep everything integral.
        let src = |dims_out: (usize, usize), dims_in: (usize, usize), p: (usize, usize)| {
            let a = 2 * p.0 as i64 - (dims_out.0 as i64 - 1);
            let b = 2 * p.1 as i64 - (dims_out.1 as i64 - 1);
            let ia = inv[0][0] as i64 * a + inv[0][1] as i64 * b;
            let ib = inv[1][0] as i64 * a + inv[1][1] as i64 * b;
            (
                ((ia + dims_in.0 as i64 - 1) / 2) as usize,
                ((ib + dims_in.1 as i64 - 1) / 2) as usize,
            )
        };
        let mut data = Vec::with_capacity(lf.data().len());
        for a in 0..ou {
            for b in 0..ov {
                let (su, sv) = src((ou, ov), (u, v), (a, b));
                let view = lf.view_slice(su, sv);
                for y in 0..oh {
                    for x in 0..ow {
                        let (sy, sx) = src((oh, ow), (h, w), (y, x));
                        let k = (sy * w + sx) * c;
                        data.extend_from_slice(&view[k..k + c]);
                    }
                }
            }
        }
        Ok(LightField::from_parts(
            (ou, ov),
            (oh, ow),
            lf.color_space(),
            data,
        ))
    }
}

/// Joint flip / rotation of spatial and angular axes.
pub fn augment(lf: &LightField, flip_h: bool, flip_v: bool, rot90: u8) -> Result<LightField> {
    Symmetry::new(flip_h, flip_v, rot90).apply(lf)
}
