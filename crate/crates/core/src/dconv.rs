//! Deformable 2D convolution with bilinear fractional sampling.
//!
//! For an output position `p0` and kernel tap `pn` the input is read at
//! `p0 + pn + Δpn`, where `Δpn` comes from an [`OffsetField`]. Offsets are
//! shared across input channels (one deformable group). Samples that fall
//! outside the image read zeros, corner by corner. Stride is 1 and the
//! output keeps the input's spatial size.
//!
//! Offset channel layout is tap-major with `(dy, dx)` interleaved:
//! `[tap0_dy, tap0_dx, tap1_dy, tap1_dx, ...]`, taps in raster order over
//! the `k x k` window. Checkpoints store offset-head weights in this order.
//!
//! Bilinear cells are chosen as `[ceil(p) - 1, ceil(p)]`, so at an exactly
//! integer coordinate the left cell is used. The sampled value is still the
//! stored pixel exactly; the offset gradient is the left derivative.

use rayon::prelude::*;

use crate::conv::{fill_bias, gemm, REDUCE_CHUNKS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-position, per-tap sampling displacements, `[2k², H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    data: Tensor,
    kernel_size: usize,
}

impl OffsetField {
    pub fn new(data: Tensor, kernel_size: usize) -> Result<Self> {
        let s = data.shape();
        if s.len() != 3 || s[0] != 2 * kernel_size * kernel_size {
            return Err(Error::Shape(format!(
                "offset field must be [{}, H, W] for k={kernel_size}, got {s:?}",
                2 * kernel_size * kernel_size
            )));
        }
        if !data.all_finite() {
            return Err(Error::Invalid(
                "offset field contains non-finite values".into(),
            ));
        }
        Ok(Self { data, kernel_size })
    }

    pub fn zeros(kernel_size: usize, h: usize, w: usize) -> Self {
        Self {
            data: Tensor::zeros(&[2 * kernel_size * kernel_size, h, w]),
            kernel_size,
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn dy(&self, tap: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.data.dim(1), self.data.dim(2));
        self.data.data()[((2 * tap) * h + y) * w + x]
    }

    pub fn dx(&self, tap: usize, y: usize, x: usize) -> f64 {
        let (h, w) = (self.data.dim(1), self.data.dim(2));
        self.data.data()[((2 * tap + 1) * h + y) * w + x]
    }
}

/// Weights `[Co, Ci, k, k]` and bias `[Co]` of a convolution kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvKernel {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[2] != s[3] || s[2].is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "kernel weights must be [Co, Ci, k, k] with odd k, got {s:?}"
            )));
        }
        if bias.shape() != [s[0]] {
            return Err(Error::Shape(format!(
                "bias must be [{}], got {:?}",
                s[0],
                bias.shape()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dim(1)
    }

    pub fn size(&self) -> usize {
        self.weights.dim(2)
    }

    /// Predefined integral tap displacements in raster order, e.g.
    /// `(-1,-1), (-1,0), ..., (1,1)` for `k = 3`.
    pub fn taps(&self) -> Vec<(isize, isize)> {
        tap_grid(self.size())
    }
}

pub fn tap_grid(k: usize) -> Vec<(isize, isize)> {
    let half = (k / 2) as isize;
    (0..k * k)
        .map(|t| ((t / k) as isize - half, (t % k) as isize - half))
        .collect()
}

/// Bilinear read of a `[C, H, W]` feature at fractional `(y, x)`.
pub fn bilinear_sample(feature: &Tensor, y: f64, x: f64) -> Vec<f64> {
    assert_eq!(feature.shape().len(), 3, "feature must be [C, H, W]");
    let (c, h, w) = (feature.dim(0), feature.dim(1), feature.dim(2));
    let s = Sample::at(y, x, h, w);
    (0..c)
        .map(|ci| s.read(&feature.data()[ci * h * w..(ci + 1) * h * w]))
        .collect()
}

/// Bilinear cell and weights for one sampling position. Corner indices are
/// `None` outside the image.
#[derive(Clone, Copy, Debug, Default)]
struct Sample {
    idx: [Option<usize>; 4],
    ly: f64,
    lx: f64,
}

impl Sample {
    #[inline]
    fn at(y: f64, x: f64, h: usize, w: usize) -> Self {
        let y0f = y.ceil() - 1.0;
        let x0f = x.ceil() - 1.0;
        let ly = y - y0f;
        let lx = x - x0f;
        let y0 = y0f as isize;
        let x0 = x0f as isize;
        let (h, w) = (h as isize, w as isize);
        let valid = |yy: isize, xx: isize| {
            (yy >= 0 && yy < h && xx >= 0 && xx < w).then(|| (yy * w + xx) as usize)
        };
        Self {
            idx: [
                valid(y0, x0),
                valid(y0, x0 + 1),
                valid(y0 + 1, x0),
                valid(y0 + 1, x0 + 1),
            ],
            ly,
            lx,
        }
    }

    #[inline]
    fn weights(&self) -> [f64; 4] {
        let (ly, lx) = (self.ly, self.lx);
        [
            (1.0 - ly) * (1.0 - lx),
            (1.0 - ly) * lx,
            ly * (1.0 - lx),
            ly * lx,
        ]
    }

    #[inline]
    fn corners(&self, plane: &[f64]) -> [f64; 4] {
        let mut v = [0.0; 4];
        for (o, i) in v.iter_mut().zip(self.idx) {
            if let Some(i) = i {
                *o = plane[i];
            }
        }
        v
    }

    #[inline]
    fn read(&self, plane: &[f64]) -> f64 {
        let v = self.corners(plane);
        let wt = self.weights();
        wt[0] * v[0] + wt[1] * v[1] + wt[2] * v[2] + wt[3] * v[3]
    }
}

#[derive(Clone, Copy, Debug)]
struct DeformGeom {
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
}

impl DeformGeom {
    fn taps(&self) -> usize {
        self.k * self.k
    }
    fn hw(&self) -> usize {
        self.h * self.w
    }
    fn rows(&self) -> usize {
        self.cin * self.taps()
    }
}

/// Sampling positions for every `(tap, pixel)` of one image.
fn plan(off: &[f64], g: &DeformGeom) -> Vec<Sample> {
    let hw = g.hw();
    let grid = tap_grid(g.k);
    let mut plan = Vec::with_capacity(g.taps() * hw);
    for (t, &(ty, tx)) in grid.iter().enumerate() {
        let oy = &off[(2 * t) * hw..(2 * t + 1) * hw];
        let ox = &off[(2 * t + 1) * hw..(2 * t + 2) * hw];
        for y in 0..g.h {
            for x in 0..g.w {
                let p = y * g.w + x;
                let sy = (y as isize + ty) as f64 + oy[p];
                let sx = (x as isize + tx) as f64 + ox[p];
                plan.push(Sample::at(sy, sx, g.h, g.w));
            }
        }
    }
    plan
}

fn deform_im2col(xs: &[f64], plan: &[Sample], g: &DeformGeom, cols: &mut [f64]) {
    let hw = g.hw();
    let taps = g.taps();
    for ci in 0..g.cin {
        let plane = &xs[ci * hw..(ci + 1) * hw];
        for t in 0..taps {
            let row = &mut cols[(ci * taps + t) * hw..(ci * taps + t + 1) * hw];
            let samples = &plan[t * hw..(t + 1) * hw];
            for (o, s) in row.iter_mut().zip(samples) {
                *o = s.read(plane);
            }
        }
    }
}

/// Scatter column gradients back to the input and the offsets.
fn deform_col2im(
    gcols: &[f64],
    xs: &[f64],
    plan: &[Sample],
    g: &DeformGeom,
    gx: &mut [f64],
    goff: &mut [f64],
) {
    let hw = g.hw();
    let taps = g.taps();
    for ci in 0..g.cin {
        let plane = &xs[ci * hw..(ci + 1) * hw];
        let gplane = &mut gx[ci * hw..(ci + 1) * hw];
        for t in 0..taps {
            let row = &gcols[(ci * taps + t) * hw..(ci * taps + t + 1) * hw];
            let samples = &plan[t * hw..(t + 1) * hw];
            let (gy_part, gx_part) = goff[2 * t * hw..(2 * t + 2) * hw].split_at_mut(hw);
            for p in 0..hw {
                let gv = row[p];
                if gv == 0.0 {
                    continue;
                }
                let s = &samples[p];
                let wt = s.weights();
                for (i, wi) in s.idx.iter().zip(wt) {
                    if let Some(i) = *i {
                        gplane[i] += gv * wi;
                    }
                }
                let v = s.corners(plane);
                let dy = (1.0 - s.lx) * (v[2] - v[0]) + s.lx * (v[3] - v[1]);
                let dx = (1.0 - s.ly) * (v[1] - v[0]) + s.ly * (v[3] - v[2]);
                gy_part[p] += gv * dy;
                gx_part[p] += gv * dx;
            }
        }
    }
}

fn batch_geom(x: &Tensor, offsets: &Tensor, weight: &Tensor) -> Result<DeformGeom> {
    let (xs, os, ws) = (x.shape(), offsets.shape(), weight.shape());
    if xs.len() != 4 || os.len() != 4 || ws.len() != 4 {
        return Err(Error::Shape("deformable conv expects 4D tensors".into()));
    }
    if ws[1] != xs[1] || ws[2] != ws[3] || ws[2] % 2 == 0 {
        return Err(Error::Shape(format!(
            "kernel {ws:?} incompatible with input {xs:?}"
        )));
    }
    let k = ws[2];
    if os[0] != xs[0] || os[1] != 2 * k * k || os[2] != xs[2] || os[3] != xs[3] {
        return Err(Error::Shape(format!(
            "offsets {os:?} incompatible with input {xs:?} and k={k}"
        )));
    }
    Ok(DeformGeom {
        cin: xs[1],
        cout: ws[0],
        k,
        h: xs[2],
        w: xs[3],
    })
}

/// Batched forward pass. `x: [N, Ci, H, W]`, `offsets: [N, 2k², H, W]`,
/// `weight: [Co, Ci, k, k]`, `bias: [Co]`.
pub fn deform_conv2d_batch(
    x: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let g = batch_geom(x, offsets, weight)?;
    let n = x.dim(0);
    let hw = g.hw();
    let mut out = Tensor::zeros(&[n, g.cout, g.h, g.w]);
    if n == 0 || hw == 0 {
        return Ok(out);
    }
    let wdat = weight.data();
    out.data_mut()
        .par_chunks_mut(g.cout * hw)
        .enumerate()
        .for_each_init(
            || vec![0.0; g.rows() * hw],
            |cols, (s, o)| {
                let plan = plan(offsets.sample(s), &g);
                deform_im2col(x.sample(s), &plan, &g, cols);
                fill_bias(o, bias, hw);
                gemm(g.cout, g.rows(), hw, 1.0, wdat, false, cols, false, 1.0, o);
            },
        );
    Ok(out)
}

/// Gradients of the deformable convolution.
#[derive(Clone, Debug)]
pub struct DeformGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
    pub offsets: Tensor,
}

pub fn deform_conv2d_batch_backward(
    x: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<DeformGrads> {
    let g = batch_geom(x, offsets, weight)?;
    let n = x.dim(0);
    let hw = g.hw();
    if grad_out.shape() != [n, g.cout, g.h, g.w] {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match output shape",
            grad_out.shape()
        )));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut goff = Tensor::zeros(offsets.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[g.cout]);
    if n > 0 && hw > 0 {
        let wdat = weight.data();
        let per_in = g.cin * hw;
        let per_off = 2 * g.taps() * hw;
        let chunk = n.div_ceil(REDUCE_CHUNKS);
        let partials: Vec<(Vec<f64>, Vec<f64>)> = gx
            .data_mut()
            .par_chunks_mut(per_in * chunk)
            .zip(goff.data_mut().par_chunks_mut(per_off * chunk))
            .enumerate()
            .map(|(c, (gx_chunk, goff_chunk))| {
                let mut pw = vec![0.0; g.cout * g.rows()];
                let mut pb = vec![0.0; g.cout];
                let mut cols = vec![0.0; g.rows() * hw];
                let mut gcols = vec![0.0; g.rows() * hw];
                for (j, (gxs, goffs)) in gx_chunk
                    .chunks_mut(per_in)
                    .zip(goff_chunk.chunks_mut(per_off))
                    .enumerate()
                {
                    let s = c * chunk + j;
                    let go = grad_out.sample(s);
                    for (co, plane) in go.chunks(hw).enumerate() {
                        pb[co] += plane.iter().sum::<f64>();
                    }
                    let plan = plan(offsets.sample(s), &g);
                    let xs = x.sample(s);
                    deform_im2col(xs, &plan, &g, &mut cols);
                    gemm(
                        g.cout,
                        hw,
                        g.rows(),
                        1.0,
                        go,
                        false,
                        &cols,
                        true,
                        1.0,
                        &mut pw,
                    );
                    gemm(
                        g.rows(),
                        g.cout,
                        hw,
                        1.0,
                        wdat,
                        true,
                        go,
                        false,
                        0.0,
                        &mut gcols,
                    );
                    deform_col2im(&gcols, xs, &plan, &g, gxs, goffs);
                }
                (pw, pb)
            })
            .collect();
        for (pw, pb) in partials {
            for (a, b) in gw.data_mut().iter_mut().zip(&pw) {
                *a += b;
            }
            for (a, b) in gb.data_mut().iter_mut().zip(&pb) {
                *a += b;
            }
        }
    }
    Ok(DeformGrads {
        input: gx,
        weight: gw,
        bias: gb,
        offsets: goff,
    })
}

fn check_single(feature: &Tensor, offsets: &OffsetField, kernel: &ConvKernel) -> Result<()> {
    let fs = feature.shape();
    if fs.len() != 3 {
        return Err(Error::Shape(format!(
            "feature must be [C, H, W], got {fs:?}"
        )));
    }
    if offsets.kernel_size() != kernel.size() {
        return Err(Error::Shape(format!(
            "offset field built for k={} but kernel has k={}",
            offsets.kernel_size(),
            kernel.size()
        )));
    }
    if offsets.tensor().shape()[1..] != fs[1..] {
        return Err(Error::Shape(format!(
            "offset spatial dims {:?} do not match feature {:?}",
            &offsets.tensor().shape()[1..],
            &fs[1..]
        )));
    }
    if kernel.in_channels() != fs[0] {
        return Err(Error::Shape(format!(
            "kernel expects {} input channels, feature has {}",
            kernel.in_channels(),
            fs[0]
        )));
    }
    Ok(())
}

fn as_batch(t: &Tensor) -> Tensor {
    let mut s = vec![1];
    s.extend_from_slice(t.shape());
    t.clone().reshape(&s)
}

fn drop_batch(t: Tensor) -> Tensor {
    let s = t.shape()[1..].to_vec();
    t.reshape(&s)
}

/// Single-image deformable convolution: `[Ci, H, W] -> [Co, H, W]`.
pub fn deform_conv2d(
    feature: &Tensor,
    offsets: &OffsetField,
    kernel: &ConvKernel,
) -> Result<Tensor> {
    check_single(feature, offsets, kernel)?;
    let out = deform_conv2d_batch(
        &as_batch(feature),
        &as_batch(offsets.tensor()),
        &kernel.weights,
        Some(&kernel.bias),
    )?;
    Ok(drop_batch(out))
}

/// Gradients of `sum(grad_out * deform_conv2d(feature, offsets, kernel))`.
pub fn deform_conv2d_grad(
    feature: &Tensor,
    offsets: &OffsetField,
    kernel: &ConvKernel,
    grad_out: &Tensor,
) -> Result<DeformGrads> {
    check_single(feature, offsets, kernel)?;
    let g = deform_conv2d_batch_backward(
        &as_batch(feature),
        &as_batch(offsets.tensor()),
        &kernel.weights,
        &as_batch(grad_out),
    )?;
    Ok(DeformGrads {
        input: drop_batch(g.input),
        weight: g.weight,
        bias: g.bias,
        offsets: drop_batch(g.offsets),
    })
}

/// Largest entrywise relative error between analytic and finite-difference
/// gradients for each target of a deformable convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub input: f64,
    pub weight: f64,
    pub bias: f64,
    pub offsets: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.input.max(self.weight).max(self.bias).max(self.offsets)
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite-difference check of [`deform_conv2d_grad`] against the
/// scalar objective `sum(probe * output)`. Runs sequentially.
pub fn finite_difference_check(
    feature: &Tensor,
    offsets: &OffsetField,
    kernel: &ConvKernel,
    probe: &Tensor,
    step: f64,
) -> Result<GradCheckReport> {
    let objective = |f: &Tensor, o: &OffsetField, k: &ConvKernel| -> Result<f64> {
        let y = deform_conv2d(f, o, k)?;
        Ok(y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
    };
    let analytic = deform_conv2d_grad(feature, offsets, kernel, probe)?;
    let floor = 1e-8;

    let worst_over =
        |base: &Tensor, grad: &Tensor, eval: &dyn Fn(&Tensor) -> Result<f64>| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus.data_mut()[i] += step;
                let mut minus = base.clone();
                minus.data_mut()[i] -= step;
                let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
                worst = worst.max(relative_error(grad.data()[i], fd, floor));
            }
            Ok(worst)
        };

    let input = worst_over(feature, &analytic.input, &|f| objective(f, offsets, kernel))?;
    let weight = worst_over(&kernel.weights, &analytic.weight, &|w| {
        objective(
            feature,
            offsets,
            &ConvKernel::new(w.clone(), kernel.bias.clone())?,
        )
    })?;
    let bias = worst_over(&kernel.bias, &analytic.bias, &|b| {
        objective(
            feature,
            offsets,
            &ConvKernel::new(kernel.weights.clone(), b.clone())?,
        )
    })?;
    let offs = worst_over(offsets.tensor(), &analytic.offsets, &|o| {
        objective(
            feature,
            &OffsetField::new(o.clone(), offsets.kernel_size())?,
            kernel,
        )
    })?;
    Ok(GradCheckReport {
        input,
        weight,
        bias,
        offsets: offs,
    })
}
