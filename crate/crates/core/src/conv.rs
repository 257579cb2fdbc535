//! Rigid (non-deformable) 2D convolution: stride 1, zero padding that keeps
//! the spatial size, optional dilation. im2col + GEMM on `[N, C, H, W]`.

use rayon::prelude::*;

use crate::tensor::Tensor;

/// Sample chunks used for parallel gradient reduction. Fixed so that the
/// reduction order does not depend on the thread count.
pub(crate) const REDUCE_CHUNKS: usize = 16;

/// `C = alpha * op(A) * op(B) + beta * C`, row-major, `op(A)` is `m x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: slice lengths checked above; strides describe in-bounds layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub dilation: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvGeom {
    pub fn from_shapes(x: &[usize], w: &[usize], dilation: usize) -> Self {
        assert_eq!(x.len(), 4, "conv input must be [N, C, H, W]");
        assert_eq!(w.len(), 4, "conv weight must be [Co, Ci, k, k]");
        assert_eq!(x[1], w[1], "conv input channels do not match weight");
        assert_eq!(w[2], w[3], "conv kernel must be square");
        assert!(w[2] % 2 == 1, "conv kernel size must be odd");
        Self {
            cin: x[1],
            cout: w[0],
            k: w[2],
            dilation,
            h: x[2],
            w: x[3],
        }
    }

    fn taps(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1
    }
}

/// Output columns `[lo, hi)` whose source `x + dx` lies inside `[0, w)`.
fn valid_cols(w: isize, dx: isize) -> (usize, usize) {
    let lo = (-dx).clamp(0, w) as usize;
    let hi = (w - dx).clamp(0, w) as usize;
    (lo, hi.max(lo))
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (h, w, k) = (g.h as isize, g.w as isize, g.k);
    let half = (k / 2) as isize;
    let d = g.dilation as isize;
    let hw = g.hw();
    let wu = g.w;
    for ci in 0..g.cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let dy = (ky as isize - half) * d;
            for kx in 0..k {
                let dx = (kx as isize - half) * d;
                let (lo, hi) = valid_cols(w, dx);
                let row = (ci * k + ky) * k + kx;
                let out = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y + dy;
                    let orow = &mut out[y as usize * wu..(y as usize + 1) * wu];
                    if sy < 0 || sy >= h || lo >= hi {
                        orow.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * wu..(sy as usize + 1) * wu];
                    orow[..lo].fill(0.0);
                    let s0 = (lo as isize + dx) as usize;
                    orow[lo..hi].copy_from_slice(&src[s0..s0 + hi - lo]);
                    orow[hi..].fill(0.0);
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], g: &ConvGeom, gx: &mut [f64]) {
    let (h, w, k) = (g.h as isize, g.w as isize, g.k);
    let half = (k / 2) as isize;
    let d = g.dilation as isize;
    let hw = g.hw();
    let wu = g.w;
    for ci in 0..g.cin {
        let plane = &mut gx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let dy = (ky as isize - half) * d;
            for kx in 0..k {
                let dx = (kx as isize - half) * d;
                let (lo, hi) = valid_cols(w, dx);
                if lo >= hi {
                    continue;
                }
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let s0 = (lo as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * wu + s0..sy as usize * wu + s0 + hi - lo];
                    let from = &src[y as usize * wu + lo..y as usize * wu + hi];
                    for (a, b) in dst.iter_mut().zip(from) {
                        *a += b;
                    }
                }
            }
        }
    }
}

/// Forward convolution. `x: [N, Ci, H, W]`, `weight: [Co, Ci, k, k]`,
/// `bias: [Co]`. Padding is `dilation * (k / 2)` on every side.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, dilation: usize) -> Tensor {
    let g = ConvGeom::from_shapes(x.shape(), weight.shape(), dilation);
    let n = x.dim(0);
    let hw = g.hw();
    let mut out = Tensor::zeros(&[n, g.cout, g.h, g.w]);
    if n == 0 || hw == 0 {
        return out;
    }
    let wdat = weight.data();
    out.data_mut()
        .par_chunks_mut(g.cout * hw)
        .enumerate()
        .for_each_init(
            || vec![0.0; if g.is_pointwise() { 0 } else { g.taps() * hw }],
            |cols, (s, o)| {
                let xs = x.sample(s);
                let b = if g.is_pointwise() {
                    xs
                } else {
                    im2col(xs, &g, cols);
                    cols.as_slice()
                };
                fill_bias(o, bias, hw);
                gemm(g.cout, g.taps(), hw, 1.0, wdat, false, b, false, 1.0, o);
            },
        );
    out
}

pub(crate) fn fill_bias(o: &mut [f64], bias: Option<&Tensor>, hw: usize) {
    match bias {
        Some(b) => {
            for (co, chunk) in o.chunks_mut(hw).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b.data()[co]);
            }
        }
        None => o.iter_mut().for_each(|v| *v = 0.0),
    }
}

/// Gradients of a convolution with respect to its input, weight and bias.
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dilation: usize,
    grad_out: &Tensor,
) -> ConvGrads {
    let g = ConvGeom::from_shapes(x.shape(), weight.shape(), dilation);
    let n = x.dim(0);
    let hw = g.hw();
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[g.cout]);
    if n == 0 || hw == 0 {
        return ConvGrads {
            input: gx,
            weight: gw,
            bias: gb,
        };
    }
    let wdat = weight.data();
    let per_in = g.cin * hw;
    let chunk = n.div_ceil(REDUCE_CHUNKS);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = gx
        .data_mut()
        .par_chunks_mut(per_in * chunk)
        .enumerate()
        .map(|(ci, gx_chunk)| {
            let mut pw = vec![0.0; g.cout * g.taps()];
            let mut pb = vec![0.0; g.cout];
            let mut cols = vec![0.0; if g.is_pointwise() { 0 } else { g.taps() * hw }];
            let mut gcols = vec![0.0; if g.is_pointwise() { 0 } else { g.taps() * hw }];
            for (j, gxs) in gx_chunk.chunks_mut(per_in).enumerate() {
                let s = ci * chunk + j;
                let go = grad_out.sample(s);
                for (co, plane) in go.chunks(hw).enumerate() {
                    pb[co] += plane.iter().sum::<f64>();
                }
                let xs = x.sample(s);
                if g.is_pointwise() {
                    gemm(g.cout, hw, g.taps(), 1.0, go, false, xs, true, 1.0, &mut pw);
                    gemm(g.taps(), g.cout, hw, 1.0, wdat, true, go, false, 0.0, gxs);
                } else {
                    im2col(xs, &g, &mut cols);
                    gemm(
                        g.cout,
                        hw,
                        g.taps(),
                        1.0,
                        go,
                        false,
                        &cols,
                        true,
                        1.0,
                        &mut pw,
                    );
                    gemm(
                        g.taps(),
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
                    col2im_add(&gcols, &g, gxs);
                }
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
    ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

/// Straightforward nested-loop convolution, used as a reference in tests.
pub fn conv2d_reference(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    dilation: usize,
) -> Tensor {
    let g = ConvGeom::from_shapes(x.shape(), weight.shape(), dilation);
    let n = x.dim(0);
    let half = (g.k / 2) as isize;
    let mut out = Tensor::zeros(&[n, g.cout, g.h, g.w]);
    for s in 0..n {
        for co in 0..g.cout {
            for y in 0..g.h {
                for xo in 0..g.w {
                    let mut acc = bias.map_or(0.0, |b| b.data()[co]);
                    for ci in 0..g.cin {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let sy = y as isize + (ky as isize - half) * g.dilation as isize;
                                let sx = xo as isize + (kx as isize - half) * g.dilation as isize;
                                if sy < 0 || sx < 0 || sy >= g.h as isize || sx >= g.w as isize {
                                    continue;
                                }
                                acc += weight.at4(co, ci, ky, kx)
                                    * x.at4(s, ci, sy as usize, sx as usize);
                            }
                        }
                    }
                    *out.at4_mut(s, co, y, xo) = acc;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn im2col_gemm_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, d) in &[(1, 1), (3, 1), (3, 2), (3, 4), (5, 1)] {
            let x = Tensor::randn(&[3, 2, 7, 6], 1.0, &mut rng);
            let w = Tensor::randn(&[4, 2, k, k], 1.0, &mut rng);
            let b = Tensor::randn(&[4], 1.0, &mut rng);
            let fast = conv2d(&x, &w, Some(&b), d);
            let slow = conv2d_reference(&x, &w, Some(&b), d);
            assert!(fast.max_abs_diff(&slow) < 1e-12, "k={k} d={d}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::randn(&[2, 2, 5, 4], 1.0, &mut rng);
        let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let r = Tensor::randn(&[2, 3, 5, 4], 1.0, &mut rng);
        let loss = |x: &Tensor, w: &Tensor| -> f64 {
            let y = conv2d(x, w, None, 2);
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let grads = conv2d_backward(&x, &w, 2, &r);
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * h);
            assert!((fd - grads.input.data()[i]).abs() < 1e-6);
        }
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            let fd = (loss(&x, &wp) - loss(&x, &wm)) / (2.0 * h);
            assert!((fd - grads.weight.data()[i]).abs() < 1e-6);
        }
        let gb_expect: Vec<f64> = (0..3)
            .map(|c| {
                (0..2)
                    .map(|s| r.sample(s)[c * 20..(c + 1) * 20].iter().sum::<f64>())
                    .sum()
            })
            .collect();
        for (a, b) in grads.bias.data().iter().zip(&gb_expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_fine() {
        let x = Tensor::zeros(&[0, 2, 4, 4]);
        let w = Tensor::zeros(&[3, 2, 3, 3]);
        assert_eq!(conv2d(&x, &w, None, 1).shape(), &[0, 3, 4, 4]);
        let g = conv2d_backward(&x, &w, 1, &Tensor::zeros(&[0, 3, 4, 4]));
        assert_eq!(g.weight.sum(), 0.0);
    }
}
