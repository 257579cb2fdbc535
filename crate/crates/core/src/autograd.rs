//! Minimal reverse-mode differentiation over [`Tensor`] for the network.
//!
//! A [`Graph`] records operations in creation order; [`Graph::backward`]
//! walks them in reverse. Parameters live in a [`ParamStore`] and are
//! referenced by [`ParamId`], so one parameter used at several sites of a
//! graph (shared kernels) accumulates a single gradient.

use std::collections::HashMap;

use crate::blocks::{pixel_shuffle_tensor, pixel_unshuffle_tensor};
use crate::conv::{conv2d, conv2d_backward};
use crate::dconv::{deform_conv2d_batch, deform_conv2d_batch_backward};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; paths are fixed by the model layout.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
    },
    Deform {
        x: Var,
        off: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Gather {
        x: Var,
        views: usize,
        index: Vec<usize>,
    },
    Join {
        parts: Vec<(Var, usize)>,
        batch: usize,
    },
    Reshape {
        x: Var,
    },
    PixelShuffle {
        x: Var,
        alpha: usize,
    },
    L1 {
        pred: Var,
        target: Tensor,
    },
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Operation tape bound to a parameter store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.params.get(*id),
            _ => self.nodes[v.0].value.as_ref().expect("node value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// The graph leaf for a parameter; repeated calls return the same var.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Var {
        let out = conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            dilation,
        );
        let ng = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(out, Op::Conv { x, w, b, dilation }, ng)
    }

    /// Panics on shape mismatch; shapes are fixed by model construction.
    pub fn deform_conv2d(&mut self, x: Var, off: Var, w: Var, b: Option<Var>) -> Var {
        let out = deform_conv2d_batch(
            self.value(x),
            self.value(off),
            self.value(w),
            b.map(|b| self.value(b)),
        )
        .expect("deformable conv shapes");
        let ng =
            self.needs(x) || self.needs(off) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(out, Op::Deform { x, off, w, b }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { slope * v });
        let ng = self.needs(x);
        self.push(out, Op::LeakyRelu { x, slope }, ng)
    }

    /// Concatenate `[N, C_i, H, W]` tensors along channels.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let s0 = self.shape(xs[0]).to_vec();
        let (n, h, w) = (s0[0], s0[2], s0[3]);
        let hw = h * w;
        let chans: Vec<usize> = xs
            .iter()
            .map(|&v| {
                let s = self.shape(v);
                assert!(
                    s[0] == n && s[2] == h && s[3] == w,
                    "concat shape mismatch {s:?} vs {s0:?}"
                );
                s[1]
            })
            .collect();
        let ctot: usize = chans.iter().sum();
        let mut out = Tensor::zeros(&[n, ctot, h, w]);
        {
            let od = out.data_mut();
            let mut coff = 0;
            for (&v, &c) in xs.iter().zip(&chans) {
                let src = self.value(v);
                for s in 0..n {
                    let dst = &mut od[(s * ctot + coff) * hw..(s * ctot + coff + c) * hw];
                    dst.copy_from_slice(src.sample(s));
                }
                coff += c;
            }
        }
        let ng = xs.iter().any(|&v| self.needs(v));
        self.push(out, Op::Concat(xs.to_vec()), ng)
    }

    /// Channels `[start, start + len)` of `[N, C, H, W]`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let s = self.shape(x).to_vec();
        assert!(start + len <= s[1], "channel slice out of range");
        let hw = s[2] * s[3];
        let mut out = Tensor::zeros(&[s[0], len, s[2], s[3]]);
        let src = self.value(x);
        for n in 0..s[0] {
            let from = &src.sample(n)[start * hw..(start + len) * hw];
            out.data_mut()[n * len * hw..(n + 1) * len * hw].copy_from_slice(from);
        }
        let ng = self.needs(x);
        self.push(out, Op::Slice { x, start }, ng)
    }

    /// `x: [B * views, ...]` -> `[B * index.len(), ...]`, taking view
    /// `index[l]` of each sample as its `l`-th output view.
    pub fn gather_views(&mut self, x: Var, views: usize, index: &[usize]) -> Var {
        let s = self.shape(x).to_vec();
        assert!(
            views > 0 && s[0].is_multiple_of(views),
            "batch not divisible by views"
        );
        assert!(index.iter().all(|&i| i < views), "view index out of range");
        let b = s[0] / views;
        let per: usize = s[1..].iter().product();
        let mut shape = s.clone();
        shape[0] = b * index.len();
        let mut out = Tensor::zeros(&shape);
        let src = self.value(x);
        for bi in 0..b {
            for (l, &i) in index.iter().enumerate() {
                let o = bi * index.len() + l;
                out.data_mut()[o * per..(o + 1) * per].copy_from_slice(src.sample(bi * views + i));
            }
        }
        let ng = self.needs(x);
        self.push(
            out,
            Op::Gather {
                x,
                views,
                index: index.to_vec(),
            },
            ng,
        )
    }

    /// Concatenate along the view axis inside each of `batch` samples;
    /// part `(v, n)` contributes `n` views per sample.
    pub fn join_views(&mut self, parts: &[(Var, usize)], batch: usize) -> Var {
        assert!(!parts.is_empty(), "join of nothing");
        let inner = self.shape(parts[0].0)[1..].to_vec();
        let per: usize = inner.iter().product();
        let total: usize = parts.iter().map(|p| p.1).sum();
        for &(v, n) in parts {
            let s = self.shape(v);
            assert_eq!(s[0], batch * n, "join part batch mismatch");
            assert_eq!(&s[1..], inner.as_slice(), "join part shape mismatch");
        }
        let mut shape = vec![batch * total];
        shape.extend_from_slice(&inner);
        let mut out = Tensor::zeros(&shape);
        for b in 0..batch {
            let mut off = 0;
            for &(v, n) in parts {
                let src = self.value(v).data();
                let dst_start = (b * total + off) * per;
                out.data_mut()[dst_start..dst_start + n * per]
                    .copy_from_slice(&src[b * n * per..(b + 1) * n * per]);
                off += n;
            }
        }
        let ng = parts.iter().any(|p| self.needs(p.0));
        self.push(
            out,
            Op::Join {
                parts: parts.to_vec(),
                batch,
            },
            ng,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshape(shape);
        let ng = self.needs(x);
        self.push(out, Op::Reshape { x }, ng)
    }

    pub fn pixel_shuffle(&mut self, x: Var, alpha: usize) -> Var {
        let out = pixel_shuffle_tensor(self.value(x), alpha).expect("pixel shuffle channels");
        let ng = self.needs(x);
        self.push(out, Op::PixelShuffle { x, alpha }, ng)
    }

    /// Mean absolute error against a constant target, as a `[1]` tensor.
    pub fn l1_loss(&mut self, pred: Var, target: Tensor) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "l1 target shape mismatch");
        let n = p.len().max(1) as f64;
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n;
        let ng = self.needs(pred);
        self.push(
            Tensor::from_vec(&[1], vec![loss]),
            Op::L1 { pred, target },
            ng,
        )
    }

    /// Reverse pass seeded with `d(root) = 1` for a scalar root.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = Tensor::full(self.shape(root), 1.0);
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Param(_)) {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &gout, &mut grads);
        }
        let params = self
            .param_vars
            .iter()
            .filter_map(|(id, v)| grads[v.0].take().map(|g| (*id, g)))
            .collect();
        Gradients { params }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Input | Op::Param(_) => {}
            Op::Conv { x, w, b, dilation } => {
                let g = conv2d_backward(self.value(*x), self.value(*w), *dilation, gout);
                self.accumulate(grads, *x, g.input);
                self.accumulate(grads, *w, g.weight);
                if let Some(b) = b {
                    self.accumulate(grads, *b, g.bias);
                }
            }
            Op::Deform { x, off, w, b } => {
                let g = deform_conv2d_batch_backward(
                    self.value(*x),
                    self.value(*off),
                    self.value(*w),
                    gout,
                )
                .expect("deformable conv shapes");
                self.accumulate(grads, *x, g.input);
                self.accumulate(grads, *off, g.offsets);
                self.accumulate(grads, *w, g.weight);
                if let Some(b) = b {
                    self.accumulate(grads, *b, g.bias);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.clone());
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(gout.data())
                    .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_vec(xv.shape(), data));
            }
            Op::Concat(xs) => {
                let s = gout.shape();
                let (n, ctot, hw) = (s[0], s[1], s[2] * s[3]);
                let mut coff = 0;
                for &v in xs {
                    let c = self.shape(v)[1];
                    if self.needs(v) {
                        let mut g = Tensor::zeros(self.shape(v));
                        for si in 0..n {
                            let src =
                                &gout.data()[(si * ctot + coff) * hw..(si * ctot + coff + c) * hw];
                            g.data_mut()[si * c * hw..(si + 1) * c * hw].copy_from_slice(src);
                        }
                        self.accumulate(grads, v, g);
                    }
                    coff += c;
                }
            }
            Op::Slice { x, start } => {
                let xs = self.shape(*x);
                let (n, c, hw) = (xs[0], xs[1], xs[2] * xs[3]);
                let len = gout.dim(1);
                let mut g = Tensor::zeros(xs);
                for si in 0..n {
                    let dst = &mut g.data_mut()[(si * c + start) * hw..(si * c + start + len) * hw];
                    dst.copy_from_slice(gout.sample(si));
                }
                self.accumulate(grads, *x, g);
            }
            Op::Gather { x, views, index } => {
                let xs = self.shape(*x);
                let b = xs[0] / views;
                let per: usize = xs[1..].iter().product();
                let mut g = Tensor::zeros(xs);
                for bi in 0..b {
                    for (l, &i) in index.iter().enumerate() {
                        let src = gout.sample(bi * index.len() + l);
                        let d = bi * views + i;
                        for (a, v) in g.data_mut()[d * per..(d + 1) * per].iter_mut().zip(src) {
                            *a += v;
                        }
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::Join { parts, batch } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut off = 0;
                for &(v, n) in parts {
                    if self.needs(v) {
                        let per: usize = self.shape(v)[1..].iter().product();
                        let mut g = Tensor::zeros(self.shape(v));
                        for b in 0..*batch {
                            let src =
                                &gout.data()[(b * total + off) * per..(b * total + off + n) * per];
                            g.data_mut()[b * n * per..(b + 1) * n * per].copy_from_slice(src);
                        }
                        self.accumulate(grads, v, g);
                    }
                    off += n;
                }
            }
            Op::Reshape { x } => {
                let g = gout.clone().reshape(self.shape(*x));
                self.accumulate(grads, *x, g);
            }
            Op::PixelShuffle { x, alpha } => {
                let g = pixel_unshuffle_tensor(gout, *alpha).expect("pixel unshuffle");
                self.accumulate(grads, *x, g);
            }
            Op::L1 { pred, target } => {
                let p = self.value(*pred);
                let scale = gout.data()[0] / p.len().max(1) as f64;
                let data = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(a, b)| {
                        let d = a - b;
                        if d > 0.0 {
                            scale
                        } else if d < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *pred, Tensor::from_vec(p.shape(), data));
            }
        }
    }
}

/// Parameter gradients from one reverse pass.
#[derive(Debug, Default)]
pub struct Gradients {
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}
