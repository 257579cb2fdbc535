//! Reusable network blocks: residual ASPP, plain residual block, the
//! information multi-distillation block (IMDB) and pixel shuffle.
//!
//! Blocks register their parameters in a [`ParamStore`] at construction
//! (all zeros; see `trainer::init_weights`) and build graph nodes on
//! `forward`. Every convolution carries a bias.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub channels: usize,
    pub aspp_dilations: Vec<usize>,
    pub leaky_slope: f64,
    pub imdb_narrow: usize,
    pub imdb_wide: usize,
    pub imdb_refined: usize,
    /// Number of narrow/wide splits inside one IMDB.
    pub imdb_stages: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self::for_channels(32)
    }
}

impl BlockConfig {
    /// IMDB widths scale with the feature depth: narrow = C, wide = 3C,
    /// refined = 4C (32 / 96 / 128 at C = 32).
    pub fn for_channels(channels: usize) -> Self {
        Self {
            channels,
            aspp_dilations: vec![1, 2, 4],
            leaky_slope: 0.1,
            imdb_narrow: channels,
            imdb_wide: 3 * channels,
            imdb_refined: 4 * channels,
            imdb_stages: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("block channels must be positive".into()));
        }
        if self.imdb_narrow + self.imdb_wide != self.imdb_refined {
            return Err(Error::Config(format!(
                "imdb split {}+{} does not add up to refined width {}",
                self.imdb_narrow, self.imdb_wide, self.imdb_refined
            )));
        }
        if self.imdb_stages == 0 {
            return Err(Error::Config("imdb needs at least one stage".into()));
        }
        Ok(())
    }
}

/// Stride-1 convolution with size-preserving zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            dilation,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (w, b) = (g.param(self.weight), g.param(self.bias));
        g.conv2d(x, w, Some(b), self.dilation)
    }

    /// Multiply-accumulates per output pixel.
    pub fn macs_per_pixel(&self) -> usize {
        self.in_channels * self.out_channels * self.kernel * self.kernel
    }

    pub fn num_params(&self) -> usize {
        self.macs_per_pixel() + self.out_channels
    }
}

fn check_channels(g: &Graph, x: Var, expect: usize, what: &str) -> Result<()> {
    let c = g.shape(x)[1];
    if c != expect {
        return Err(Error::Shape(format!(
            "{what} expects {expect} channels, got {c}"
        )));
    }
    Ok(())
}

/// Parallel dilated 3x3 convs, LeakyReLU, concat, 1x1 fuse, residual add.
#[derive(Clone, Debug)]
pub struct ResidualAspp {
    pub branches: Vec<Conv2d>,
    pub fuse: Conv2d,
    slope: f64,
    channels: usize,
}

impl ResidualAspp {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BlockConfig) -> Self {
        let c = cfg.channels;
        let branches = cfg
            .aspp_dilations
            .iter()
            .map(|&d| Conv2d::new(store, &format!("{name}.dil{d}"), c, c, 3, d))
            .collect::<Vec<_>>();
        let fuse = Conv2d::new(store, &format!("{name}.fuse"), branches.len() * c, c, 1, 1);
        Self {
            branches,
            fuse,
            slope: cfg.leaky_slope,
            channels: c,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        check_channels(g, x, self.channels, "residual ASPP block")?;
        let outs: Vec<Var> = self
            .branches
            .iter()
            .map(|b| {
                let y = b.forward(g, x);
                g.leaky_relu(y, self.slope)
            })
            .collect();
        let cat = g.concat(&outs);
        let fused = self.fuse.forward(g, cat);
        Ok(g.add(fused, x))
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        self.branches
            .iter()
            .chain(std::iter::once(&self.fuse))
            .collect()
    }
}

/// conv3x3, LeakyReLU, conv3x3, residual add.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    slope: f64,
    channels: usize,
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BlockConfig) -> Self {
        let c = cfg.channels;
        Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c, c, 3, 1),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c, c, 3, 1),
            slope: cfg.leaky_slope,
            channels: c,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        check_channels(g, x, self.channels, "residual block")?;
        let y = self.conv1.forward(g, x);
        let y = g.leaky_relu(y, self.slope);
        let y = self.conv2.forward(g, y);
        Ok(g.add(y, x))
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        vec![&self.conv1, &self.conv2]
    }
}

/// Either block flavour, for stacks that can swap ASPP for plain blocks.
#[derive(Clone, Debug)]
pub enum FeatureBlock {
    Aspp(ResidualAspp),
    Plain(ResidualBlock),
}

impl FeatureBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BlockConfig, aspp: bool) -> Self {
        if aspp {
            FeatureBlock::Aspp(ResidualAspp::new(store, &format!("{name}.aspp"), cfg))
        } else {
            FeatureBlock::Plain(ResidualBlock::new(store, &format!("{name}.res"), cfg))
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            FeatureBlock::Aspp(b) => b.forward(g, x),
            FeatureBlock::Plain(b) => b.forward(g, x),
        }
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        match self {
            FeatureBlock::Aspp(b) => b.convs(),
            FeatureBlock::Plain(b) => b.convs(),
        }
    }
}

/// Information multi-distillation block.
///
/// head 3x3 (C -> refined) + LeakyReLU, then per stage: split into
/// narrow/wide, keep narrow, refine wide by 3x3 back to `refined` channels
/// and LeakyReLU. The kept narrows and the last refined feature are
/// concatenated and fused by a 1x1 conv to C, then the input is added.
#[derive(Clone, Debug)]
pub struct Imdb {
    pub head: Conv2d,
    pub refine: Vec<Conv2d>,
    pub bottleneck: Conv2d,
    narrow: usize,
    wide: usize,
    slope: f64,
    channels: usize,
}

impl Imdb {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BlockConfig) -> Self {
        let c = cfg.channels;
        let head = Conv2d::new(store, &format!("{name}.head"), c, cfg.imdb_refined, 3, 1);
        let refine = (0..cfg.imdb_stages)
            .map(|s| {
                Conv2d::new(
                    store,
                    &format!("{name}.refine{s}"),
                    cfg.imdb_wide,
                    cfg.imdb_refined,
                    3,
                    1,
                )
            })
            .collect();
        let bottleneck = Conv2d::new(
            store,
            &format!("{name}.bottleneck"),
            Self::bottleneck_width(cfg),
            c,
            1,
            1,
        );
        Self {
            head,
            refine,
            bottleneck,
            narrow: cfg.imdb_narrow,
            wide: cfg.imdb_wide,
            slope: cfg.leaky_slope,
            channels: c,
        }
    }

    /// Channels entering the bottleneck: `stages * narrow + refined`.
    pub fn bottleneck_width(cfg: &BlockConfig) -> usize {
        cfg.imdb_stages * cfg.imdb_narrow + cfg.imdb_refined
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        check_channels(g, x, self.channels, "IMDB")?;
        let mut cur = self.head.forward(g, x);
        cur = g.leaky_relu(cur, self.slope);
        let mut kept = Vec::with_capacity(self.refine.len() + 1);
        for conv in &self.refine {
            kept.push(g.slice_channels(cur, 0, self.narrow));
            let wide = g.slice_channels(cur, self.narrow, self.wide);
            cur = conv.forward(g, wide);
            cur = g.leaky_relu(cur, self.slope);
        }
        kept.push(cur);
        let cat = g.concat(&kept);
        let y = self.bottleneck.forward(g, cat);
        Ok(g.add(y, x))
    }

    pub fn convs(&self) -> Vec<&Conv2d> {
        std::iter::once(&self.head)
            .chain(self.refine.iter())
            .chain(std::iter::once(&self.bottleneck))
            .collect()
    }
}

/// `[N, a²C, H, W] -> [N, C, aH, aW]` with
/// `out[c, a*h + i, a*w + j] = in[c*a² + i*a + j, h, w]`.
pub fn pixel_shuffle_tensor(x: &Tensor, alpha: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!(
            "pixel shuffle expects 4D input, got {s:?}"
        )));
    }
    let a2 = alpha * alpha;
    if alpha == 0 || !s[1].is_multiple_of(a2) {
        return Err(Error::Shape(format!(
            "{} channels not divisible by alpha^2 = {a2}",
            s[1]
        )));
    }
    let (n, c, h, w) = (s[0], s[1] / a2, s[2], s[3]);
    let mut out = Tensor::zeros(&[n, c, alpha * h, alpha * w]);
    for b in 0..n {
        for co in 0..c {
            for i in 0..alpha {
                for j in 0..alpha {
                    let ci = co * a2 + i * alpha + j;
                    for y in 0..h {
                        for xx in 0..w {
                            *out.at4_mut(b, co, alpha * y + i, alpha * xx + j) =
                                x.at4(b, ci, y, xx);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle_tensor`].
pub fn pixel_unshuffle_tensor(x: &Tensor, alpha: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || alpha == 0 || !s[2].is_multiple_of(alpha) || !s[3].is_multiple_of(alpha) {
        return Err(Error::Shape(format!(
            "cannot unshuffle {s:?} by alpha = {alpha}"
        )));
    }
    let a2 = alpha * alpha;
    let (n, c, h, w) = (s[0], s[1], s[2] / alpha, s[3] / alpha);
    let mut out = Tensor::zeros(&[n, c * a2, h, w]);
    for b in 0..n {
        for co in 0..c {
            for i in 0..alpha {
                for j in 0..alpha {
                    let ci = co * a2 + i * alpha + j;
                    for y in 0..h {
                        for xx in 0..w {
                            *out.at4_mut(b, ci, y, xx) =
                                x.at4(b, co, alpha * y + i, alpha * xx + j);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
