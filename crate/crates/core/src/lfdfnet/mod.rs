//! The light-field super-resolution network and its ablation variants.
//!
//! Activations are `[N, C, H, W]` with `N = batch * A²`, views in raster
//! order inside each sample. Inside the alignment modules the center view
//! and the `A² - 1` side views are carried as separate tensors
//! ([`ViewFeatures`]); collected and fused features use the collect order
//! (sides in raster order, center last).

mod config;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::blocks::{Conv2d, FeatureBlock, Imdb, ResidualBlock};
use crate::error::{Error, Result};
use crate::lfcore::{resize_bicubic, ColorSpace, Image, LightField};
use crate::tensor::Tensor;

pub use config::{NetworkConfig, Variant};

/// Stage-`k` features of every view.
#[derive(Clone, Copy, Debug)]
pub struct ViewFeatures {
    /// `[B, C, H, W]`.
    pub center: Var,
    /// `[B (A² - 1), C, H, W]`, raster order without the center.
    pub sides: Var,
    pub stage: usize,
}

/// One deformable convolution evaluated during a forward pass.
#[derive(Clone, Debug)]
pub struct DeformCall {
    pub input: Var,
    pub offsets: Var,
    pub output: Var,
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Handles to intermediate values of one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Probe {
    pub offsets: Vec<Var>,
    pub deform: Vec<DeformCall>,
    /// Fused feature of each stage, as produced by the fusion conv.
    pub fused: Vec<Var>,
    /// Input of the reconstruction module, raster order.
    pub reconstruction_input: Option<Var>,
}

/// Concat(a, b), 1x1 reduce to C, feature blocks, 1x1 head to `2 k²`.
#[derive(Clone, Debug)]
pub struct OffsetBranch {
    pub reduce: Conv2d,
    pub blocks: Vec<FeatureBlock>,
    pub head: Conv2d,
}

impl OffsetBranch {
    fn new(store: &mut ParamStore, name: &str, cfg: &NetworkConfig) -> Self {
        let c = cfg.channels;
        let bc = cfg.blocks();
        let aspp = cfg.variant != Variant::NoAsppOfb;
        Self {
            reduce: Conv2d::new(store, &format!("{name}.reduce"), 2 * c, c, 1, 1),
            blocks: (0..cfg.ofb_aspp_blocks)
                .map(|i| FeatureBlock::new(store, &format!("{name}.block{i}"), &bc, aspp))
                .collect(),
            head: Conv2d::new(store, &format!("{name}.head"), c, cfg.offset_channels, 1, 1),
        }
    }

    /// Offsets for `a` relative to `b`.
    pub fn forward(&self, g: &mut Graph, a: Var, b: Var) -> Result<Var> {
        if g.shape(a) != g.shape(b) {
            return Err(Error::Shape(format!(
                "offset branch inputs differ: {:?} vs {:?}",
                g.shape(a),
                g.shape(b)
            )));
        }
        let cat = g.concat(&[a, b]);
        let mut x = self.reduce.forward(g, cat);
        for b in &self.blocks {
            x = b.forward(g, x)?;
        }
        Ok(self.head.forward(g, x))
    }

    fn convs(&self) -> Vec<&Conv2d> {
        let mut v = vec![&self.reduce];
        v.extend(self.blocks.iter().flat_map(|b| b.convs()));
        v.push(&self.head);
        v
    }
}

/// Deformable alignment (offset branch + one kernel) or its rigid stand-in.
#[derive(Clone, Debug)]
pub enum Aligner {
    Deform {
        branch: OffsetBranch,
        kernel: Conv2d,
    },
    Rigid {
        kernel: Conv2d,
    },
}

impl Aligner {
    fn new(store: &mut ParamStore, name: &str, cfg: &NetworkConfig) -> Self {
        let c = cfg.channels;
        let kernel = Conv2d::new(store, &format!("{name}.dcn"), c, c, cfg.kernel_size, 1);
        if cfg.variant == Variant::NoDcn {
            Aligner::Rigid { kernel }
        } else {
            Aligner::Deform {
                branch: OffsetBranch::new(store, &format!("{name}.ofb"), cfg),
                kernel,
            }
        }
    }

    pub fn kernel(&self) -> &Conv2d {
        match self {
            Aligner::Deform { kernel, .. } | Aligner::Rigid { kernel } => kernel,
        }
    }

    /// Align `x` with `reference`.
    fn align(&self, g: &mut Graph, x: Var, reference: Var, probe: &mut Probe) -> Result<Var> {
        match self {
            Aligner::Rigid { kernel } => Ok(kernel.forward(g, x)),
            Aligner::Deform { branch, kernel } => {
                let off = branch.forward(g, x, reference)?;
                let (w, b) = (g.param(kernel.weight), g.param(kernel.bias));
                let out = g.deform_conv2d(x, off, w, Some(b));
                probe.offsets.push(off);
                probe.deform.push(DeformCall {
                    input: x,
                    offsets: off,
                    output: out,
                    weight: kernel.weight,
                    bias: kernel.bias,
                });
                Ok(out)
            }
        }
    }

    fn convs(&self) -> Vec<&Conv2d> {
        match self {
            Aligner::Rigid { kernel } => vec![kernel],
            Aligner::Deform { branch, kernel } => {
                let mut v = branch.convs();
                v.push(kernel);
                v
            }
        }
    }
}

/// One cascaded stage between feature extraction and reconstruction.
#[derive(Clone, Debug)]
pub enum Stage {
    /// Collect, fuse and distribute.
    Adam {
        aligner: Aligner,
        fusion: Conv2d,
        squeeze: Conv2d,
    },
    /// Collect and fuse into the center only; sides get `side`.
    CollectOnly {
        aligner: Aligner,
        fusion: Conv2d,
        squeeze: Conv2d,
        side: ResidualBlock,
    },
    /// A residual block on every view independently.
    PerView { block: ResidualBlock },
}

impl Stage {
    fn new(store: &mut ParamStore, k: usize, cfg: &NetworkConfig) -> Self {
        let name = format!("adam{k}");
        let c = cfg.channels;
        let vc = cfg.num_views() * c;
        let bc = cfg.blocks();
        match cfg.variant {
            Variant::NoAdam => Stage::PerView {
                block: ResidualBlock::new(store, &format!("{name}.res"), &bc),
            },
            Variant::NoDist => Stage::CollectOnly {
                aligner: Aligner::new(store, &name, cfg),
                fusion: Conv2d::new(store, &format!("{name}.fuse"), vc, c, 1, 1),
                squeeze: Conv2d::new(store, &format!("{name}.squeeze"), 2 * c, c, 1, 1),
                side: ResidualBlock::new(store, &format!("{name}.side"), &bc),
            },
            _ => Stage::Adam {
                aligner: Aligner::new(store, &name, cfg),
                fusion: Conv2d::new(store, &format!("{name}.fuse"), vc, vc, 1, 1),
                squeeze: Conv2d::new(store, &format!("{name}.squeeze"), 2 * c, c, 1, 1),
            },
        }
    }

    pub fn aligner(&self) -> Option<&Aligner> {
        match self {
            Stage::Adam { aligner, .. } | Stage::CollectOnly { aligner, .. } => Some(aligner),
            Stage::PerView { .. } => None,
        }
    }

    fn convs(&self) -> Vec<&Conv2d> {
        match self {
            Stage::Adam {
                aligner,
                fusion,
                squeeze,
            } => {
                let mut v = aligner.convs();
                v.extend([fusion, squeeze]);
                v
            }
            Stage::CollectOnly {
                aligner,
                fusion,
                squeeze,
                side,
            } => {
                let mut v = aligner.convs();
                v.extend([fusion, squeeze]);
                v.extend(side.convs());
                v
            }
            Stage::PerView { block } => block.convs(),
        }
    }
}

fn repeat_index(n: usize) -> Vec<usize> {
    vec![0; n]
}

/// The full network with its parameters.
#[derive(Clone, Debug)]
pub struct LfDfNet {
    cfg: NetworkConfig,
    store: ParamStore,
    fem_head: Conv2d,
    fem_blocks: Vec<FeatureBlock>,
    stages: Vec<Stage>,
    recon_head: Conv2d,
    imdbs: Vec<Imdb>,
    up_expand: Conv2d,
    up_out: Conv2d,
}

impl LfDfNet {
    /// Parameters start at zero; see `trainer::init_weights`.
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let s = &mut store;
        let c = cfg.channels;
        let bc = cfg.blocks();
        let fem_head = Conv2d::new(s, "fem.head", 1, c, 1, 1);
        let aspp = cfg.variant != Variant::NoAsppFem;
        let mut fem_blocks: Vec<FeatureBlock> = (0..cfg.fem_aspp_blocks)
            .map(|i| FeatureBlock::new(s, &format!("fem.block{i}"), &bc, aspp))
            .collect();
        fem_blocks.extend((0..cfg.fem_res_blocks).map(|i| {
            FeatureBlock::new(
                s,
                &format!("fem.block{}", cfg.fem_aspp_blocks + i),
                &bc,
                false,
            )
        }));
        let stages = (0..cfg.adams).map(|k| Stage::new(s, k, &cfg)).collect();
        let recon_head = Conv2d::new(s, "recon.head", cfg.reconstruction_channels(), c, 1, 1);
        let imdbs = (0..cfg.imdbs)
            .map(|i| Imdb::new(s, &format!("recon.imdb{i}"), &bc))
            .collect();
        let up_expand = Conv2d::new(s, "up.expand", c, cfg.alpha * cfg.alpha * c, 1, 1);
        let up_out = Conv2d::new(s, "up.out", c, 1, 1, 1);
        Ok(Self {
            cfg,
            store,
            fem_head,
            fem_blocks,
            stages,
            recon_head,
            imdbs,
            up_expand,
            up_out,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn set_params(&mut self, store: ParamStore) -> Result<()> {
        if store.len() != self.store.len()
            || self.store.ids().any(|id| {
                store.id(self.store.name(id)) != Some(id)
                    || store.get(id).shape() != self.store.get(id).shape()
            })
        {
            return Err(Error::Checkpoint(
                "parameter layout does not match the model".into(),
            ));
        }
        self.store = store;
        Ok(())
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Every conv layer once, in construction order.
    pub fn convs(&self) -> Vec<&Conv2d> {
        let mut v = vec![&self.fem_head];
        v.extend(self.fem_blocks.iter().flat_map(|b| b.convs()));
        v.extend(self.stages.iter().flat_map(|s| s.convs()));
        v.push(&self.recon_head);
        v.extend(self.imdbs.iter().flat_map(|b| b.convs()));
        v.extend([&self.up_expand, &self.up_out]);
        v
    }

    /// Last conv of every offset branch.
    pub fn offset_heads(&self) -> Vec<&Conv2d> {
        self.stages
            .iter()
            .filter_map(|s| match s.aligner() {
                Some(Aligner::Deform { branch, .. }) => Some(&branch.head),
                _ => None,
            })
            .collect()
    }

    /// The kernel used for collection at stage `k`.
    pub fn collect_kernel(&self, k: usize) -> Option<&Conv2d> {
        self.stages.get(k)?.aligner().map(|a| a.kernel())
    }

    /// The kernel used for distribution at stage `k`; the same object as
    /// [`Self::collect_kernel`].
    pub fn distribute_kernel(&self, k: usize) -> Option<&Conv2d> {
        match self.stages.get(k)? {
            Stage::Adam { aligner, .. } => Some(aligner.kernel()),
            _ => None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    fn feature_extract(&self, g: &mut Graph, x: Var) -> Result<ViewFeatures> {
        let views = self.cfg.num_views();
        if g.shape(x)[1] != 1 || !g.shape(x)[0].is_multiple_of(views) {
            return Err(Error::Shape(format!(
                "expected [B * {views}, 1, H, W] input, got {:?}",
                g.shape(x)
            )));
        }
        let mut f = self.fem_head.forward(g, x);
        for b in &self.fem_blocks {
            f = b.forward(g, f)?;
        }
        let order = self.cfg.collect_order();
        let sides = g.gather_views(f, views, &order[..views - 1]);
        let center = g.gather_views(f, views, &[self.cfg.center_view()]);
        Ok(ViewFeatures {
            center,
            sides,
            stage: 0,
        })
    }

    fn stage_forward(
        &self,
        g: &mut Graph,
        stage: &Stage,
        prev: ViewFeatures,
        batch: usize,
        probe: &mut Probe,
    ) -> Result<ViewFeatures> {
        let views = self.cfg.num_views();
        let sides_n = views - 1;
        let c = self.cfg.channels;
        let (h, w) = {
            let s = g.shape(prev.center);
            (s[2], s[3])
        };
        let collect = |g: &mut Graph, aligner: &Aligner, probe: &mut Probe| -> Result<Var> {
            let center_rep = g.gather_views(prev.center, 1, &repeat_index(sides_n));
            let aligned = aligner.align(g, prev.sides, center_rep, probe)?;
            let joined = g.join_views(&[(aligned, sides_n), (prev.center, 1)], batch);
            Ok(g.reshape(joined, &[batch, views * c, h, w]))
        };
        let next = match stage {
            Stage::PerView { block } => {
                let all = g.join_views(&[(prev.sides, sides_n), (prev.center, 1)], batch);
                let out = block.forward(g, all)?;
                let idx: Vec<usize> = (0..sides_n).collect();
                ViewFeatures {
                    sides: g.gather_views(out, views, &idx),
                    center: g.gather_views(out, views, &[sides_n]),
                    stage: prev.stage + 1,
                }
            }
            Stage::CollectOnly {
                aligner,
                fusion,
                squeeze,
                side,
            } => {
                let collected = collect(g, aligner, probe)?;
                let fused = fusion.forward(g, collected);
                probe.fused.push(fused);
                let cat = g.concat(&[fused, prev.center]);
                ViewFeatures {
                    center: squeeze.forward(g, cat),
                    sides: side.forward(g, prev.sides)?,
                    stage: prev.stage + 1,
                }
            }
            Stage::Adam {
                aligner,
                fusion,
                squeeze,
            } => {
                let collected = collect(g, aligner, probe)?;
                let fused = fusion.forward(g, collected);
                probe.fused.push(fused);
                let per_view = g.reshape(fused, &[batch * views, c, h, w]);
                let idx: Vec<usize> = (0..sides_n).collect();
                let fuse_sides = g.gather_views(per_view, views, &idx);
                let fuse_center = g.gather_views(per_view, views, &[sides_n]);
                let distributed = aligner.align(g, fuse_sides, prev.sides, probe)?;
                let side_cat = g.concat(&[distributed, prev.sides]);
                let center_cat = g.concat(&[fuse_center, prev.center]);
                ViewFeatures {
                    sides: squeeze.forward(g, side_cat),
                    center: squeeze.forward(g, center_cat),
                    stage: prev.stage + 1,
                }
            }
        };
        Ok(next)
    }

    /// Builds the forward pass for `lr: [B * A², 1, h, w]`, adding
    /// `upsampled: [B * A², 1, αh, αw]` as the global residual.
    pub fn build(&self, g: &mut Graph, lr: Var, upsampled: Var) -> Result<(Var, Probe)> {
        let views = self.cfg.num_views();
        let batch = g.shape(lr)[0] / views.max(1);
        let mut probe = Probe::default();
        let mut vf = self.feature_extract(g, lr)?;
        let mut hierarchy = Vec::with_capacity(self.stages.len() + 1);
        hierarchy.push(g.join_views(&[(vf.sides, views - 1), (vf.center, 1)], batch));
        for stage in &self.stages {
            vf = self.stage_forward(g, stage, vf, batch, &mut probe)?;
            hierarchy.push(g.join_views(&[(vf.sides, views - 1), (vf.center, 1)], batch));
        }
        let cat = g.concat(&hierarchy);
        // Back from collect order to raster order.
        let order = self.cfg.collect_order();
        let mut raster = vec![0; views];
        for (pos, &view) in order.iter().enumerate() {
            raster[view] = pos;
        }
        let cat = g.gather_views(cat, views, &raster);
        probe.reconstruction_input = Some(cat);
        let mut f = self.recon_head.forward(g, cat);
        for b in &self.imdbs {
            f = b.forward(g, f)?;
        }
        let e = self.up_expand.forward(g, f);
        let s = g.pixel_shuffle(e, self.cfg.alpha);
        let y = self.up_out.forward(g, s);
        if g.shape(y) != g.shape(upsampled) {
            return Err(Error::Shape(format!(
                "residual shape {:?} does not match output {:?}",
                g.shape(upsampled),
                g.shape(y)
            )));
        }
        Ok((g.add(y, upsampled), probe))
    }

    /// `[B * A², 1, h, w] -> [B * A², 1, αh, αw]`, unclamped.
    pub fn forward_tensor(&self, lr: &Tensor) -> Result<Tensor> {
        let up = bicubic_upscale(lr, self.cfg.alpha)?;
        let mut g = Graph::new(&self.store);
        let x = g.input(lr.clone());
        let u = g.input(up);
        let (y, _) = self.build(&mut g, x, u)?;
        Ok(g.value(y).clone())
    }

    /// Super-resolves a single-channel `A x A` light field; values are
    /// clamped to `[0, 1]`.
    pub fn forward(&self, lr: &LightField) -> Result<LightField> {
        let a = self.cfg.angular;
        if lr.angular() != (a, a) {
            return Err(Error::Shape(format!(
                "network expects {a}x{a} views, got {:?}",
                lr.angular()
            )));
        }
        let out = self.forward_tensor(&lf_to_tensor(lr)?)?;
        tensor_to_lf(&out, (a, a))
    }

    pub fn manifest(&self, seed: Option<u64>) -> ModelManifest {
        ModelManifest {
            network: self.cfg.clone(),
            decisions: design_decisions(),
            num_params: self.num_params(),
            seed,
        }
    }
}

/// Per-view bicubic enlargement of `[N, 1, h, w]` by `alpha`, clamped.
pub fn bicubic_upscale(x: &Tensor, alpha: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::Shape(format!("expected [N, 1, h, w], got {s:?}")));
    }
    let (n, h, w) = (s[0], s[2], s[3]);
    let (oh, ow) = (h * alpha, w * alpha);
    let mut out = Vec::with_capacity(n * oh * ow);
    for i in 0..n {
        let img = Image::new(h, w, 1, x.sample(i).to_vec())?;
        out.extend(resize_bicubic(&img, alpha as f64, false)?.data);
    }
    Ok(Tensor::from_vec(&[n, 1, oh, ow], out))
}

/// Y light field to `[U V, 1, H, W]`.
pub fn lf_to_tensor(lf: &LightField) -> Result<Tensor> {
    if lf.channels() != 1 {
        return Err(Error::Invalid(format!(
            "network input must be single-channel, got {:?}",
            lf.color_space()
        )));
    }
    let (h, w) = lf.spatial();
    Ok(Tensor::from_vec(
        &[lf.num_views(), 1, h, w],
        lf.data().to_vec(),
    ))
}

/// `[U V, 1, H, W]` to a Y light field, clamping into `[0, 1]`.
pub fn tensor_to_lf(t: &Tensor, angular: (usize, usize)) -> Result<LightField> {
    let s = t.shape();
    if s.len() != 4 || s[1] != 1 || s[0] != angular.0 * angular.1 {
        return Err(Error::Shape(format!(
            "cannot view {s:?} as a {angular:?} light field"
        )));
    }
    LightField::new_clamped(angular, (s[2], s[3]), ColorSpace::Y, t.data().to_vec())
}

/// Exact trainable-scalar count (shared kernels counted once).
pub fn count_params(cfg: &NetworkConfig) -> Result<usize> {
    Ok(LfDfNet::new(cfg.clone())?.num_params())
}

/// Floating-point operations (2 x multiply-accumulates) of one forward
/// pass on one `A x A x h x w` input, counting every conv application and
/// the four-tap bilinear reads of each deformable conv.
pub fn estimate_flops(cfg: &NetworkConfig, input: (usize, usize)) -> Result<f64> {
    let net = LfDfNet::new(cfg.clone())?;
    let p = (input.0 * input.1) as f64;
    let v = cfg.num_views() as f64;
    let s = v - 1.0;
    let macs = |convs: &[&Conv2d]| convs.iter().map(|c| c.macs_per_pixel() as f64).sum::<f64>();
    let mut total = 0.0;
    let mut fem = vec![&net.fem_head];
    fem.extend(net.fem_blocks.iter().flat_map(|b| b.convs()));
    total += macs(&fem) * v * p;
    for stage in &net.stages {
        let align = |a: &Aligner, times: f64| -> f64 {
            let k = a.kernel();
            let sampling = match a {
                Aligner::Deform { .. } => (4 * k.in_channels * k.kernel * k.kernel) as f64,
                Aligner::Rigid { .. } => 0.0,
            };
            (macs(&a.convs()) + sampling) * times * p
        };
        total += match stage {
            Stage::Adam {
                aligner,
                fusion,
                squeeze,
            } => align(aligner, 2.0 * s) + macs(&[fusion]) * p + macs(&[squeeze]) * v * p,
            Stage::CollectOnly {
                aligner,
                fusion,
                squeeze,
                side,
            } => {
                align(aligner, s)
                    + macs(&[fusion]) * p
                    + macs(&[squeeze]) * p
                    + macs(&side.convs()) * s * p
            }
            Stage::PerView { block } => macs(&block.convs()) * v * p,
        };
    }
    let mut recon = vec![&net.recon_head, &net.up_expand];
    recon.extend(net.imdbs.iter().flat_map(|b| b.convs()));
    total += macs(&recon) * v * p;
    total += macs(&[&net.up_out]) * v * p * (cfg.alpha * cfg.alpha) as f64;
    Ok(2.0 * total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub network: NetworkConfig,
    pub decisions: Vec<(String, String)>,
    pub num_params: usize,
    pub seed: Option<u64>,
}

impl ModelManifest {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Architectural choices the model fixes, recorded with every checkpoint.
pub fn design_decisions() -> Vec<(String, String)> {
    [
        ("global_residual", "bicubic-upscaled Y added to the output"),
        ("collect_order", "side views in raster order, center last"),
        (
            "distribute_offset_inputs",
            "(fused sub-feature, previous side feature)",
        ),
        ("center_reference", "previous-stage center feature"),
        (
            "reconstruction_adapter",
            "1x1 conv (K+1)C -> C before the IMDBs",
        ),
        (
            "offset_layout",
            "tap-major, (dy, dx) interleaved, taps in raster order",
        ),
        ("padding", "zero padding, stride 1"),
        (
            "squeeze",
            "one 1x1 2C -> C conv per stage for side and center views",
        ),
        ("imdb_widths", "narrow C, wide 3C, refined 4C"),
        (
            "no_dist_fusion",
            "1x1 A^2 C -> C into the center; sides get a residual block",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}
