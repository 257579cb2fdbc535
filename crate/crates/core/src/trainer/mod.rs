//! Training: patch preparation, augmentation, L1 loss, Adam with step
//! decay, checkpoints and a JSON-lines step log.

mod checkpoint;

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::lfcore::dataset::Scene;
use crate::lfcore::{degrade, extract_patches, to_y, LightField, Symmetry};
use crate::lfdfnet::{bicubic_upscale, lf_to_tensor, LfDfNet, NetworkConfig};
use crate::tensor::Tensor;

pub use checkpoint::{checkpoint_paths, Checkpoint, CheckpointMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub total_epochs: usize,
    /// Low-resolution patch side; high-resolution patches are
    /// `alpha * patch_size` wide.
    pub patch_size: usize,
    /// Patch stride on the high-resolution views.
    pub stride: usize,
    pub seed: u64,
    pub augment: bool,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            lr0: 2e-4,
            decay_factor: 0.5,
            decay_every: 15,
            total_epochs: 50,
            patch_size: 32,
            stride: 32,
            seed: 0,
            augment: true,
            init: InitScheme::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, alpha: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.patch_size == 0 || self.stride == 0 || self.decay_every == 0
        {
            return bad("batch size, patch size, stride and decay period must be positive".into());
        }
        if !(self.lr0 > 0.0) || !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!(
                "learning rate {} / decay {} out of range",
                self.lr0, self.decay_factor
            ));
        }
        if alpha == 0 {
            return bad("alpha must be positive".into());
        }
        Ok(())
    }

    /// `lr0 * decay_factor ^ floor(epoch / decay_every)`.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(Error::Invalid(format!(
                "epoch {epoch} outside [0, {})",
                self.total_epochs
            )));
        }
        Ok(self.lr0 * self.decay_factor.powi((epoch / self.decay_every) as i32))
    }

    pub fn hr_patch_size(&self, alpha: usize) -> usize {
        self.patch_size * alpha
    }
}

/// Kaiming initialisation flavour for every conv except the offset heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-b, b)` with `b = 1 / sqrt(fan_in)`: Kaiming-uniform with negative
    /// slope `sqrt(5)`, the stock convolution init of common frameworks.
    #[default]
    KaimingUniform,
    /// `N(0, 2 / ((1 + s²) fan_in))` for the network's leaky slope `s`.
    KaimingNormal,
}

/// [`init_weights_with`] using the default scheme.
pub fn init_weights(model: &mut LfDfNet, seed: u64) {
    init_weights_with(model, seed, InitScheme::default());
}

/// Kaiming weights for every conv, zero biases, and zero offset-branch
/// heads.
pub fn init_weights_with(model: &mut LfDfNet, seed: u64, scheme: InitScheme) {
    let slope = model.config().leaky_slope;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs: Vec<_> = model
        .convs()
        .iter()
        .map(|c| (c.weight, c.bias, c.in_channels * c.kernel * c.kernel))
        .collect();
    let heads: Vec<_> = model.offset_heads().iter().map(|c| c.weight).collect();
    let store = model.params_mut();
    for (w, b, fan_in) in convs {
        let t = store.get_mut(w);
        let fan_in = fan_in as f64;
        if heads.contains(&w) {
            t.fill(0.0);
        } else {
            match scheme {
                InitScheme::KaimingUniform => {
                    let bound = 1.0 / fan_in.sqrt();
                    t.data_mut()
                        .iter_mut()
                        .for_each(|x| *x = rng.random_range(-bound..bound));
                }
                InitScheme::KaimingNormal => {
                    let std = (2.0 / (1.0 + slope * slope) / fan_in).sqrt();
                    let normal = Normal::new(0.0, std).expect("finite std");
                    t.data_mut()
                        .iter_mut()
                        .for_each(|x| *x = normal.sample(&mut rng));
                }
            }
        }
        store.get_mut(b).fill(0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

/// Adam with the usual (0.9, 0.999, 1e-8) constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub state: AdamState,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || {
            params
                .ids()
                .map(|id| Tensor::zeros(params.get(id).shape()))
                .collect()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: AdamState {
                t: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        let s = &mut self.state;
        s.t += 1;
        let bc1 = 1.0 - self.beta1.powi(s.t as i32);
        let bc2 = 1.0 - self.beta2.powi(s.t as i32);
        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let Some(g) = grads.get(id) else { continue };
            let p = params.get_mut(id).data_mut();
            let m = s.m[i].data_mut();
            let v = s.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// High-resolution Y patches of side `size` from the central `A x A` views
/// of every scene.
pub fn prepare_patches(
    scenes: &[Scene],
    angular: usize,
    size: usize,
    stride: usize,
) -> Result<Vec<LightField>> {
    let mut out = Vec::new();
    for s in scenes {
        let y = to_y(&s.lf)?;
        out.extend(extract_patches(&y.crop_angular(angular)?, size, stride)?);
    }
    if out.is_empty() {
        return Err(Error::Missing("no training patches".into()));
    }
    Ok(out)
}

/// Stacks `(lr, hr)` tensors for a batch of HR patches, each transformed
/// by its symmetry before degradation.
pub fn make_batch(
    patches: &[&LightField],
    syms: &[Symmetry],
    alpha: usize,
) -> Result<(Tensor, Tensor)> {
    let mut lr = Vec::new();
    let mut hr = Vec::new();
    let (mut lshape, mut hshape) = (Vec::new(), Vec::new());
    for (p, s) in patches.iter().zip(syms) {
        let aug = s.apply(p)?;
        let l = lf_to_tensor(&degrade(&aug, alpha)?)?;
        let h = lf_to_tensor(&aug)?;
        if lshape.is_empty() {
            lshape = l.shape().to_vec();
            hshape = h.shape().to_vec();
        } else if l.shape() != lshape {
            return Err(Error::Shape("batch patches differ in shape".into()));
        }
        lr.extend(l.into_data());
        hr.extend(h.into_data());
    }
    let n = patches.len();
    lshape[0] *= n;
    hshape[0] *= n;
    Ok((Tensor::from_vec(&lshape, lr), Tensor::from_vec(&hshape, hr)))
}

/// One optimisation step on `(lr, hr)`; returns the loss before the update.
pub fn train_step(
    model: &mut LfDfNet,
    adam: &mut Adam,
    lr_rate: f64,
    lr: &Tensor,
    hr: &Tensor,
) -> Result<f64> {
    let up = bicubic_upscale(lr, model.config().alpha)?;
    let (loss, grads) = {
        let mut g = Graph::new(model.params());
        let x = g.input(lr.clone());
        let u = g.input(up);
        let (y, _) = model.build(&mut g, x, u)?;
        if g.shape(y) != hr.shape() {
            return Err(Error::Shape(format!(
                "target {:?} does not match output {:?}",
                hr.shape(),
                g.shape(y)
            )));
        }
        let l = g.l1_loss(y, hr.clone());
        (g.value(l).data()[0], g.backward(l))
    };
    if !loss.is_finite() {
        return Err(Error::Diverged(format!(
            "loss is {loss} at learning rate {lr_rate}"
        )));
    }
    adam.step(model.params_mut(), &grads, lr_rate);
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

pub const LOG_FILE: &str = "train_log.jsonl";

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Model, optimiser and schedule position.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: LfDfNet,
    pub adam: Adam,
    pub cfg: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub history: Vec<EpochStats>,
    pub init_seed: u64,
}

impl Trainer {
    pub fn new(net: NetworkConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate(net.alpha)?;
        let mut model = LfDfNet::new(net)?;
        init_weights_with(&mut model, cfg.seed, cfg.init);
        let adam = Adam::new(model.params());
        Ok(Self {
            model,
            adam,
            init_seed: cfg.seed,
            cfg,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        })
    }

    /// Symmetries for one epoch's patch order (identity without
    /// augmentation), plus the order itself.
    pub fn epoch_plan(&self, epoch: usize, n: usize) -> (Vec<usize>, Vec<Symmetry>) {
        let mut rng = epoch_rng(self.cfg.seed, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let all = Symmetry::all();
        let syms = (0..n)
            .map(|_| {
                let k = rng.random_range(0..all.len());
                if self.cfg.augment {
                    all[k]
                } else {
                    Symmetry::identity()
                }
            })
            .collect();
        (order, syms)
    }

    pub fn run_epoch(
        &mut self,
        patches: &[LightField],
        mut log: Option<&mut dyn Write>,
    ) -> Result<EpochStats> {
        let epoch = self.epoch;
        let lr = self.cfg.lr_at(epoch)?;
        let (order, syms) = self.epoch_plan(epoch, patches.len());
        let alpha = self.model.config().alpha;
        let mut losses = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&LightField> = chunk.iter().map(|&i| &patches[i]).collect();
            let bsyms: Vec<Symmetry> = chunk.iter().map(|&i| syms[i]).collect();
            let (x, y) = make_batch(&batch, &bsyms, alpha)?;
            let loss = train_step(&mut self.model, &mut self.adam, lr, &x, &y)?;
            self.step += 1;
            losses.push(loss);
            if let Some(w) = log.as_deref_mut() {
                let rec = StepRecord {
                    step: self.step,
                    epoch,
                    lr,
                    loss,
                };
                writeln!(w, "{}", serde_json::to_string(&rec)?)
                    .map_err(|e| Error::io(LOG_FILE, e))?;
            }
        }
        let stats = EpochStats {
            epoch,
            lr,
            mean_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            losses,
        };
        self.epoch += 1;
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// Trains up to `total_epochs`, writing a checkpoint after every epoch
    /// (and the starting state) into `out_dir` when given.
    pub fn fit(&mut self, patches: &[LightField], out_dir: Option<&Path>) -> Result<()> {
        let mut log = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let p = dir.join(LOG_FILE);
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)
                    .map_err(|e| Error::io(&p, e))?;
                self.checkpoint().save(dir)?;
                Some(BufWriter::new(f))
            }
            None => None,
        };
        while self.epoch < self.cfg.total_epochs {
            let stats = self.run_epoch(patches, log.as_mut().map(|w| w as &mut dyn Write))?;
            log::info!(
                "epoch {} lr {:.3e} mean L1 {:.5}",
                stats.epoch,
                stats.lr,
                stats.mean_loss
            );
            if let (Some(dir), Some(w)) = (out_dir, log.as_mut()) {
                w.flush().map_err(|e| Error::io(dir.join(LOG_FILE), e))?;
                self.checkpoint().save(dir)?;
            }
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.model.params().clone(),
            adam: self.adam.state.clone(),
            meta: CheckpointMeta {
                epoch: self.epoch,
                step: self.step,
                init_seed: self.init_seed,
                network: self.model.config().clone(),
                train: self.cfg.clone(),
                manifest: self.model.manifest(Some(self.init_seed)),
                history: self.history.clone(),
            },
        }
    }

    /// Restores model, optimiser and schedule position. `cfg` may extend
    /// `total_epochs`; everything else must match the checkpoint.
    pub fn from_checkpoint(ckpt: Checkpoint, cfg: Option<TrainConfig>) -> Result<Self> {
        let mut model = LfDfNet::new(ckpt.meta.network.clone())?;
        model.set_params(ckpt.params)?;
        let mut adam = Adam::new(model.params());
        if ckpt.adam.m.len() != adam.state.m.len()
            || ckpt
                .adam
                .m
                .iter()
                .zip(&adam.state.m)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Checkpoint(
                "optimizer state does not match the model".into(),
            ));
        }
        adam.state = ckpt.adam;
        let cfg = cfg.unwrap_or(ckpt.meta.train.clone());
        cfg.validate(model.config().alpha)?;
        Ok(Self {
            model,
            adam,
            cfg,
            epoch: ckpt.meta.epoch,
            step: ckpt.meta.step,
            history: ckpt.meta.history,
            init_seed: ckpt.meta.init_seed,
        })
    }
}

/// Fresh run from `net` and `cfg`; returns the final checkpoint.
pub fn fit(
    net: NetworkConfig,
    cfg: TrainConfig,
    patches: &[LightField],
    out_dir: Option<&Path>,
) -> Result<Checkpoint> {
    let mut t = Trainer::new(net, cfg)?;
    t.fit(patches, out_dir)?;
    Ok(t.checkpoint())
}

pub fn read_log(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests;
