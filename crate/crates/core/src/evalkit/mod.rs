//! Metrics and experiment harnesses: Y-channel PSNR/SSIM averaged over
//! views, then scenes, then the dataset; disparity sweeps; ablations.

mod ablate;
mod metrics;
pub mod plot;
mod sweep;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lfcore::dataset::Scene;
use crate::lfcore::{degrade, resize_bicubic, to_y, LightField};
use crate::lfdfnet::LfDfNet;

pub use ablate::{ablate, AblationRow, AblationTable};
pub use metrics::{mse, psnr_y, ssim, PSNR_IDENTICAL, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use sweep::{disparity_sweep, SweepTable};

/// Anything that maps an LR Y light field to an `alpha`-times larger one.
pub trait SrModel: Sync {
    fn name(&self) -> String;
    fn alpha(&self) -> usize;
    /// Required square angular size, if any.
    fn angular(&self) -> Option<usize> {
        None
    }
    fn manifest_hash(&self) -> Option<String> {
        None
    }
    fn super_resolve(&self, lr: &LightField) -> Result<LightField>;
}

impl SrModel for LfDfNet {
    fn name(&self) -> String {
        format!("lfdfnet-{}", self.config().variant)
    }

    fn alpha(&self) -> usize {
        self.config().alpha
    }

    fn angular(&self) -> Option<usize> {
        Some(self.config().angular)
    }

    fn manifest_hash(&self) -> Option<String> {
        Some(self.manifest(None).hash())
    }

    fn super_resolve(&self, lr: &LightField) -> Result<LightField> {
        self.forward(lr)
    }
}

/// Per-view bicubic interpolation.
#[derive(Clone, Copy, Debug)]
pub struct Bicubic {
    pub alpha: usize,
    /// Central views to keep, matching a network under comparison.
    pub angular: Option<usize>,
}

impl SrModel for Bicubic {
    fn name(&self) -> String {
        "bicubic".into()
    }

    fn alpha(&self) -> usize {
        self.alpha
    }

    fn angular(&self) -> Option<usize> {
        self.angular
    }

    fn super_resolve(&self, lr: &LightField) -> Result<LightField> {
        let views = lr
            .views()
            .iter()
            .map(|v| resize_bicubic(v, self.alpha as f64, false))
            .collect::<Result<Vec<_>>>()?;
        LightField::from_views(lr.angular(), lr.color_space(), &views)
    }
}

/// Returns its input; with `alpha = 1` degradation is the identity too.
#[derive(Clone, Copy, Debug)]
pub struct Identity;

impl SrModel for Identity {
    fn name(&self) -> String {
        "identity".into()
    }

    fn alpha(&self) -> usize {
        1
    }

    fn super_resolve(&self, lr: &LightField) -> Result<LightField> {
        Ok(lr.clone())
    }
}

mod db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad PSNR value {s}"))),
        }
    }
}

mod db_grid {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(transparent)]
    struct Db(#[serde(with = "super::db")] f64);

    pub fn serialize<S: Serializer>(g: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Db>> = g
            .iter()
            .map(|r| r.iter().map(|&x| Db(x)).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows = Vec::<Vec<Db>>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.0).collect())
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    #[serde(with = "db")]
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean of the finite PSNRs and of all SSIMs. Identical-image sentinels
/// are left out of the PSNR mean; if every entry is one, so is the mean.
pub fn mean_score(scores: &[Score]) -> Score {
    let finite: Vec<f64> = scores
        .iter()
        .map(|s| s.psnr)
        .filter(|p| p.is_finite())
        .collect();
    let psnr = if finite.is_empty() {
        PSNR_IDENTICAL
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let ssim = scores.iter().map(|s| s.ssim).sum::<f64>() / scores.len().max(1) as f64;
    Score { psnr, ssim }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub name: String,
    /// `A x A`, row-major in `(u, v)`.
    pub per_view: Vec<Vec<Score>>,
    pub mean: Score,
    /// Views whose PSNR is the identical-image sentinel.
    pub identical_views: usize,
}

impl SceneMetrics {
    pub fn new(name: String, per_view: Vec<Vec<Score>>) -> Self {
        let flat: Vec<Score> = per_view.iter().flatten().copied().collect();
        let identical_views = flat.iter().filter(|s| s.psnr.is_infinite()).count();
        if identical_views > 0 && identical_views < flat.len() {
            log::warn!("{name}: {identical_views} identical views left out of the PSNR mean");
        }
        Self {
            name,
            mean: mean_score(&flat),
            per_view,
            identical_views,
        }
    }

    pub fn psnr_grid(&self) -> Vec<Vec<f64>> {
        self.per_view
            .iter()
            .map(|r| r.iter().map(|s| s.psnr).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub manifest_hash: Option<String>,
    pub dataset_id: String,
    pub alpha: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub meta: ReportMeta,
    pub per_scene: Vec<SceneMetrics>,
    pub per_dataset: Score,
}

impl MetricReport {
    pub fn new(meta: ReportMeta, per_scene: Vec<SceneMetrics>) -> Self {
        let means: Vec<Score> = per_scene.iter().map(|s| s.mean).collect();
        Self {
            meta,
            per_dataset: mean_score(&means),
            per_scene,
        }
    }

    /// Rows `level,scene,u,v,psnr,ssim` for views, scene means and the
    /// dataset mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,scene,u,v,psnr,ssim\n");
        for s in &self.per_scene {
            for (u, row) in s.per_view.iter().enumerate() {
                for (v, sc) in row.iter().enumerate() {
                    out += &format!("view,{},{u},{v},{},{}\n", s.name, sc.psnr, sc.ssim);
                }
            }
            out += &format!("scene,{},,,{},{}\n", s.name, s.mean.psnr, s.mean.ssim);
        }
        out += &format!(
            "dataset,{},,,{},{}\n",
            self.meta.dataset_id, self.per_dataset.psnr, self.per_dataset.ssim
        );
        out
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("report.json");
        std::fs::write(&p, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("report.csv");
        std::fs::write(&p, self.to_csv()).map_err(|e| Error::io(&p, e))
    }
}

/// Y ground truth for `model`: central views cropped to its angular size and
/// spatial size cropped (top-left) to a multiple of `alpha`.
pub fn ground_truth(scene: &Scene, model: &dyn SrModel) -> Result<LightField> {
    let mut y = to_y(&scene.lf)?;
    if let Some(a) = model.angular() {
        y = y.crop_angular(a)?;
    }
    let alpha = model.alpha();
    let (h, w) = y.spatial();
    let (h2, w2) = (h - h % alpha, w - w % alpha);
    if (h2, w2) != (h, w) {
        y = y.crop_spatial(h2, w2)?;
    }
    Ok(y)
}

/// Per-view scores of `sr` against `gt`.
pub fn score_views(sr: &LightField, gt: &LightField) -> Result<Vec<Vec<Score>>> {
    if sr.angular() != gt.angular() || sr.spatial() != gt.spatial() {
        return Err(Error::Shape(format!(
            "output {:?}x{:?} does not match ground truth {:?}x{:?}",
            sr.angular(),
            sr.spatial(),
            gt.angular(),
            gt.spatial()
        )));
    }
    let (a, b) = gt.angular();
    (0..a)
        .map(|u| {
            (0..b)
                .map(|v| {
                    let (p, q) = (sr.view(u, v), gt.view(u, v));
                    Ok(Score {
                        psnr: psnr_y(&p, &q)?,
                        ssim: ssim(&p, &q)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Degrade, super-resolve and score one scene; also returns the output.
pub fn evaluate_scene(
    model: &dyn SrModel,
    name: &str,
    scene: &Scene,
) -> Result<(SceneMetrics, LightField)> {
    let gt = ground_truth(scene, model)?;
    let lr = degrade(&gt, model.alpha())?;
    let sr = model.super_resolve(&lr)?;
    let grid = score_views(&sr, &gt)?;
    Ok((SceneMetrics::new(name.to_string(), grid), sr))
}

pub fn evaluate(
    model: &dyn SrModel,
    scenes: &[(String, Scene)],
    dataset_id: &str,
) -> Result<MetricReport> {
    if scenes.is_empty() {
        return Err(Error::Missing(format!(
            "dataset {dataset_id} has no ground-truth scenes"
        )));
    }
    let per_scene = scenes
        .par_iter()
        .map(|(name, s)| evaluate_scene(model, name, s).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(
        ReportMeta {
            model: model.name(),
            manifest_hash: model.manifest_hash(),
            dataset_id: dataset_id.to_string(),
            alpha: model.alpha(),
        },
        per_scene,
    ))
}

/// Scenes under `root` named by directory.
pub fn load_named(root: &Path) -> Result<Vec<(String, Scene)>> {
    crate::lfcore::dataset::list_scenes(root)?
        .into_iter()
        .map(|dir| {
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, crate::lfcore::dataset::read_scene(&dir)?))
        })
        .collect()
}
