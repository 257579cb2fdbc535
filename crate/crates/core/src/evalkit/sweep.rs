use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_scene, ground_truth, plot, MetricReport, ReportMeta, SrModel};
use crate::error::{Error, Result};
use crate::synthlf::{disparity_range, epi_extract, render_scene, EpiAxis, SceneSpec};

/// PSNR/SSIM of every model at every baseline multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub models: Vec<String>,
    pub k_d: Vec<u32>,
    /// Center-view `[min, max]` disparity per `k_d`.
    pub disparity_ranges: Vec<[f64; 2]>,
    /// `[model][k_d]`.
    #[serde(with = "super::db_grid")]
    pub psnr: Vec<Vec<f64>>,
    pub ssim: Vec<Vec<f64>>,
    pub reports: Vec<Vec<MetricReport>>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for (k, r) in self.k_d.iter().zip(&self.disparity_ranges) {
            out += &format!(",psnr_kd{k}[{:.4}:{:.4}]", r[0], r[1]);
        }
        for k in &self.k_d {
            out += &format!(",ssim_kd{k}");
        }
        out.push('\n');
        for (i, m) in self.models.iter().enumerate() {
            out += m;
            for p in &self.psnr[i] {
                out += &format!(",{p}");
            }
            for s in &self.ssim[i] {
                out += &format!(",{s}");
            }
            out.push('\n');
        }
        out
    }
}

/// Renders `spec` at every `k_d`, scores every model on it and, with
/// `out_dir`, writes `sweep.csv`, `sweep.json`, `sweep.svg` and EPI strips
/// (`epi_kd{k}_{name}.png`) of the ground truth and each output.
pub fn disparity_sweep(
    models: &[&dyn SrModel],
    spec: &SceneSpec,
    k_d_list: &[u32],
    out_dir: Option<&Path>,
) -> Result<SweepTable> {
    let mut table = SweepTable {
        models: models.iter().map(|m| m.name()).collect(),
        k_d: k_d_list.to_vec(),
        disparity_ranges: Vec::new(),
        psnr: vec![Vec::new(); models.len()],
        ssim: vec![Vec::new(); models.len()],
        reports: vec![Vec::new(); models.len()],
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for &k in k_d_list {
        let (lo, hi) = disparity_range(spec, k)?;
        table.disparity_ranges.push([lo, hi]);
        let scene = render_scene(spec, k)?;
        let name = format!("kd{k}");
        for (i, m) in models.iter().enumerate() {
            let (metrics, sr) = evaluate_scene(*m, &name, &scene)?;
            let report = MetricReport::new(
                ReportMeta {
                    model: m.name(),
                    manifest_hash: m.manifest_hash(),
                    dataset_id: format!("sweep-{name}"),
                    alpha: m.alpha(),
                },
                vec![metrics],
            );
            table.psnr[i].push(report.per_dataset.psnr);
            table.ssim[i].push(report.per_dataset.ssim);
            table.reports[i].push(report);
            if let Some(dir) = out_dir {
                let gt = ground_truth(&scene, *m)?;
                let (a, _) = gt.angular();
                let row = gt.spatial().0 / 2;
                let center = a / 2;
                let path = dir.join(format!("epi_{name}_{}.png", m.name()));
                plot::write_epi_png(&epi_extract(&sr, EpiAxis::Row, row, center)?, &path, 8)?;
                let path = dir.join(format!("epi_{name}_gt_a{a}.png"));
                if !path.exists() {
                    plot::write_epi_png(&epi_extract(&gt, EpiAxis::Row, row, center)?, &path, 8)?;
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        let p = dir.join("sweep.csv");
        std::fs::write(&p, table.to_csv()).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("sweep.json");
        std::fs::write(&p, serde_json::to_string_pretty(&table)?).map_err(|e| Error::io(&p, e))?;
        plot::write_sweep_svg(&table, &dir.join("sweep.svg"))?;
    }
    Ok(table)
}
