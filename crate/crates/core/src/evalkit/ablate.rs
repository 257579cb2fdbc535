use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{evaluate, Bicubic, MetricReport, Score};
use crate::error::Result;
use crate::lfcore::dataset::Scene;
use crate::lfcore::LightField;
use crate::lfdfnet::{LfDfNet, NetworkConfig, Variant};
use crate::trainer::{self, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub variant: Variant,
    pub adams: usize,
    pub num_params: Option<usize>,
    pub score: Option<Score>,
    pub final_loss: Option<f64>,
    /// Set when the row could not be built, trained or evaluated.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// One row per variant at the base `K`, then the full model per `K`.
    pub rows: Vec<AblationRow>,
    pub bicubic: Score,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,variant,adams,params,psnr,ssim,final_loss,error\n");
        let opt = |x: Option<String>| x.unwrap_or_default();
        for r in &self.rows {
            out += &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label,
                r.variant,
                r.adams,
                opt(r.num_params.map(|p| p.to_string())),
                opt(r.score.map(|s| s.psnr.to_string())),
                opt(r.score.map(|s| s.ssim.to_string())),
                opt(r.final_loss.map(|l| l.to_string())),
                opt(r.error.as_ref().map(|e| e.replace(',', ";"))),
            );
        }
        out += &format!(
            "bicubic,,,0,{},{},,\n",
            self.bicubic.psnr, self.bicubic.ssim
        );
        out
    }
}

fn run_row(
    net: &NetworkConfig,
    train: &TrainConfig,
    patches: &[LightField],
    test: &[(String, Scene)],
) -> Result<(usize, Option<f64>, MetricReport)> {
    let ckpt = trainer::fit(net.clone(), train.clone(), patches, None)?;
    let mut model = LfDfNet::new(net.clone())?;
    model.set_params(ckpt.params)?;
    let loss = ckpt.meta.history.last().map(|e| e.mean_loss);
    let report = evaluate(&model, test, "ablation")?;
    Ok((model.num_params(), loss, report))
}

/// Trains and evaluates every variant (at `base.adams`) and the full model
/// at every `K` in `k_sweep`, all with the same seed and budget. Failures
/// are recorded per row.
pub fn ablate(
    base: &NetworkConfig,
    train: &TrainConfig,
    variants: &[Variant],
    k_sweep: &[usize],
    patches: &[LightField],
    test: &[(String, Scene)],
) -> Result<AblationTable> {
    let mut jobs: Vec<(String, NetworkConfig)> = variants
        .iter()
        .map(|&v| {
            (
                v.to_string(),
                NetworkConfig {
                    variant: v,
                    ..base.clone()
                },
            )
        })
        .collect();
    jobs.extend(k_sweep.iter().map(|&k| {
        (
            format!("full_k{k}"),
            NetworkConfig {
                variant: Variant::Full,
                adams: k,
                ..base.clone()
            },
        )
    }));
    let mut done: HashMap<(Variant, usize), AblationRow> = HashMap::new();
    let mut rows = Vec::new();
    for (label, net) in jobs {
        let key = (net.variant, net.adams);
        let row = match done.get(&key) {
            Some(r) => AblationRow { label, ..r.clone() },
            None => {
                let mut row = AblationRow {
                    label,
                    variant: net.variant,
                    adams: net.adams,
                    num_params: None,
                    score: None,
                    final_loss: None,
                    error: None,
                };
                match run_row(&net, train, patches, test) {
                    Ok((p, loss, report)) => {
                        row.num_params = Some(p);
                        row.final_loss = loss;
                        row.score = Some(report.per_dataset);
                    }
                    Err(e) => {
                        log::warn!("ablation row {} failed: {e}", row.label);
                        row.num_params = crate::lfdfnet::count_params(&net).ok();
                        row.error = Some(e.to_string());
                    }
                }
                done.insert(key, row.clone());
                row
            }
        };
        rows.push(row);
    }
    let bicubic = evaluate(
        &Bicubic {
            alpha: base.alpha,
            angular: Some(base.angular),
        },
        test,
        "ablation",
    )?
    .per_dataset;
    Ok(AblationTable { rows, bicubic })
}
