//! The `lfdf` command line: `generate`, `train`, `eval`, `sweep`, `ablate`
//! and `plot`, driven by one JSON [`RunConfig`] plus dotted-key overrides.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evalkit::{self, plot, Bicubic, Identity, MetricReport, SrModel, SweepTable};
use crate::lfcore::dataset::{read_dataset, Scene};
use crate::lfdfnet::{LfDfNet, NetworkConfig, Variant};
use crate::synthlf::{self, SceneSpec};
use crate::trainer::{init_weights_with, prepare_patches, Checkpoint, TrainConfig, Trainer};

pub const DATA_ROOT_ENV: &str = "LFDF_DATA_ROOT";
pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Generate,
    Train,
    Eval,
    Sweep,
    Ablate,
    Plot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Network,
    Bicubic,
    Identity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training scenes; defaults to `$LFDF_DATA_ROOT/train`.
    pub train: Option<PathBuf>,
    /// Test scenes; defaults to `$LFDF_DATA_ROOT/test`.
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    /// Scene description; without it `random_scenes` random scenes are drawn.
    pub scene: Option<PathBuf>,
    pub random_scenes: usize,
    pub angular: usize,
    pub spatial: [usize; 2],
    pub k_d: Vec<u32>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scene: None,
            random_scenes: 8,
            angular: 5,
            spatial: [64, 64],
            k_d: vec![1],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub model: ModelKind,
    /// Trained weights; without one the network is freshly initialised.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Network,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Scene description; defaults to a random scene from `generate`.
    pub scene: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
    pub k_d: Vec<u32>,
    pub bicubic: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scene: None,
            checkpoints: Vec::new(),
            k_d: (0..=4).collect(),
            bicubic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub variants: Vec<Variant>,
    pub k_sweep: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            k_sweep: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    /// `report.json` or `sweep.json` files.
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub output_dir: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub ablate: AblateConfig,
    pub plot: PlotConfig,
}

/// Sets `key` (dot-separated) in `root`; every prefix must already exist.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a section", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(Error::Config("empty config key".into()))
}

/// `a..b` (inclusive), `a..=b`, `a,b,c` or `a`.
pub fn parse_kd(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("bad k_d range `{s}`"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(num).collect()
}

fn parse_alpha(s: &str) -> std::result::Result<usize, String> {
    match s {
        "2" => Ok(2),
        "4" => Ok(4),
        _ => Err(format!("alpha must be 2 or 4, got {s}")),
    }
}

fn parse_set(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[derive(Debug, Parser)]
#[command(name = "lfdf", version, about = "Light-field super-resolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted-key override, e.g. `network.channels=16`; repeatable.
    #[arg(long = "set", value_parser = parse_set, global = true)]
    pub overrides: Vec<(String, String)>,
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long, value_parser = parse_alpha, global = true)]
    pub alpha: Option<usize>,
    /// Baseline multipliers: `0..4`, `1,3` or `2`.
    #[arg(long, global = true)]
    pub kd: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Render synthetic scenes into dataset directories.
    Generate {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Train on `data.train`, checkpointing every epoch.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a model on `data.test`.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// PSNR of each model against baseline multiplier.
    Sweep {
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Variant and K comparison.
    Ablate,
    /// Figures from report files.
    Plot { inputs: Vec<PathBuf> },
}

impl Cmd {
    pub fn kind(&self) -> Command {
        match self {
            Cmd::Generate { .. } => Command::Generate,
            Cmd::Train { .. } => Command::Train,
            Cmd::Eval { .. } => Command::Eval,
            Cmd::Sweep { .. } => Command::Sweep,
            Cmd::Ablate => Command::Ablate,
            Cmd::Plot { .. } => Command::Plot,
        }
    }
}

fn command_name(c: Command) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Effective configuration: file, then flags, then `--set` overrides, with
/// data roots resolved from `LFDF_DATA_ROOT`.
pub fn resolve(cli: &Cli, data_root: Option<&Path>) -> Result<RunConfig> {
    let kind = cli.command.kind();
    let mut value = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if cfg.command.is_some_and(|c| c != kind) {
                return Err(Error::Config(format!(
                    "config is for `{}`, not `{}`",
                    command_name(cfg.command.unwrap()),
                    command_name(kind)
                )));
            }
            serde_json::to_value(cfg)?
        }
        None => serde_json::to_value(RunConfig::default())?,
    };
    let mut flags: Vec<(String, Value)> = Vec::new();
    if let Some(s) = cli.seed {
        flags.push(("train.seed".into(), s.into()));
        flags.push(("generate.seed".into(), s.into()));
    }
    if let Some(o) = &cli.out {
        flags.push(("output_dir".into(), serde_json::to_value(o)?));
    }
    if let Some(v) = cli.variant {
        flags.push(("network.variant".into(), serde_json::to_value(v)?));
    }
    if let Some(a) = cli.alpha {
        flags.push(("network.alpha".into(), a.into()));
    }
    if let Some(k) = &cli.kd {
        let ks = serde_json::to_value(parse_kd(k)?)?;
        flags.push(("generate.k_d".into(), ks.clone()));
        flags.push(("sweep.k_d".into(), ks));
    }
    match &cli.command {
        Cmd::Generate { scene: Some(s) } => {
            flags.push(("generate.scene".into(), serde_json::to_value(s)?))
        }
        Cmd::Sweep { scene: Some(s) } => {
            flags.push(("sweep.scene".into(), serde_json::to_value(s)?))
        }
        Cmd::Train { epochs, resume } => {
            if let Some(e) = epochs {
                flags.push(("train.total_epochs".into(), (*e).into()));
            }
            if let Some(r) = resume {
                flags.push(("resume".into(), serde_json::to_value(r)?));
            }
        }
        Cmd::Eval {
            checkpoint: Some(c),
        } => flags.push(("eval.checkpoint".into(), serde_json::to_value(c)?)),
        Cmd::Plot { inputs } if !inputs.is_empty() => {
            flags.push(("plot.inputs".into(), serde_json::to_value(inputs)?))
        }
        _ => {}
    }
    for (k, v) in flags {
        apply_override(&mut value, &k, &v.to_string())?;
    }
    for (k, v) in &cli.overrides {
        apply_override(&mut value, k, v)?;
    }
    let mut cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    cfg.command = Some(kind);
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("lfdf_out").join(command_name(kind)));
    }
    if let Some(root) = data_root {
        cfg.data.train.get_or_insert_with(|| root.join("train"));
        cfg.data.test.get_or_insert_with(|| root.join("test"));
    }
    cfg.network.validate()?;
    cfg.train.validate(cfg.network.alpha)?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> &Path {
    cfg.output_dir.as_deref().expect("resolved")
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| {
        Error::Missing(format!(
            "no {what} directory (set data.{what} or {DATA_ROOT_ENV})"
        ))
    })
}

fn inputs(cfg: &RunConfig) -> Vec<&Path> {
    let mut v: Vec<&Path> = Vec::new();
    match cfg.command {
        Some(Command::Train) | Some(Command::Ablate) => v.extend(cfg.data.train.as_deref()),
        _ => {}
    }
    match cfg.command {
        Some(Command::Eval) | Some(Command::Ablate) => v.extend(cfg.data.test.as_deref()),
        _ => {}
    }
    v
}

/// Refuses output directories inside an input dataset.
fn check_output(cfg: &RunConfig) -> Result<()> {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let out = abs(out_dir(cfg));
    for i in inputs(cfg) {
        if out.starts_with(abs(i)) {
            return Err(Error::Config(format!(
                "output {} lies inside input {}",
                out.display(),
                i.display()
            )));
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn load_network(path: &Path) -> Result<LfDfNet> {
    let ck = Checkpoint::load(path)?;
    let mut net = LfDfNet::new(ck.meta.network.clone())?;
    net.set_params(ck.params)?;
    Ok(net)
}

fn scene_specs(g: &GenerateConfig, file: Option<&Path>) -> Result<Vec<(String, SceneSpec)>> {
    match file {
        Some(p) => {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scene".into());
            Ok(vec![(name, SceneSpec::from_json_file(p)?)])
        }
        None => Ok((0..g.random_scenes)
            .map(|i| {
                let seed = g.seed.wrapping_add(i as u64);
                (
                    format!("scene{i:03}"),
                    SceneSpec::random(seed, g.angular, g.spatial),
                )
            })
            .collect()),
    }
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg);
    let specs = scene_specs(&cfg.generate, cfg.generate.scene.as_deref())?;
    for (name, spec) in &specs {
        for &k in &cfg.generate.k_d {
            let dir = out.join(format!("{name}_kd{k}"));
            synthlf::write_rendered(&dir, spec, k)?;
            write_json(&dir.join("scene.json"), spec)?;
            log::info!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg);
    let mut t = match &cfg.resume {
        Some(p) => {
            let t = Trainer::from_checkpoint(Checkpoint::load(p)?, Some(cfg.train.clone()))?;
            if t.model.config() != &cfg.network {
                log::warn!("network configuration taken from {}", p.display());
            }
            t
        }
        None => Trainer::new(cfg.network.clone(), cfg.train.clone())?,
    };
    let patches = if t.epoch < cfg.train.total_epochs {
        let scenes = read_dataset(need(&cfg.data.train, "train")?)?;
        let alpha = t.model.config().alpha;
        prepare_patches(
            &scenes,
            t.model.config().angular,
            cfg.train.hr_patch_size(alpha),
            cfg.train.stride,
        )?
    } else {
        Vec::new()
    };
    log::info!("{} training patches", patches.len());
    t.fit(&patches, Some(out))?;
    Ok(())
}

fn fresh_network(cfg: &RunConfig) -> Result<LfDfNet> {
    let mut n = LfDfNet::new(cfg.network.clone())?;
    init_weights_with(&mut n, cfg.train.seed, cfg.train.init);
    Ok(n)
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg);
    let test = need(&cfg.data.test, "test")?;
    let scenes = evalkit::load_named(test)?;
    let net;
    let model: &dyn SrModel = match cfg.eval.model {
        ModelKind::Network => {
            net = match &cfg.eval.checkpoint {
                Some(p) => load_network(p)?,
                None => fresh_network(cfg)?,
            };
            &net
        }
        ModelKind::Bicubic => &Bicubic {
            alpha: cfg.network.alpha,
            angular: Some(cfg.network.angular),
        },
        ModelKind::Identity => &Identity,
    };
    let report = evalkit::evaluate(model, &scenes, &test.display().to_string())?;
    report.save(out)?;
    plot::write_report_heatmaps(&report, out)?;
    println!(
        "{} psnr {:.4} ssim {:.4}",
        report.meta.model, report.per_dataset.psnr, report.per_dataset.ssim
    );
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let spec = match &cfg.sweep.scene {
        Some(p) => SceneSpec::from_json_file(p)?,
        None => SceneSpec::random(
            cfg.generate.seed,
            cfg.generate.angular,
            cfg.generate.spatial,
        ),
    };
    let mut nets = cfg
        .sweep
        .checkpoints
        .iter()
        .map(|p| load_network(p))
        .collect::<Result<Vec<_>>>()?;
    if nets.is_empty() {
        nets.push(fresh_network(cfg)?);
    }
    let bic = Bicubic {
        alpha: cfg.network.alpha,
        angular: Some(nets[0].config().angular),
    };
    let mut models: Vec<&dyn SrModel> = nets.iter().map(|n| n as &dyn SrModel).collect();
    if cfg.sweep.bicubic {
        models.push(&bic);
    }
    let table = evalkit::disparity_sweep(&models, &spec, &cfg.sweep.k_d, Some(out_dir(cfg)))?;
    print!("{}", table.to_csv());
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg);
    let train: Vec<Scene> = read_dataset(need(&cfg.data.train, "train")?)?;
    let test = evalkit::load_named(need(&cfg.data.test, "test")?)?;
    let alpha = cfg.network.alpha;
    let patches = prepare_patches(
        &train,
        cfg.network.angular,
        cfg.train.hr_patch_size(alpha),
        cfg.train.stride,
    )?;
    let table = evalkit::ablate(
        &cfg.network,
        &cfg.train,
        &cfg.ablate.variants,
        &cfg.ablate.k_sweep,
        &patches,
        &test,
    )?;
    write_json(&out.join("ablation.json"), &table)?;
    write_text(&out.join("ablation.csv"), &table.to_csv())?;
    print!("{}", table.to_csv());
    Ok(())
}

fn cmd_plot(cfg: &RunConfig) -> Result<()> {
    let out = out_dir(cfg);
    if cfg.plot.inputs.is_empty() {
        return Err(Error::Missing("no input files to plot".into()));
    }
    for p in &cfg.plot.inputs {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Ok(r) = serde_json::from_str::<MetricReport>(&text) {
            for f in plot::write_report_heatmaps(&r, out)? {
                println!("{}", f.display());
            }
        } else if let Ok(t) = serde_json::from_str::<SweepTable>(&text) {
            let f = out.join(format!("{stem}.svg"));
            plot::write_sweep_svg(&t, &f)?;
            println!("{}", f.display());
        } else {
            return Err(Error::Invalid(format!(
                "{} is neither a report nor a sweep table",
                p.display()
            )));
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    check_output(cfg)?;
    let out = out_dir(cfg);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(EFFECTIVE_CONFIG), cfg)?;
    match cfg.command.expect("resolved") {
        Command::Generate => cmd_generate(cfg),
        Command::Train => cmd_train(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Ablate => cmd_ablate(cfg),
        Command::Plot => cmd_plot(cfg),
    }
}

/// Process exit code for an error class.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => 3,
        Error::Missing(_) => 4,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 4,
        Error::Io { .. } | Error::Image { .. } => 5,
        Error::Shape(_) | Error::Invalid(_) => 6,
        Error::Diverged(_) => 7,
        Error::Checkpoint(_) => 8,
    }
}

/// `error kind=<kind> code=<n> message=<json string>`.
pub fn error_line(e: &Error) -> String {
    let msg = serde_json::to_string(&e.to_string()).unwrap_or_else(|_| "\"\"".into());
    format!(
        "error kind={} code={} message={msg}",
        e.kind(),
        exit_code(e)
    )
}

/// Parses `args`, runs and returns the exit code; errors go to stderr as
/// one line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
    match resolve(&cli, root.as_deref()).and_then(|cfg| run(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kd_ranges() {
        assert_eq!(parse_kd("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_kd("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_kd("3").unwrap(), vec![3]);
        assert_eq!(parse_kd("0,2,4").unwrap(), vec![0, 2, 4]);
        assert!(parse_kd("4..1").is_err());
        assert!(parse_kd("x").is_err());
    }

    #[test]
    fn overrides_reject_unknown_keys() {
        let mut v = serde_json::to_value(RunConfig::default()).unwrap();
        apply_override(&mut v, "network.channels", "16").unwrap();
        apply_override(&mut v, "data.train", "/tmp/x").unwrap();
        let cfg: RunConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(cfg.network.channels, 16);
        assert_eq!(cfg.data.train, Some(PathBuf::from("/tmp/x")));
        assert!(apply_override(&mut v, "network.chanels", "16").is_err());
        assert!(apply_override(&mut v, "network.channels.x", "1").is_err());
        assert!(apply_override(&mut v, "bogus", "1").is_err());
    }

    #[test]
    fn file_keys_are_checked() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 1}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"typo": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"network": {"channels": 8}}"#).unwrap();
        assert_eq!(c.network.channels, 8);
        assert_eq!(c.network.adams, 3);
    }

    #[test]
    fn flags_and_env_resolve() {
        let cli = Cli::try_parse_from([
            "lfdf",
            "train",
            "--epochs",
            "0",
            "--seed",
            "9",
            "--alpha",
            "4",
            "--variant",
            "no_dcn",
            "--set",
            "network.channels=8",
        ])
        .unwrap();
        let cfg = resolve(&cli, Some(Path::new("/data"))).unwrap();
        assert_eq!(cfg.command, Some(Command::Train));
        assert_eq!(cfg.train.total_epochs, 0);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.network.alpha, 4);
        assert_eq!(cfg.network.variant, Variant::NoDcn);
        assert_eq!(cfg.network.channels, 8);
        assert_eq!(cfg.data.train, Some(PathBuf::from("/data/train")));
        assert!(Cli::try_parse_from(["lfdf", "eval", "--alpha", "3"]).is_err());
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            Error::Config("c".into()),
            Error::Missing("m".into()),
            Error::io("p", std::io::Error::other("x")),
            Error::Shape("s".into()),
            Error::Diverged("d".into()),
            Error::Checkpoint("k".into()),
        ];
        let mut codes: Vec<i32> = errs.iter().map(exit_code).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
        let line = error_line(&Error::Config("two\nlines".into()));
        assert_eq!(line.lines().count(), 1);
        assert!(line.starts_with("error kind=config code=3 message="));
    }
}
