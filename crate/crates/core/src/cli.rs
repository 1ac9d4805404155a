//! Command-line front end: `blur-gen`, `train`, `deblur` and `crossval`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.
//! Results go to standard output as CSV; logs and progress go to standard
//! error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::{
    align_pair, generate_blurred_dataset, load_image, save_image, GaussianKernelSpec, Image, Manifest,
};
use crate::inference::{deblur, DeblurRequest};
use crate::metrics::{laplace_variance, psnr, sobel_variance, MetricReport};
use crate::training::{
    load_checkpoint, save_checkpoint, train, BmeKind, ModelCheckpoint, TrainConfig, TrainMode, UnpairedScenario,
};

pub const CSV_HEADER: [&str; 8] = ["image", "k", "sigma", "mode", "psnr", "ssim", "sobel_var", "laplace_var"];

#[derive(Debug, Parser)]
#[command(name = "blurdict", version, about = "Blur-coupled dictionary learning for deblurring")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur a directory of images with a Gaussian kernel.
    BlurGen(BlurGenArgs),
    /// Learn a dictionary and blur operator.
    Train(TrainArgs),
    /// Restore a blurred image with a checkpoint.
    Deblur(DeblurArgs),
    /// Pick the kernel size whose checkpoint restores best.
    Crossval(CrossvalArgs),
}

#[derive(Debug, Args)]
pub struct BlurGenArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest written by `blur-gen`.
    #[arg(long, conflicts_with_all = ["hr", "lr_dir"])]
    pub manifest: Option<PathBuf>,
    /// Sharp images, matched to `--lr-dir` by file stem.
    #[arg(long, requires = "lr_dir")]
    pub hr: Option<PathBuf>,
    #[arg(long = "lr-dir", requires = "hr")]
    pub lr_dir: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with `TrainConfig` fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = TrainMode::from_str)]
    pub mode: Option<TrainMode>,
    #[arg(long, value_parser = BmeKind::from_str)]
    pub bme: Option<BmeKind>,
    #[arg(long, value_parser = UnpairedScenario::from_str, default_value = "disjoint")]
    pub scenario: UnpairedScenario,
    #[arg(long)]
    pub k: Option<usize>,
    /// HR patch side.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub patches: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Sharp reference for PSNR and SSIM.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Inference sparsity weight; defaults to the training value.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Blur width recorded in the CSV row.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    /// One checkpoint per candidate kernel size.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Blurred images or directories of them.
    #[arg(long, num_args = 1.., required = true)]
    pub lr: Vec<PathBuf>,
    /// Sharp references, matched to `--lr` by file stem.
    #[arg(long, num_args = 1..)]
    pub gt: Vec<PathBuf>,
    #[arg(long, value_parser = SelectionMetric::from_str, default_value = "psnr")]
    pub metric: SelectionMetric,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    Psnr,
    SobelVar,
    LaplaceVar,
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psnr" => Ok(Self::Psnr),
            "sobel_var" | "sobel" => Ok(Self::SobelVar),
            "laplace_var" | "laplace" => Ok(Self::LaplaceVar),
            other => Err(Error::param(format!("unknown selection metric `{other}`"))),
        }
    }
}

/// One row of the results CSV. Missing values are written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub image: String,
    pub k: usize,
    pub sigma: Option<f64>,
    pub mode: String,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub sobel_var: Option<f64>,
    pub laplace_var: Option<f64>,
}

fn write_rows(out: &mut dyn Write, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let wrap = |e: csv::Error| Error::io("<stdout>", std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm")
    )
}

/// Image files under `paths`, where directories are listed one level deep.
/// Sorted for reproducibility.
pub fn collect_images(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = entry.map_err(|e| Error::io(p, e))?.path();
                if path.is_file() && is_image(&path) {
                    found.push(path);
                }
            }
        } else if p.is_file() {
            found.push(p.clone());
        } else {
            return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    found.sort();
    Ok(found)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_blur_gen(args: &BlurGenArgs) -> Result<Manifest> {
    let inputs = collect_images(std::slice::from_ref(&args.input))?;
    if inputs.is_empty() {
        return Err(Error::param(format!("no PNG or PGM images in {}", args.input.display())));
    }
    let manifest = generate_blurred_dataset(&inputs, GaussianKernelSpec::new(args.k, args.sigma), &args.out)?;
    info!("blurred {} images into {}", manifest.records.len(), args.out.display());
    Ok(manifest)
}

/// Image pairs named by a manifest; relative LR paths resolve against the
/// manifest's directory.
pub fn load_manifest_pairs(path: &Path) -> Result<Vec<(Image, Image)>> {
    let manifest = Manifest::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    if manifest.records.is_empty() {
        return Err(Error::param(format!("manifest {} lists no images", path.display())));
    }
    manifest
        .records
        .iter()
        .map(|r| Ok((load_image(&r.source)?, load_image(dir.join(&r.output))?)))
        .collect()
}

/// HR/LR pairs from two directories, matched by file stem.
pub fn load_dir_pairs(hr_dir: &Path, lr_dir: &Path) -> Result<Vec<(Image, Image)>> {
    let lr: BTreeMap<String, PathBuf> = collect_images(&[lr_dir.to_path_buf()])?
        .into_iter()
        .map(|p| (stem(&p), p))
        .collect();
    let mut pairs = Vec::new();
    for hr in collect_images(&[hr_dir.to_path_buf()])? {
        if let Some(l) = lr.get(&stem(&hr)) {
            pairs.push((load_image(&hr)?, load_image(l)?));
        }
    }
    if pairs.is_empty() {
        return Err(Error::param(format!(
            "no images with matching names in {} and {}",
            hr_dir.display(),
            lr_dir.display()
        )));
    }
    Ok(pairs)
}

/// Config file, then flags.
pub fn resolve_config(args: &TrainArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:expr => $field:ident),*) => {$(if let Some(v) = $flag { cfg.$field = v; })*};
    }
    set!(args.mode => mode, args.bme => bme, args.k => k, args.patch => patch, args.atoms => atoms,
         args.lambda => lambda, args.lr => learning_rate, args.iters => outer_iters,
         args.patches => n_patches, seed => seed);
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train(args: &TrainArgs, seed: Option<u64>) -> Result<ModelCheckpoint> {
    let cfg = resolve_config(args, seed)?;
    let pairs = match (&args.manifest, &args.hr, &args.lr_dir) {
        (Some(m), _, _) => load_manifest_pairs(m)?,
        (None, Some(h), Some(l)) => load_dir_pairs(h, l)?,
        _ => return Err(Error::param("give --manifest or both --hr and --lr-dir")),
    };
    let pairs = pairs
        .iter()
        .map(|(h, l)| align_pair(h, l, cfg.k))
        .collect::<Result<Vec<_>>>()?;
    info!(
        "training {} / {} on {} image pairs: k={} p={} atoms={} iters={}",
        cfg.mode,
        cfg.bme,
        pairs.len(),
        cfg.k,
        cfg.patch,
        cfg.atoms,
        cfg.outer_iters
    );
    let model = train(&cfg, &pairs, args.scenario)?;
    save_checkpoint(&args.out, &model)?;
    Ok(model)
}

/// Center-crops `a` and `b` to their common size.
fn common_crop(a: &Image, b: &Image) -> Result<(Image, Image)> {
    let h = a.height().min(b.height());
    let w = a.width().min(b.width());
    Ok((a.center_crop(h, w)?, b.center_crop(h, w)?))
}

pub fn cmd_deblur(args: &DeblurArgs, out: &mut dyn Write) -> Result<CsvRow> {
    let model = load_checkpoint(&args.checkpoint)?;
    let lr = load_image(&args.input)?;
    let mut req = DeblurRequest::new(&lr, &model);
    req.stride = args.stride;
    if let Some(l) = args.lambda {
        req.lambda = l;
    }
    let restored = deblur(&req)?;
    save_image(&args.output, &restored)?;
    let report = match &args.gt {
        Some(gt) => {
            let (a, b) = common_crop(&restored, &load_image(gt)?)?;
            MetricReport::compute(&a, Some(&b))?
        }
        None => MetricReport::compute(&restored, None)?,
    };
    let row = CsvRow {
        image: args.input.display().to_string(),
        k: model.kernel_side(),
        sigma: args.sigma,
        mode: model.config.mode.to_string(),
        psnr: report.psnr,
        ssim: report.ssim,
        sobel_var: Some(report.sobel_var),
        laplace_var: Some(report.laplace_var),
    };
    write_rows(out, std::slice::from_ref(&row))?;
    Ok(row)
}

/// Candidate checkpoints and the score used to choose between them.
#[derive(Debug, Clone)]
pub struct CrossValPlan {
    pub checkpoints: Vec<PathBuf>,
    pub metric: SelectionMetric,
    pub stride: usize,
}

/// A named blurred image with an optional sharp reference.
#[derive(Debug, Clone)]
pub struct CrossValSample {
    pub name: String,
    pub lr: Image,
    pub gt: Option<Image>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub k: usize,
    pub mode: TrainMode,
    /// One score per sample, in sample order.
    pub scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub metric: SelectionMetric,
    /// Sorted by ascending `k`.
    pub candidates: Vec<CandidateScore>,
    pub selected_k: usize,
}

impl CrossValReport {
    pub fn rows(&self, samples: &[CrossValSample]) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for c in &self.candidates {
            for (s, &v) in samples.iter().zip(&c.scores) {
                let mut row = CsvRow {
                    image: s.name.clone(),
                    k: c.k,
                    sigma: None,
                    mode: c.mode.to_string(),
                    psnr: None,
                    ssim: None,
                    sobel_var: None,
                    laplace_var: None,
                };
                match self.metric {
                    SelectionMetric::Psnr => row.psnr = Some(v),
                    SelectionMetric::SobelVar => row.sobel_var = Some(v),
                    SelectionMetric::LaplaceVar => row.laplace_var = Some(v),
                }
                rows.push(row);
            }
        }
        rows
    }
}

/// Deblurs every sample with every model and picks the `k` with the best
/// mean score. All outputs (and references) are center-cropped to one common
/// size first so candidates are scored on the same pixels. Ties go to the
/// smallest `k`.
pub fn cross_validate(
    models: &[ModelCheckpoint],
    samples: &[CrossValSample],
    metric: SelectionMetric,
    stride: usize,
) -> Result<CrossValReport> {
    if models.is_empty() || samples.is_empty() {
        return Err(Error::param("cross-validation needs checkpoints and images"));
    }
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by_key(|&i| models[i].kernel_side());
    for w in order.windows(2) {
        if models[w[0]].kernel_side() == models[w[1]].kernel_side() {
            return Err(Error::param(format!(
                "two checkpoints share kernel side {}",
                models[w[0]].kernel_side()
            )));
        }
    }
    if let Some(m) = models.iter().find(|m| m.kernel_side() % 2 == 0) {
        return Err(Error::param(format!("candidate kernel side {} is even", m.kernel_side())));
    }
    if metric == SelectionMetric::Psnr && samples.iter().any(|s| s.gt.is_none()) {
        return Err(Error::param("PSNR selection needs a reference for every image"));
    }

    let outputs: Vec<Vec<Image>> = order
        .par_iter()
        .map(|&i| {
            samples
                .iter()
                .map(|s| {
                    let mut req = DeblurRequest::new(&s.lr, &models[i]);
                    req.stride = stride;
                    deblur(&req)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidates = Vec::with_capacity(order.len());
    for (slot, &i) in order.iter().enumerate() {
        let mut scores = Vec::with_capacity(samples.len());
        for (j, s) in samples.iter().enumerate() {
            let mut h = outputs.iter().map(|o| o[j].height()).min().unwrap();
            let mut w = outputs.iter().map(|o| o[j].width()).min().unwrap();
            if let Some(gt) = &s.gt {
                h = h.min(gt.height());
                w = w.min(gt.width());
            }
            let img = outputs[slot][j].center_crop(h, w)?;
            scores.push(match metric {
                SelectionMetric::Psnr => psnr(&s.gt.as_ref().unwrap().center_crop(h, w)?, &img)?,
                SelectionMetric::SobelVar => sobel_variance(&img)?,
                SelectionMetric::LaplaceVar => laplace_variance(&img)?,
            });
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        candidates.push(CandidateScore {
            k: models[i].kernel_side(),
            mode: models[i].config.mode,
            scores,
            mean,
        });
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean > candidates[best].mean {
            best = i;
        }
    }
    Ok(CrossValReport {
        metric,
        selected_k: candidates[best].k,
        candidates,
    })
}

pub fn cmd_crossval(args: &CrossvalArgs, out: &mut dyn Write) -> Result<CrossValReport> {
    let plan = CrossValPlan {
        checkpoints: args.checkpoints.clone(),
        metric: args.metric,
        stride: args.stride,
    };
    let models = plan
        .checkpoints
        .iter()
        .map(load_checkpoint)
        .collect::<Result<Vec<_>>>()?;
    let gts: BTreeMap<String, PathBuf> = collect_images(&args.gt)?.into_iter().map(|p| (stem(&p), p)).collect();
    let samples = collect_images(&args.lr)?
        .into_iter()
        .map(|p| {
            let name = stem(&p);
            Ok(CrossValSample {
                lr: load_image(&p)?,
                gt: gts.get(&name).map(load_image).transpose()?,
                name,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = cross_validate(&models, &samples, plan.metric, plan.stride)?;
    write_rows(out, &report.rows(&samples))?;
    for c in &report.candidates {
        eprintln!("k={:>2}  mean {:?} = {:.4}", c.k, plan.metric, c.mean);
    }
    eprintln!("selected k = {}", report.selected_k);
    Ok(report)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match &cli.command {
        Command::BlurGen(a) => cmd_blur_gen(a).map(|_| ()),
        Command::Train(a) => cmd_train(a, cli.seed).map(|_| ()),
        Command::Deblur(a) => cmd_deblur(a, &mut out).map(|_| ()),
        Command::Crossval(a) => cmd_crossval(a, &mut out).map(|_| ()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["blurdict", "blur-gen", "--k", "7", "--in", "a", "--out", "b"]), 2);
        assert_eq!(run(["blurdict", "frobnicate"]), 2);
        assert_eq!(run(["blurdict", "train", "--out", "x", "--mode", "sideways"]), 2);
    }

    #[test]
    fn nc_with_gr_rejected() {
        let cli = Cli::try_parse_from(["blurdict", "train", "--out", "x", "--mode", "nc", "--bme", "gr"]).unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        assert!(resolve_config(&args, None).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "k = 5\natoms = 50\nlambda = 0.3\n").unwrap();
        let cli = Cli::try_parse_from([
            "blurdict", "--seed", "4", "train", "--out", "x", "--config", path.to_str().unwrap(), "--atoms", "60",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else { panic!() };
        let cfg = resolve_config(&args, cli.seed).unwrap();
        assert_eq!((cfg.k, cfg.atoms, cfg.lambda, cfg.seed), (5, 60, 0.3, 4));
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("sobel_var".parse::<SelectionMetric>().unwrap(), SelectionMetric::SobelVar);
        assert!("ssim".parse::<SelectionMetric>().is_err());
    }
}
