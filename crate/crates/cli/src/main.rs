//! `uvrecon`: dataset synthesis, two-stage training, reconstruction and
//! evaluation from the command line.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors
//! (bad flags, missing or invalid config files).

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use uvrecon::metrics::{self, image_of};
use uvrecon::nets::{self, load_checkpoint, save_checkpoint, ALL_SECTIONS, RECON};
use uvrecon::observation::io::{read_fmsk, read_fvis, write_fimg, write_fvis, VisKind};
use uvrecon::observation::{load_dataset, synth_dataset, Dataset, DatasetConfig, SparseVisibility};
use uvrecon::trainer::{
    self, run_idr, run_scm, split_indices, summarize_scm, sweep_kappa, write_idr_log, write_scm_log, write_sweep,
    TrainConfig,
};

#[derive(Parser)]
#[command(name = "uvrecon", version, about = "Sparse-visibility reconstruction for interferometric imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of sky images and sparse visibilities.
    SynthDataset(SynthArgs),
    /// Self-supervised pretraining of encoders, predictors and decoders.
    Pretrain(PretrainArgs),
    /// Fine-tune the visibility encoder and reconstruction network.
    Finetune(FinetuneArgs),
    /// Reconstruct a dense visibility grid and image from one observation.
    Reconstruct(ReconstructArgs),
    /// Score dirty and reconstructed images against ground truth.
    Evaluate(EvaluateArgs),
    /// Pretrain once per contrastive weight and tabulate the results.
    SweepKappa(SweepArgs),
    /// Write pooled latent embeddings of both modalities as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory; defaults to the path named in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Output directory for the checkpoint and log.
    #[arg(long)]
    out: PathBuf,
    /// Disable the contrastive pretext task.
    #[arg(long)]
    no_task1: bool,
    /// Disable the masked cross-modal prediction task.
    #[arg(long)]
    no_task2: bool,
    /// Overrides the contrastive weight in the config.
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Pretrained checkpoint, or `none` to start from a fresh encoder.
    #[arg(long)]
    init: String,
    /// Output directory for the checkpoint and log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Fine-tuned checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Sparse visibility grid (FVIS).
    #[arg(long)]
    vis: PathBuf,
    /// Sampling mask (FMSK).
    #[arg(long)]
    mask: PathBuf,
    /// Output directory; receives dense.fvis and image.fimg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Report CSV. Pretrained checkpoints also get `<stem>_scm.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Run config; supplies the seed, mask ratio and loss weights.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed used for the split and evaluation masks.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate every sample instead of the held-out test split.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated contrastive weights.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Pretrained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<uvrecon::Error> for Failure {
    fn from(e: uvrecon::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

/// Marks an output location as in use for the lifetime of the guard.
struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    fn acquire(path: PathBuf) -> anyhow::Result<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(&path).with_context(|| {
            format!("{} exists; another run is writing this output (remove it if stale)", path.display())
        })?;
        Ok(OutputLock { path, _file: file })
    }

    fn dir(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Self::acquire(dir.join(".lock"))
    }

    fn file(path: &Path) -> anyhow::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        let mut name = path.as_os_str().to_owned();
        name.push(".lock");
        Self::acquire(PathBuf::from(name))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn load_train_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::load(&args.config).map_err(usage)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn data_dir(flag: &Option<PathBuf>, fallback: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| usage(anyhow!("no dataset given; pass --data or set it in the config")))
}

fn open_dataset(dir: &Path) -> Result<Dataset, Failure> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display())).map_err(Failure::Runtime)
}

fn synth(args: SynthArgs) -> Outcome {
    let mut cfg = DatasetConfig::load(&args.config)
        .with_context(|| format!("dataset config {}", args.config.display()))
        .map_err(usage)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let _lock = OutputLock::dir(&args.out)?;
    let ds = synth_dataset(&cfg, &args.out)?;
    println!(
        "wrote {} samples ({}x{}, coverage {:.4}) to {}",
        ds.len(),
        ds.size(),
        ds.size(),
        ds.mask.coverage(),
        args.out.display()
    );
    Ok(())
}

fn pretrain(args: PretrainArgs) -> Outcome {
    let mut cfg = load_train_config(&args.train)?;
    if args.no_task1 {
        cfg.task1_contrastive = false;
    }
    if args.no_task2 {
        cfg.task2_masking = false;
    }
    if let Some(k) = args.kappa {
        cfg.kappa = k;
    }
    cfg.scm_stage = true;
    cfg.validate().map_err(usage)?;
    let ds = open_dataset(&data_dir(&args.train.data, &cfg.pretrain_data)?)?;
    let _lock = OutputLock::dir(&args.out)?;
    let out = run_scm(&cfg, &ds)?;
    save_checkpoint(&args.out.join("scm.ckpt"), &out.checkpoint)?;
    write_scm_log(&args.out.join("scm_log.csv"), &out.log)?;
    let s = summarize_scm(&out.log, cfg.window)?;
    println!(
        "pretrained {} steps: acc {:.4}, l_c {:.5}, l_rec_v {:.5}, l_rec_i {:.5}",
        out.log.len(),
        s.acc,
        s.l_c,
        s.l_rec_v,
        s.l_rec_i
    );
    Ok(())
}

fn finetune(args: FinetuneArgs) -> Outcome {
    let mut cfg = load_train_config(&args.train)?;
    let init = match args.init.as_str() {
        "none" => {
            cfg.scm_stage = false;
            None
        }
        path => {
            cfg.scm_stage = true;
            Some(load_checkpoint(Path::new(path)).with_context(|| format!("reading {path}"))?)
        }
    };
    cfg.idr_stage = true;
    cfg.validate().map_err(usage)?;
    let ds = open_dataset(&data_dir(&args.train.data, &cfg.finetune_data)?)?;
    let _lock = OutputLock::dir(&args.out)?;
    let out = run_idr(&cfg, &ds, init.as_ref())?;
    save_checkpoint(&args.out.join("idr.ckpt"), &out.checkpoint)?;
    write_idr_log(&args.out.join("idr_log.csv"), &out.log)?;
    let last = out.log.last().map_or(f64::NAN, |r| r.l_idr);
    println!("fine-tuned {} steps: final loss {last:.6}", out.log.len());
    Ok(())
}

fn reconstruct(args: ReconstructArgs) -> Outcome {
    let ck = load_checkpoint(&args.ckpt).with_context(|| format!("reading {}", args.ckpt.display()))?;
    let (grid, kind) = read_fvis(&args.vis).with_context(|| format!("reading {}", args.vis.display()))?;
    if kind != VisKind::Sparse {
        return Err(anyhow!("{} holds a dense grid; expected a sparse observation", args.vis.display()).into());
    }
    let mask = read_fmsk(&args.mask).with_context(|| format!("reading {}", args.mask.display()))?;
    let sparse = SparseVisibility::new(grid, mask, 0.0)?;
    let mut rng = trainer::subsample_stream(ck.token_seed);
    let (_, dense) = nets::reconstruct_dense(&ck.params, &ck.arch, &sparse, &mut rng)?;
    let image = image_of(&dense)?;
    let _lock = OutputLock::dir(&args.out)?;
    write_fvis(&args.out.join("dense.fvis"), &dense, VisKind::Dense)?;
    write_fimg(&args.out.join("image.fimg"), &image)?;
    println!("wrote dense.fvis and image.fimg to {}", args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Outcome {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p).map_err(usage)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let ck = load_checkpoint(&args.ckpt).with_context(|| format!("reading {}", args.ckpt.display()))?;
    let ds = open_dataset(&args.data)?;
    let indices = if args.all {
        (0..ds.len()).collect()
    } else {
        let test = split_indices(ds.len(), cfg.seed).test;
        if test.is_empty() {
            (0..ds.len()).collect()
        } else {
            test
        }
    };
    let report = metrics::evaluate(&ck, &ds, &indices)?;
    let pretrained = ALL_SECTIONS
        .iter()
        .filter(|&&s| s != RECON)
        .all(|s| ck.params.section(s).is_some());
    let scm = if pretrained {
        Some(metrics::scm_metrics(&ck, &ds, &indices, &cfg)?)
    } else {
        None
    };
    let _lock = OutputLock::file(&args.out)?;
    report.write(&args.out)?;
    if let Some(scm) = scm {
        let stem = args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let path = args.out.with_file_name(format!("{stem}_scm.csv"));
        fs::write(&path, scm.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("pretext: acc {:.4}, l_c {:.5}", scm.acc, scm.l_c);
    }
    let m = &report.mean;
    println!(
        "{} samples: dirty {:.3} dB / {:.4}, reconstructed {:.3} dB / {:.4}{}",
        report.rows.len(),
        m.dirty_psnr,
        m.dirty_ssim,
        m.recon_psnr,
        m.recon_ssim,
        if report.reconstructed { "" } else { " (not fine-tuned; dirty image scored)" }
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Outcome {
    let cfg = load_train_config(&args.train)?;
    let ds = open_dataset(&data_dir(&args.train.data, &cfg.pretrain_data)?)?;
    let _lock = OutputLock::file(&args.out)?;
    let rows = sweep_kappa(&cfg, &ds, &args.values).map_err(|e| match e {
        uvrecon::Error::InvalidArgument(_) | uvrecon::Error::Config(_) => usage(e),
        other => other.into(),
    })?;
    write_sweep(&args.out, &rows)?;
    println!("swept {} values into {}", rows.len(), args.out.display());
    Ok(())
}

fn export(args: ExportArgs) -> Outcome {
    let ck = load_checkpoint(&args.ckpt).with_context(|| format!("reading {}", args.ckpt.display()))?;
    let ds = open_dataset(&args.data)?;
    let _lock = OutputLock::file(&args.out)?;
    metrics::export_embeddings(&ck, &ds, &args.out)?;
    println!("wrote {} embeddings to {}", ds.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::SynthDataset(a) => synth(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepKappa(a) => sweep(a),
        Command::ExportEmbeddings(a) => export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
