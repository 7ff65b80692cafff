use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use swinseg_cli::config::RootConfig;
use swinseg_cli::error::{io_err, AppError, Result};
use swinseg_cli::experiments::{
    ablate_centers, ablate_channels, ablate_transfer, compare_baseline, complexity_report,
};
use swinseg_cli::predict::predict_full;
use swinseg_cli::pretext::pretrain_pretext;
use swinseg_cli::train::{evaluate_model, train};
use swinseg_datagen::{
    load_manifest, make_dataset, read_pgm, write_pgm8, GrayImage16, LabelImage, PgmImage, Side,
    SliceRecord, Split,
};
use swinseg_model::{load_checkpoint, save_checkpoint, SwinUnetConfig, SwinUnetModel};

#[derive(Parser)]
#[command(name = "swinseg", version, about = "Multimodal shifted-window segmentation on synthetic phantom slices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// JSON configuration file; missing sections use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Shared {
    fn load(&self) -> Result<RootConfig> {
        let mut cfg = RootConfig::load(self.config.as_deref())?;
        cfg.override_seed(self.seed);
        Ok(cfg)
    }
}

#[derive(Args)]
struct ManifestArg {
    /// Dataset manifest path (overrides the configured one).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl ManifestArg {
    fn apply(&self, cfg: &mut RootConfig) {
        if let Some(m) = &self.manifest {
            cfg.train.manifest = m.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset with its manifest.
    GenData {
        #[command(flatten)]
        shared: Shared,
    },
    /// Train the transformer network on a generated dataset.
    Train {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
        /// Encoder checkpoint for transfer initialization.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to evaluate: train or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Predict a full-width slice: both halves through the model, stitched.
    Predict {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        stir: PathBuf,
        #[arg(long)]
        t1: PathBuf,
        #[arg(long)]
        t2: PathBuf,
    },
    /// Pretrain an encoder on the pretext phantom distribution.
    Pretrain {
        #[command(flatten)]
        shared: Shared,
    },
    /// Channel ablation: three replicated single-modality runs plus stacked.
    AblateChannels {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Transfer ablation: random init versus pretext-pretrained encoder.
    AblateTransfer {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Multicenter ablation: mixed control plus four center-pure pairings.
    AblateCenters {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Train the transformer network and the convolutional baseline on
    /// identical data.
    CompareBaseline {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Per-stage attention cost table (global vs windowed).
    Complexity {
        #[command(flatten)]
        shared: Shared,
        /// Use the 224-pixel backbone-scale configuration.
        #[arg(long)]
        paper_scale: bool,
    },
}

fn read_modality(path: &PathBuf) -> Result<GrayImage16> {
    match read_pgm(path)? {
        PgmImage::Sixteen { width, height, data } => Ok(GrayImage16 { width, height, data }),
        PgmImage::Eight { .. } => Err(AppError::Data(format!(
            "{}: expected a 16-bit modality image",
            path.display()
        ))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { shared } => {
            let cfg = shared.load()?;
            let manifest = make_dataset(&cfg.data, cfg.data.spec.seed, &shared.out)?;
            println!(
                "wrote {} slices ({} train / {} test) under {}",
                manifest.records.len(),
                manifest.split_ids(Split::Train).len(),
                manifest.split_ids(Split::Test).len(),
                shared.out.display()
            );
        }
        Command::Train { shared, manifest, pretrained } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            if let Some(p) = pretrained {
                cfg.train.transfer = swinseg_cli::TransferMode::Encoder;
                cfg.train.pretrained = Some(p);
            }
            let outcome = train(&cfg.train, &shared.out)?;
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!(
                "final loss {:.6}, test dsc {:.4}, mpa {:.4}, miou {:.4}, hd {:.3}",
                outcome.log.epoch_losses.last().unwrap_or(&f64::NAN),
                outcome.log.metrics.dice,
                outcome.log.metrics.mpa,
                outcome.log.metrics.miou,
                outcome.log.metrics.hausdorff,
            );
        }
        Command::Eval { shared, manifest, checkpoint, split } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            let split = match split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(AppError::Config(format!("unknown split {other:?}"))),
            };
            let params = load_checkpoint(&checkpoint)?;
            let model = SwinUnetModel(cfg.train.model.clone());
            let m = load_manifest(&cfg.train.manifest)?;
            let dir = cfg.train.manifest.parent().unwrap_or(std::path::Path::new("."));
            let slices = swinseg_cli::data::load_split(
                dir,
                &m,
                split,
                cfg.train.channel_mode,
                cfg.train.test_center,
            )?;
            let report = evaluate_model(&model, &params, &slices, cfg.train.policy)?;
            std::fs::create_dir_all(&shared.out).map_err(io_err(&shared.out))?;
            let json_path = shared.out.join("metrics.json");
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| AppError::Data(format!("metrics serialization: {e}")))?;
            std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
            let csv_path = shared.out.join("metrics.csv");
            std::fs::write(&csv_path, report.to_csv()).map_err(io_err(&csv_path))?;
            println!(
                "dsc {:.4}, mpa {:.4}, miou {:.4}, hd {:.3} over {} slices",
                report.dice,
                report.mpa,
                report.miou,
                report.hausdorff,
                slices.len()
            );
        }
        Command::Predict { shared, checkpoint, stir, t1, t2 } => {
            let cfg = shared.load()?;
            let params = load_checkpoint(&checkpoint)?;
            let model = SwinUnetModel(cfg.train.model.clone());
            let stir = read_modality(&stir)?;
            let t1 = read_modality(&t1)?;
            let t2 = read_modality(&t2)?;
            let (w, h) = (stir.width, stir.height);
            let record = SliceRecord {
                label: LabelImage::new(w, h),
                stir,
                t1,
                t2,
                center: 0,
                side: Side::Left,
            };
            let mask = predict_full(&model, &params, &record, cfg.train.channel_mode)?;
            std::fs::create_dir_all(&shared.out).map_err(io_err(&shared.out))?;
            let out_path = shared.out.join("prediction.pgm");
            write_pgm8(&out_path, mask.width, mask.height, &mask.data)?;
            println!("wrote {}", out_path.display());
        }
        Command::Pretrain { shared } => {
            let cfg = shared.load()?;
            let (encoder, losses) = pretrain_pretext(&cfg.train)?;
            std::fs::create_dir_all(&shared.out).map_err(io_err(&shared.out))?;
            let path = shared.out.join("pretext-encoder.ckpt");
            save_checkpoint(&encoder, &path)?;
            println!(
                "pretext loss {:.6} -> {:.6} over {} epochs; encoder checkpoint: {}",
                losses.first().unwrap_or(&f64::NAN),
                losses.last().unwrap_or(&f64::NAN),
                losses.len(),
                path.display()
            );
        }
        Command::AblateChannels { shared, manifest } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            let result = ablate_channels(&cfg.train, &shared.out)?;
            print!("{}", result.table.to_text());
        }
        Command::AblateTransfer { shared, manifest } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            let result = ablate_transfer(&cfg.train, &shared.out)?;
            print!("{}", result.table.to_text());
        }
        Command::AblateCenters { shared, manifest } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            let result = ablate_centers(&cfg.train, &shared.out)?;
            print!("{}", result.table.to_text());
        }
        Command::CompareBaseline { shared, manifest } => {
            let mut cfg = shared.load()?;
            manifest.apply(&mut cfg);
            let result = compare_baseline(&cfg.train, &shared.out)?;
            print!("{}", result.table.to_text());
        }
        Command::Complexity { shared, paper_scale } => {
            let cfg = shared.load()?;
            let model_cfg = if paper_scale { SwinUnetConfig::paper_faithful() } else { cfg.train.model };
            let table = complexity_report(&model_cfg);
            table.write(&shared.out, "complexity")?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
