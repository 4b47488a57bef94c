use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rainsr::checkpoint::StageKind;
use rainsr::config::TrainConfig;
use rainsr::datasets::{load_image, make_micro_dataset, save_png};
use rainsr::nets::{grad_check, Family, NetworkSpec};
use rainsr::pipeline;

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "rainsr", version, about = "Joint deraining and 4x super-resolution trained from unpaired images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the procedural micro-dataset into the configured data root.
    SynthData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write here instead of the configured data root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one stage (or all three in order).
    Train {
        stage: StageArg,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint of the same stage and configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Super-resolve one LR image 4x.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// SRN checkpoint; defaults to `<out_dir>/srn.ckpt` of the config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score the trained SRN against bicubic on the paired eval split.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference gradient check of every network family in f64.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Write pseudo-pairs from the trained translator and DSN as PNGs.
    BakePairs {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Translator,
    Dsn,
    Srn,
    All,
}

fn load_config(path: Option<&Path>) -> rainsr::Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p),
        None => TrainConfig::parse("", Path::new(".")),
    }
}

fn run(cmd: Command) -> rainsr::Result<()> {
    match cmd {
        Command::SynthData { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let root = out.unwrap_or_else(|| cfg.data_root().to_path_buf());
            let m = make_micro_dataset(&root, cfg.seed, &cfg.micro_sizes(), &cfg.rain())?;
            println!(
                "wrote {} sunny, {} rainy, {} real-LR and {} eval images to {}",
                m.sunny_hr.len(),
                m.rainy_hr.len(),
                m.real_lr.len(),
                m.eval.len(),
                root.display()
            );
        }
        Command::Train { stage, config, resume } => {
            let cfg = load_config(config.as_deref())?;
            let stages: Vec<StageKind> = match stage {
                StageArg::Translator => vec![StageKind::Translator],
                StageArg::Dsn => vec![StageKind::Dsn],
                StageArg::Srn => vec![StageKind::Srn],
                StageArg::All => StageKind::ALL.to_vec(),
            };
            if resume.is_some() && stages.len() > 1 {
                return Err(rainsr::Error::State("--resume applies to a single stage".into()));
            }
            for s in stages {
                let out = pipeline::run_stage(&cfg, s, resume.as_deref())?;
                println!(
                    "{s}: {} steps -> {} (log {})",
                    out.checkpoint.step,
                    out.checkpoint_path.display(),
                    out.loss_log.display()
                );
            }
        }
        Command::Infer {
            input,
            output,
            checkpoint,
            config,
        } => {
            let ckpt = match checkpoint {
                Some(p) => p,
                None => pipeline::checkpoint_path(&load_config(config.as_deref())?.out_dir, StageKind::Srn),
            };
            let model = pipeline::load_srn_model(&ckpt)?;
            let sr = pipeline::infer_image(&model, &load_image(&input)?)?;
            save_png(&sr, &output)?;
            println!("{} -> {} ({}x{})", input.display(), output.display(), sr.width(), sr.height());
        }
        Command::Evaluate { config } => {
            let cfg = load_config(config.as_deref())?;
            let r = pipeline::evaluate_run(&cfg)?;
            for row in &r.rows {
                println!(
                    "{}: psnr {:.3} dB (bicubic {:.3}), ssim {:.4} (bicubic {:.4})",
                    row.name, row.psnr_sr, row.psnr_bicubic, row.ssim_sr, row.ssim_bicubic
                );
            }
            println!(
                "median gain: psnr {:+.3} dB, ssim {:+.4}; report in {}",
                r.median_psnr_gain(),
                r.median_ssim_gain(),
                cfg.out_dir.join("report").display()
            );
        }
        Command::GradCheck { seed, eps } => {
            let mut worst: f64 = 0.0;
            for family in Family::ALL {
                let r = grad_check(NetworkSpec::minimal(family), seed, eps)?;
                println!(
                    "{family}: max relative error {:.3e} at {} ({} entries)",
                    r.max_rel_error, r.worst, r.checked
                );
                worst = worst.max(r.max_rel_error);
            }
            if !(worst <= GRAD_TOLERANCE) {
                return Err(rainsr::Error::State(format!(
                    "gradient check failed: {worst:.3e} exceeds {GRAD_TOLERANCE:e}"
                )));
            }
        }
        Command::BakePairs { config, count, out } => {
            let cfg = load_config(config.as_deref())?;
            let pairs = pipeline::bake_pairs(&cfg, count, &out)?;
            println!("wrote {} pairs to {}", pairs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
