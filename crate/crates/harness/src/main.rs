//! `frs` — deterministic federated unlearning-recovery experiments.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use frs_harness::ablation::run_ablation;
use frs_harness::config::ExperimentConfig;
use frs_harness::ksweep::run_ksweep;
use frs_harness::pipeline::{evaluate_checkpoint, run_pipeline};
use frs_harness::report::{fmt_sig, write_json};
use frs_harness::stages::load_dataset;

#[derive(Parser)]
#[command(name = "frs", version, about = "Federated unlearning-recovery simulator")]
struct Cli {
    /// Worker threads for parallel client work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train, unlearn client 0, recover with the configured variant.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the recovery variant
        /// (plain_finetune | smote | smote_denoise).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Every recovery variant × alpha, sharing the unlearned model per cell.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Denoising k sensitivity on fixed partition/unlearning artifacts.
    Ksweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a model checkpoint on the config's test set.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        skewed_class: Option<usize>,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the partition manifest only (no training).
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }

    match cli.command {
        Command::Pipeline {
            config,
            seed,
            out,
            variant,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let master_seed = seed.unwrap_or(cfg.master_seed);
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let variant = variant
                .as_deref()
                .unwrap_or(&cfg.recovery.variant)
                .parse()
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let report = run_pipeline(&cfg, master_seed, cfg.partition.alpha, variant, &out_dir)?;
            println!(
                "pretrain: overall {} balanced {} skewed {}",
                fmt_sig(report.pretrain.final_eval.overall_accuracy),
                fmt_sig(report.pretrain.final_eval.balanced_accuracy),
                fmt_sig(report.pretrain.final_eval.skewed_class_accuracy),
            );
            println!(
                "unlearn:  overall {} balanced {} skewed {}",
                fmt_sig(report.unlearn.eval.overall_accuracy),
                fmt_sig(report.unlearn.eval.balanced_accuracy),
                fmt_sig(report.unlearn.eval.skewed_class_accuracy),
            );
            println!(
                "recovery: overall {} balanced {} skewed {}  ({})",
                fmt_sig(report.recovery.final_eval.overall_accuracy),
                fmt_sig(report.recovery.final_eval.balanced_accuracy),
                fmt_sig(report.recovery.final_eval.skewed_class_accuracy),
                report.variant,
            );
            println!("artifacts: {}", out_dir.display());
        }
        Command::Ablation { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let result = run_ablation(&cfg, &out_dir)?;
            println!("alpha     variant           skewed(mean±std)   balanced(mean±std)");
            for cell in &result.cells {
                println!(
                    "{:<9} {:<17} {:>7}±{:<8} {:>7}±{:<8}",
                    fmt_sig(cell.alpha),
                    cell.variant.as_str(),
                    fmt_sig(cell.skewed_mean),
                    fmt_sig(cell.skewed_std),
                    fmt_sig(cell.balanced_mean),
                    fmt_sig(cell.balanced_std),
                );
            }
            println!("tables: {}", out_dir.display());
        }
        Command::Ksweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            let result = run_ksweep(&cfg, &out_dir)?;
            println!("k      alpha     skewed(mean)  balanced(mean)");
            for cell in &result.cells {
                println!(
                    "{:<6} {:<9} {:<13} {:<13}",
                    cell.k,
                    fmt_sig(cell.alpha),
                    fmt_sig(cell.skewed_mean),
                    fmt_sig(cell.balanced_mean),
                );
            }
            println!("tables: {}", out_dir.display());
        }
        Command::Evaluate {
            checkpoint,
            config,
            skewed_class,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = evaluate_checkpoint(&checkpoint, &cfg, skewed_class)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
        }
        Command::Partition { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
            std::fs::create_dir_all(&out_dir)?;
            let plan = cfg.seed_plan(cfg.master_seed);
            let data = load_dataset(&cfg, &plan)?;
            let skewed_class = cfg.skewed_class(data.train.class_count(), &plan);
            let spec = cfg.partition_spec(cfg.partition.alpha, skewed_class, &plan);
            let (_, manifest) = frs_core::data::partition_with_manifest(&data.train, &spec)?;
            let path = out_dir.join("partition_manifest.json");
            write_json(&path, &manifest)?;
            println!("partition manifest: {}", path.display());
        }
    }
    Ok(())
}
