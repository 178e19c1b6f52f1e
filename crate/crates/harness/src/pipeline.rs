//! The `pipeline` command: pre-train → unlearn → recover → report.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use frs_core::data::UNLEARNING_CLIENT;
use frs_core::nn::save_checkpoint;
use frs_core::recovery::RecoveryVariant;

use crate::config::ExperimentConfig;
use crate::report::{
    atomic_write, content_hash, metrics_csv, write_json, RunReport, TrainStageReport,
    UnlearnStageReport, CONFIG_REPORT_VERSION,
};
use crate::stages::{load_dataset, pretrain, recover_stage, unlearn, PreparedData};

/// Artifact filenames inside the run directory.
pub mod files {
    pub const CONFIG_ECHO: &str = "config_echo.toml";
    pub const PARTITION_MANIFEST: &str = "partition_manifest.json";
    pub const PRETRAIN_METRICS: &str = "pretrain_metrics.csv";
    pub const GLOBAL_MODEL: &str = "global_model.frsm";
    pub const UNLEARNED_MODEL: &str = "unlearned_model.frsm";
    pub const UNLEARN_TRACE: &str = "unlearn_trace.json";
    pub const RECOVERY_METRICS: &str = "recovery_metrics.csv";
    pub const RECOVERED_MODEL: &str = "recovered_model.frsm";
    pub const AUGMENTATION_MANIFEST: &str = "augmentation_manifest.json";
    pub const GENERATED_IMAGES: &str = "generated_samples.idx3-ubyte";
    pub const GENERATED_LABELS: &str = "generated_samples.idx1-ubyte";
    pub const RUN_REPORT: &str = "run_report.json";
}

/// Runs the full pipeline for one `(seed, alpha, variant)` cell, writing
/// artifacts into `out_dir` as each stage completes.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    master_seed: u64,
    alpha: f64,
    variant: RecoveryVariant,
    out_dir: &Path,
) -> Result<RunReport> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    let plan = cfg.seed_plan(master_seed);
    let echo = cfg.echo_toml()?;
    atomic_write(&out_dir.join(files::CONFIG_ECHO), echo.as_bytes())?;

    let data = load_dataset(cfg, &plan).context("stage dataset failed")?;
    let input_files: Vec<&Path> = data.input_files.iter().map(PathBuf::as_path).collect();
    let hash = content_hash(&echo, &input_files)?;
    let skewed_class = cfg.skewed_class(data.train.class_count(), &plan);

    // Pre-training with every client.
    let pre = pretrain(cfg, &plan, &data, alpha, skewed_class).context("stage pretrain failed")?;
    write_json(&out_dir.join(files::PARTITION_MANIFEST), &pre.partition_manifest)?;
    atomic_write(
        &out_dir.join(files::PRETRAIN_METRICS),
        metrics_csv(&pre.rounds, cfg.partition.client_count).as_bytes(),
    )?;
    save_checkpoint(&pre.global, &out_dir.join(files::GLOBAL_MODEL))?;

    // Unlearning on client 0.
    let un = unlearn(cfg, &plan, &pre, &data.test, skewed_class).context("stage unlearn failed")?;
    save_checkpoint(&un.model, &out_dir.join(files::UNLEARNED_MODEL))?;
    write_json(&out_dir.join(files::UNLEARN_TRACE), &un.trace)?;

    // Recovery with the remaining clients.
    let rec = recover_stage(
        cfg,
        &plan,
        &un.model,
        &pre.shards,
        &data.test,
        skewed_class,
        variant,
    )
    .context("stage recovery failed")?;
    debug_assert!(rec
        .outcome
        .manifests
        .iter()
        .all(|m| m.client_id != UNLEARNING_CLIENT));
    atomic_write(
        &out_dir.join(files::RECOVERY_METRICS),
        metrics_csv(&rec.outcome.trace, cfg.partition.client_count - 1).as_bytes(),
    )?;
    save_checkpoint(&rec.outcome.model, &out_dir.join(files::RECOVERED_MODEL))?;
    write_json(&out_dir.join(files::AUGMENTATION_MANIFEST), &rec.outcome.manifests)?;
    export_generated_samples(&rec.outcome.shards, skewed_class, out_dir)?;

    let report = RunReport {
        version: CONFIG_REPORT_VERSION,
        seed: master_seed,
        variant: variant.as_str().to_string(),
        skewed_class,
        alpha,
        config_echo: echo,
        content_hash: hash,
        pretrain: TrainStageReport {
            rounds: pre.rounds,
            final_eval: pre.final_eval,
            wall_ms: pre.wall_ms,
        },
        unlearn: UnlearnStageReport {
            eval: un.eval,
            trace: un.trace,
            wall_ms: un.wall_ms,
        },
        recovery: TrainStageReport {
            rounds: rec.outcome.trace.clone(),
            final_eval: rec.final_eval,
            wall_ms: rec.wall_ms,
        },
    };
    write_json(&out_dir.join(files::RUN_REPORT), &report)?;
    Ok(report)
}

/// Writes every kept generated sample (across clients) as an IDX pair for
/// external inspection. Nothing is written when no samples were generated.
fn export_generated_samples(
    shards: &[frs_core::data::ClientShard],
    skewed_class: usize,
    out_dir: &Path,
) -> Result<()> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for shard in shards {
        for (row, &generated) in shard.generated_mask.iter().enumerate() {
            if generated {
                rows.push(shard.data.features().row(row).to_vec());
            }
        }
    }
    if rows.is_empty() {
        return Ok(());
    }
    let dim = rows[0].len();
    let features = ndarray::Array2::from_shape_vec(
        (rows.len(), dim),
        rows.into_iter().flatten().collect(),
    )
    .expect("rectangular rows");
    let labels = vec![skewed_class; features.nrows()];
    let dataset = frs_core::data::LabeledDataset::new(features, labels, skewed_class + 1)?;
    frs_core::data::write_idx(
        &dataset,
        &out_dir.join(files::GENERATED_IMAGES),
        &out_dir.join(files::GENERATED_LABELS),
    )?;
    Ok(())
}

/// Convenience used by the CLI: seed/alpha/variant from the config itself.
pub fn run_pipeline_from_config(cfg: &ExperimentConfig) -> Result<RunReport> {
    let variant: RecoveryVariant = cfg
        .recovery
        .variant
        .parse()
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    run_pipeline(
        cfg,
        cfg.master_seed,
        cfg.partition.alpha,
        variant,
        &cfg.out_dir,
    )
}

/// Re-evaluates a prepared dataset/model pair (the `evaluate` command).
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    cfg: &ExperimentConfig,
    skewed_class_override: Option<usize>,
) -> Result<frs_core::fed::EvalReport> {
    let plan = cfg.seed_plan(cfg.master_seed);
    let data: PreparedData = load_dataset(cfg, &plan)?;
    let model = frs_core::nn::load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let skewed_class =
        skewed_class_override.unwrap_or_else(|| cfg.skewed_class(data.test.class_count(), &plan));
    Ok(frs_core::fed::evaluate(&model, &data.test, skewed_class)?)
}
