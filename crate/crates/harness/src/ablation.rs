//! The `ablation` command: every `(variant × alpha)` cell over the seed
//! list, with one shared pre-trained/unlearned model pair per `(alpha,
//! seed)` so variants differ only in the recovery method.

use std::path::Path;

use anyhow::{Context, Result};

use frs_core::nn::save_checkpoint;
use frs_core::recovery::RecoveryVariant;

use crate::config::ExperimentConfig;
use crate::report::{atomic_write, file_hash, fmt_sig, mean_std, table_csv};
use crate::stages::{load_dataset, pretrain, recover_variants, unlearn};

/// One `(alpha, seed, variant)` measurement.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub alpha: f64,
    pub seed: u64,
    pub variant: RecoveryVariant,
    pub skewed_acc: f64,
    pub balanced_acc: f64,
    pub overall_acc: f64,
    /// Hash of the unlearned checkpoint this variant consumed.
    pub unlearned_hash: String,
}

/// Cell of the summary table: means and standard deviations over seeds.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub alpha: f64,
    pub variant: RecoveryVariant,
    pub skewed_mean: f64,
    pub skewed_std: f64,
    pub balanced_mean: f64,
    pub balanced_std: f64,
    pub seeds: usize,
}

pub struct AblationResult {
    pub runs: Vec<AblationRun>,
    /// Post-unlearning metrics per `(alpha, seed)`:
    /// `(alpha, seed, skewed, overall, balanced)`.
    pub unlearned: Vec<(f64, u64, f64, f64, f64)>,
    pub cells: Vec<AblationCell>,
}

/// Runs the ablation grid and writes `ablation_runs.csv`,
/// `ablation_unlearned.csv`, and `ablation_summary.csv` under `out_dir`.
pub fn run_ablation(cfg: &ExperimentConfig, out_dir: &Path) -> Result<AblationResult> {
    std::fs::create_dir_all(out_dir)?;
    let variants: Vec<RecoveryVariant> = cfg
        .recovery
        .variants
        .iter()
        .map(|v| v.parse().map_err(|e| anyhow::anyhow!("{e}")))
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    let mut unlearned_rows = Vec::new();
    for &alpha in &cfg.partition.alphas {
        for &seed in &cfg.seeds {
            let plan = cfg.seed_plan(seed);
            let data = load_dataset(cfg, &plan)?;
            let skewed_class = cfg.skewed_class(data.train.class_count(), &plan);

            // One shared pre-trained and unlearned pair per (alpha, seed):
            // the fairness rule for comparing recovery methods.
            let pre = pretrain(cfg, &plan, &data, alpha, skewed_class)
                .with_context(|| format!("pretrain alpha={alpha} seed={seed}"))?;
            let un = unlearn(cfg, &plan, &pre, &data.test, skewed_class)
                .with_context(|| format!("unlearn alpha={alpha} seed={seed}"))?;
            let ckpt = out_dir.join(format!("unlearned_a{alpha}_s{seed}.frsm"));
            save_checkpoint(&un.model, &ckpt)?;
            let unlearned_hash = file_hash(&ckpt)?;
            unlearned_rows.push((
                alpha,
                seed,
                un.eval.skewed_class_accuracy,
                un.eval.overall_accuracy,
                un.eval.balanced_accuracy,
            ));

            let results = recover_variants(
                cfg,
                &plan,
                &un.model,
                &pre.shards,
                &data.test,
                skewed_class,
                &variants,
            )
            .with_context(|| format!("recovery alpha={alpha} seed={seed}"))?;
            for (variant, stage) in results {
                runs.push(AblationRun {
                    alpha,
                    seed,
                    variant,
                    skewed_acc: stage.final_eval.skewed_class_accuracy,
                    balanced_acc: stage.final_eval.balanced_accuracy,
                    overall_acc: stage.final_eval.overall_accuracy,
                    unlearned_hash: unlearned_hash.clone(),
                });
            }
        }
    }

    let mut cells = Vec::new();
    for &alpha in &cfg.partition.alphas {
        for &variant in &variants {
            let skewed: Vec<f64> = runs
                .iter()
                .filter(|r| r.alpha == alpha && r.variant == variant)
                .map(|r| r.skewed_acc)
                .collect();
            let balanced: Vec<f64> = runs
                .iter()
                .filter(|r| r.alpha == alpha && r.variant == variant)
                .map(|r| r.balanced_acc)
                .collect();
            let (skewed_mean, skewed_std) = mean_std(&skewed);
            let (balanced_mean, balanced_std) = mean_std(&balanced);
            cells.push(AblationCell {
                alpha,
                variant,
                skewed_mean,
                skewed_std,
                balanced_mean,
                balanced_std,
                seeds: skewed.len(),
            });
        }
    }

    let run_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                fmt_sig(r.alpha),
                r.seed.to_string(),
                r.variant.as_str().to_string(),
                fmt_sig(r.skewed_acc),
                fmt_sig(r.balanced_acc),
                fmt_sig(r.overall_acc),
                r.unlearned_hash.clone(),
            ]
        })
        .collect();
    atomic_write(
        &out_dir.join("ablation_runs.csv"),
        table_csv(
            "alpha,seed,variant,skewed_acc,balanced_acc,overall_acc,unlearned_checkpoint",
            &run_rows,
        )
        .as_bytes(),
    )?;

    let unlearned_csv: Vec<Vec<String>> = unlearned_rows
        .iter()
        .map(|(alpha, seed, skewed, overall, balanced)| {
            vec![
                fmt_sig(*alpha),
                seed.to_string(),
                fmt_sig(*skewed),
                fmt_sig(*overall),
                fmt_sig(*balanced),
            ]
        })
        .collect();
    atomic_write(
        &out_dir.join("ablation_unlearned.csv"),
        table_csv("alpha,seed,skewed_acc,overall_acc,balanced_acc", &unlearned_csv).as_bytes(),
    )?;

    let cell_rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                fmt_sig(c.alpha),
                c.variant.as_str().to_string(),
                fmt_sig(c.skewed_mean),
                fmt_sig(c.skewed_std),
                fmt_sig(c.balanced_mean),
                fmt_sig(c.balanced_std),
                c.seeds.to_string(),
            ]
        })
        .collect();
    atomic_write(
        &out_dir.join("ablation_summary.csv"),
        table_csv(
            "alpha,variant,skewed_mean,skewed_std,balanced_mean,balanced_std,seeds",
            &cell_rows,
        )
        .as_bytes(),
    )?;

    Ok(AblationResult {
        runs,
        unlearned: unlearned_rows,
        cells,
    })
}
