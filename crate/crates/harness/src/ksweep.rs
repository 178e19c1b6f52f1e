//! The `ksweep` command: denoising neighbor-count sensitivity.
//!
//! Partition, pre-training, unlearning, autoencoders, and generated batches
//! are fixed per `(alpha, seed)`; only the density-factor neighbor count
//! varies, exactly isolating the denoiser.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use frs_core::fed::{run_federated, EvalSpec};
use frs_core::recovery::{apply_variant, prepare_augmentation, RecoveryVariant, ShardAugmentation};

use crate::config::ExperimentConfig;
use crate::report::{atomic_write, fmt_sig, mean_std, table_csv};
use crate::stages::{load_dataset, pretrain, unlearn};

#[derive(Debug, Clone)]
pub struct KsweepRun {
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub skewed_acc: f64,
    pub balanced_acc: f64,
}

#[derive(Debug, Clone)]
pub struct KsweepCell {
    pub k: usize,
    pub alpha: f64,
    pub skewed_mean: f64,
    pub balanced_mean: f64,
    pub seeds: usize,
}

pub struct KsweepResult {
    pub runs: Vec<KsweepRun>,
    pub cells: Vec<KsweepCell>,
}

/// Runs the sweep and writes `ksweep_runs.csv` / `ksweep_summary.csv`.
pub fn run_ksweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<KsweepResult> {
    std::fs::create_dir_all(out_dir)?;
    let mut runs = Vec::new();

    for &alpha in &cfg.partition.alphas {
        for &seed in &cfg.seeds {
            let plan = cfg.seed_plan(seed);
            let data = load_dataset(cfg, &plan)?;
            let skewed_class = cfg.skewed_class(data.train.class_count(), &plan);
            let pre = pretrain(cfg, &plan, &data, alpha, skewed_class)
                .with_context(|| format!("pretrain alpha={alpha} seed={seed}"))?;
            let un = unlearn(cfg, &plan, &pre, &data.test, skewed_class)?;

            let rcfg = cfg.recovery_config(&plan);
            let remaining = &pre.shards[1..];
            let prepared: Vec<ShardAugmentation> = remaining
                .par_iter()
                .map(|shard| prepare_augmentation(shard, skewed_class, &rcfg))
                .collect::<frs_core::Result<_>>()?;

            for &k in &cfg.sweep.k_values {
                let mut augmented = Vec::with_capacity(remaining.len());
                for (shard, aug) in remaining.iter().zip(&prepared) {
                    let (new_shard, _) =
                        apply_variant(shard, aug, RecoveryVariant::SmoteDenoise, k)?;
                    augmented.push(new_shard);
                }
                let eval = EvalSpec {
                    test: &data.test,
                    skewed_class,
                };
                let (_, trace) = run_federated(&augmented, &rcfg.fed, &un.model, Some(eval))?;
                let last = trace.last().expect("recovery rounds");
                runs.push(KsweepRun {
                    k,
                    alpha,
                    seed,
                    skewed_acc: last.skewed_class_accuracy,
                    balanced_acc: last.balanced_accuracy,
                });
            }
        }
    }

    let mut cells = Vec::new();
    for &alpha in &cfg.partition.alphas {
        for &k in &cfg.sweep.k_values {
            let skewed: Vec<f64> = runs
                .iter()
                .filter(|r| r.alpha == alpha && r.k == k)
                .map(|r| r.skewed_acc)
                .collect();
            let balanced: Vec<f64> = runs
                .iter()
                .filter(|r| r.alpha == alpha && r.k == k)
                .map(|r| r.balanced_acc)
                .collect();
            let (skewed_mean, _) = mean_std(&skewed);
            let (balanced_mean, _) = mean_std(&balanced);
            cells.push(KsweepCell {
                k,
                alpha,
                skewed_mean,
                balanced_mean,
                seeds: skewed.len(),
            });
        }
    }

    let run_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt_sig(r.alpha),
                r.seed.to_string(),
                fmt_sig(r.skewed_acc),
                fmt_sig(r.balanced_acc),
            ]
        })
        .collect();
    atomic_write(
        &out_dir.join("ksweep_runs.csv"),
        table_csv("k,alpha,seed,skewed_acc,balanced_acc", &run_rows).as_bytes(),
    )?;
    let cell_rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.k.to_string(),
                fmt_sig(c.alpha),
                fmt_sig(c.skewed_mean),
                fmt_sig(c.balanced_mean),
                c.seeds.to_string(),
            ]
        })
        .collect();
    atomic_write(
        &out_dir.join("ksweep_summary.csv"),
        table_csv("k,alpha,skewed_mean,balanced_mean,seeds", &cell_rows).as_bytes(),
    )?;

    Ok(KsweepResult { runs, cells })
}
