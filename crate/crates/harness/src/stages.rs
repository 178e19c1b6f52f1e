//! Pipeline stages: dataset resolution, pre-training, unlearning, and
//! recovery, each returning its artifacts and wall time.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};

use frs_core::data::{
    gen_multimodal, load_idx, partition_with_manifest, stratified_split, ClientShard,
    LabeledDataset, PartitionManifest, UNLEARNING_CLIENT,
};
use frs_core::fed::{evaluate, run_federated, EvalReport, EvalSpec};
use frs_core::nn::{mlp_classifier_spec, ModelParams};
use frs_core::recovery::{
    apply_variant, prepare_augmentation, AugmentationManifest, RecoveryConfig, RecoveryOutcome,
    RecoveryVariant, ShardAugmentation,
};
use frs_core::seed::rng_from;
use frs_core::unlearn::{gradient_ascent_unlearn, UnlearnTrace};

use crate::config::{DatasetConfig, ExperimentConfig, SeedPlan};

/// Train/test pair plus the files that back it (for content hashing).
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub input_files: Vec<PathBuf>,
}

/// Loads or generates the configured dataset.
pub fn load_dataset(cfg: &ExperimentConfig, plan: &SeedPlan) -> Result<PreparedData> {
    match &cfg.dataset {
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)
                .with_context(|| format!("loading {}", train_images.display()))?;
            let test = load_idx(test_images, test_labels)
                .with_context(|| format!("loading {}", test_images.display()))?;
            if train.class_count() != test.class_count() || train.dim() != test.dim() {
                // Class-count inference can differ when a split misses the
                // top class; reconcile to the larger count.
                let classes = train.class_count().max(test.class_count());
                let train = LabeledDataset::new(
                    train.features().clone(),
                    train.labels().to_vec(),
                    classes,
                )?;
                let test = LabeledDataset::new(
                    test.features().clone(),
                    test.labels().to_vec(),
                    classes,
                )?;
                if train.dim() != test.dim() {
                    return Err(anyhow!(
                        "train dim {} does not match test dim {}",
                        train.dim(),
                        test.dim()
                    ));
                }
                return Ok(PreparedData {
                    train,
                    test,
                    input_files: vec![
                        train_images.clone(),
                        train_labels.clone(),
                        test_images.clone(),
                        test_labels.clone(),
                    ],
                });
            }
            Ok(PreparedData {
                train,
                test,
                input_files: vec![
                    train_images.clone(),
                    train_labels.clone(),
                    test_images.clone(),
                    test_labels.clone(),
                ],
            })
        }
        DatasetConfig::Synthetic {
            class_count,
            per_class,
            dim,
            cluster_std,
            modes_per_class,
            test_fraction,
        } => {
            let full = gen_multimodal(
                *class_count,
                *per_class,
                *modes_per_class,
                *dim,
                *cluster_std,
                plan.data,
            )?;
            let (train, test) = stratified_split(&full, *test_fraction, plan.split)?;
            Ok(PreparedData {
                train,
                test,
                input_files: Vec::new(),
            })
        }
    }
}

/// Everything the pre-training stage produces.
pub struct PretrainStage {
    pub shards: Vec<ClientShard>,
    pub partition_manifest: PartitionManifest,
    pub global: ModelParams,
    pub rounds: Vec<EvalReport>,
    pub final_eval: EvalReport,
    pub wall_ms: u64,
}

/// Partitions the training data and federates all clients from a fresh
/// seeded model.
pub fn pretrain(
    cfg: &ExperimentConfig,
    plan: &SeedPlan,
    data: &PreparedData,
    alpha: f64,
    skewed_class: usize,
) -> Result<PretrainStage> {
    let start = Instant::now();
    let spec = cfg.partition_spec(alpha, skewed_class, plan);
    let (shards, partition_manifest) = partition_with_manifest(&data.train, &spec)?;

    let specs = mlp_classifier_spec(
        data.train.dim(),
        cfg.model.hidden_dim,
        data.train.class_count(),
    );
    let init = ModelParams::init(&specs, cfg.model.dropout, &mut rng_from(plan.model_init))?;
    let eval = EvalSpec {
        test: &data.test,
        skewed_class,
    };
    let (global, rounds) = run_federated(&shards, &cfg.pretrain_fed(plan), &init, Some(eval))?;
    let final_eval = rounds
        .last()
        .cloned()
        .ok_or_else(|| anyhow!("pre-training produced no rounds"))?;
    Ok(PretrainStage {
        shards,
        partition_manifest,
        global,
        rounds,
        final_eval,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

pub struct UnlearnStage {
    pub model: ModelParams,
    pub trace: UnlearnTrace,
    pub eval: EvalReport,
    pub wall_ms: u64,
}

/// Runs projected gradient ascent on the unlearning client's shard.
pub fn unlearn(
    cfg: &ExperimentConfig,
    plan: &SeedPlan,
    pre: &PretrainStage,
    test: &LabeledDataset,
    skewed_class: usize,
) -> Result<UnlearnStage> {
    let start = Instant::now();
    let ucfg = cfg.unlearn_config(pre.global.l2_norm(), plan);
    let (model, trace) = gradient_ascent_unlearn(&pre.global, &pre.shards[UNLEARNING_CLIENT], &ucfg)?;
    let eval = evaluate(&model, test, skewed_class)?;
    Ok(UnlearnStage {
        model,
        trace,
        eval,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

pub struct RecoveryStage {
    pub outcome: RecoveryOutcome,
    pub final_eval: EvalReport,
    pub wall_ms: u64,
}

/// Recovers with one variant using only the remaining clients.
pub fn recover_stage(
    cfg: &ExperimentConfig,
    plan: &SeedPlan,
    unlearned: &ModelParams,
    shards: &[ClientShard],
    test: &LabeledDataset,
    skewed_class: usize,
    variant: RecoveryVariant,
) -> Result<RecoveryStage> {
    let start = Instant::now();
    let rcfg = cfg.recovery_config(plan);
    let eval = EvalSpec { test, skewed_class };
    let remaining = &shards[1..];
    let outcome = frs_core::recovery::recover(unlearned, remaining, &rcfg, variant, Some(eval))?;
    let final_eval = outcome
        .trace
        .last()
        .cloned()
        .ok_or_else(|| anyhow!("recovery produced no rounds"))?;
    Ok(RecoveryStage {
        outcome,
        final_eval,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Runs several recovery variants against one unlearned model, training each
/// client's autoencoder and generated batch once and reusing them for every
/// oversampling variant. Bit-identical to calling
/// [`frs_core::recovery::recover`] per variant.
pub fn recover_variants(
    cfg: &ExperimentConfig,
    plan: &SeedPlan,
    unlearned: &ModelParams,
    shards: &[ClientShard],
    test: &LabeledDataset,
    skewed_class: usize,
    variants: &[RecoveryVariant],
) -> Result<Vec<(RecoveryVariant, RecoveryStage)>> {
    let rcfg = cfg.recovery_config(plan);
    let remaining = &shards[1..];
    let needs_prep = variants
        .iter()
        .any(|v| *v != RecoveryVariant::PlainFinetune);
    let prepared: Option<Vec<ShardAugmentation>> = if needs_prep {
        use rayon::prelude::*;
        let prepared: Vec<frs_core::Result<ShardAugmentation>> = remaining
            .par_iter()
            .map(|shard| prepare_augmentation(shard, skewed_class, &rcfg))
            .collect();
        Some(prepared.into_iter().collect::<frs_core::Result<Vec<_>>>()?)
    } else {
        None
    };

    let mut results = Vec::with_capacity(variants.len());
    for &variant in variants {
        let start = Instant::now();
        let outcome = run_one_variant(&rcfg, unlearned, remaining, test, skewed_class, variant, prepared.as_deref())?;
        let final_eval = outcome
            .trace
            .last()
            .cloned()
            .ok_or_else(|| anyhow!("recovery produced no rounds"))?;
        results.push((
            variant,
            RecoveryStage {
                outcome,
                final_eval,
                wall_ms: start.elapsed().as_millis() as u64,
            },
        ));
    }
    Ok(results)
}

fn run_one_variant(
    rcfg: &RecoveryConfig,
    unlearned: &ModelParams,
    remaining: &[ClientShard],
    test: &LabeledDataset,
    skewed_class: usize,
    variant: RecoveryVariant,
    prepared: Option<&[ShardAugmentation]>,
) -> Result<RecoveryOutcome> {
    let eval = EvalSpec { test, skewed_class };
    if variant == RecoveryVariant::PlainFinetune || prepared.is_none() {
        return Ok(frs_core::recovery::recover(
            unlearned,
            remaining,
            rcfg,
            variant,
            Some(eval),
        )?);
    }
    let prepared = prepared.unwrap();
    let mut augmented = Vec::with_capacity(remaining.len());
    let mut manifests: Vec<AugmentationManifest> = Vec::with_capacity(remaining.len());
    for (shard, aug) in remaining.iter().zip(prepared) {
        let (new_shard, manifest) = apply_variant(shard, aug, variant, rcfg.denoise_k)?;
        augmented.push(new_shard);
        manifests.push(manifest);
    }
    let (model, trace) = run_federated(&augmented, &rcfg.fed, unlearned, Some(eval))?;
    Ok(RecoveryOutcome {
        model,
        trace,
        shards: augmented,
        manifests,
    })
}
