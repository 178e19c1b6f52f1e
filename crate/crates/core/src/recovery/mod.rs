//! Recovery of the unlearned model from the remaining clients only.
//!
//! Per client: train an autoencoder on the complete local data, oversample
//! the skewed class in latent space to twice the shortfall, denoise the
//! generated samples by density factor down to the shortfall, merge them in,
//! then run federated fine-tuning of the unlearned model on the rebalanced
//! shards, aggregation weighted by the denoised dataset sizes.
//!
//! The per-client shortfall (`target_count`) is the ceiled mean count of the
//! client's non-skewed classes minus its current skewed-class count,
//! floored at zero.

pub mod autoencoder;
pub mod density;
pub mod smote;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::fed::{run_federated, EvalReport, EvalSpec, FedRoundConfig};
use crate::nn::ModelParams;
use crate::seed::derive_seed;

pub use autoencoder::{
    mean_squared_error, recon_loss, reverse_recon_loss, train_autoencoder, AeTrainReport,
    AutoencoderPair,
};
pub use density::{denoise, density, density_factor, DensityEntry, DensityReport};
pub use smote::{interpolate_latents, latent_smote, GeneratedBatch, SmoteDraw};

/// Settings for the whole recovery stage.
///
/// The balance rule is fixed: each client tops its skewed class up to the
/// ceiled mean of its majority-class counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub latent_dim: usize,
    pub ae_hidden_dim: usize,
    pub ae_epochs: usize,
    /// Latent neighbors considered per oversampling draw.
    pub smote_k: usize,
    /// Neighbors used by the density factor during denoising.
    pub denoise_k: usize,
    /// Ratio of generated to needed samples before denoising (2 = generate
    /// twice as many as needed).
    pub oversample_factor: f64,
    /// Federated fine-tuning settings (τ, T, batch, lr, momentum, seed).
    pub fed: FedRoundConfig,
    pub seed: u64,
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.ae_hidden_dim == 0 || self.ae_epochs == 0 {
            return Err(Error::Validation(
                "latent_dim, ae_hidden_dim, and ae_epochs must all be ≥ 1".into(),
            ));
        }
        if self.smote_k == 0 || self.denoise_k == 0 {
            return Err(Error::Validation("smote_k and denoise_k must be ≥ 1".into()));
        }
        if self.oversample_factor < 1.0 || !self.oversample_factor.is_finite() {
            return Err(Error::Validation(format!(
                "oversample_factor must be ≥ 1, got {}",
                self.oversample_factor
            )));
        }
        self.fed.validate()
    }
}

/// Which stages of the recovery pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryVariant {
    /// Federated fine-tuning on the raw shards; no oversampling.
    PlainFinetune,
    /// Latent oversampling, keeping the first `target_count` generated
    /// samples unfiltered.
    Smote,
    /// Latent oversampling followed by density-factor denoising — the full
    /// method.
    SmoteDenoise,
}

impl RecoveryVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryVariant::PlainFinetune => "plain_finetune",
            RecoveryVariant::Smote => "smote",
            RecoveryVariant::SmoteDenoise => "smote_denoise",
        }
    }
}

impl std::str::FromStr for RecoveryVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain_finetune" => Ok(RecoveryVariant::PlainFinetune),
            "smote" => Ok(RecoveryVariant::Smote),
            "smote_denoise" => Ok(RecoveryVariant::SmoteDenoise),
            other => Err(Error::Validation(format!(
                "unknown recovery variant '{other}' (expected plain_finetune, smote, or smote_denoise)"
            ))),
        }
    }
}

/// Per-client oversampling artifacts, reusable across the smote variants.
#[derive(Debug, Clone)]
pub struct ShardAugmentation {
    pub client_id: usize,
    pub skewed_class: usize,
    pub original_skewed_count: usize,
    pub target_count: usize,
    /// The generated batch (`G = ⌈factor · target⌉` rows) when oversampling
    /// ran for this client.
    pub batch: Option<GeneratedBatch>,
    pub ae_report: Option<AeTrainReport>,
    /// Why oversampling was skipped, when it was.
    pub skipped_reason: Option<String>,
}

/// Replayable audit record of one client's augmentation decisions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationManifest {
    pub client_id: usize,
    pub skewed_class: usize,
    pub original_skewed_count: usize,
    pub target_count: usize,
    /// Number of generated samples before any filtering.
    pub generated_count: usize,
    /// Median density factor used as the removal threshold (denoise variant).
    pub median_factor: Option<f64>,
    /// Generated-sample indices merged into the shard, ascending.
    pub kept_ids: Vec<usize>,
    /// Generated-sample indices removed by denoising, ascending.
    pub removed_ids: Vec<usize>,
    /// Density factor of every generated sample, by generated index.
    pub density_factors: Vec<f64>,
    pub ae_initial_recon: Option<f64>,
    pub ae_final_recon: Option<f64>,
    pub skipped_reason: Option<String>,
}

/// Everything recovery produces.
#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub model: ModelParams,
    /// Per-round evaluation, when an [`EvalSpec`] was supplied.
    pub trace: Vec<EvalReport>,
    /// The shards fine-tuning actually ran on (generated rows flagged).
    pub shards: Vec<ClientShard>,
    pub manifests: Vec<AugmentationManifest>,
}

const SMOTE_SEED_TAG: u64 = 0x50;

/// Ceiled mean count over the client's non-skewed classes, minus its current
/// skewed count, floored at zero.
pub fn target_count(shard: &ClientShard, skewed_class: usize) -> usize {
    let counts = shard.data.class_counts();
    let majority: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != skewed_class)
        .map(|(_, &n)| n)
        .collect();
    if majority.is_empty() {
        return 0;
    }
    let mean = majority.iter().sum::<usize>() as f64 / majority.len() as f64;
    let balanced = mean.ceil() as usize;
    balanced.saturating_sub(counts[skewed_class])
}

/// Trains the client's autoencoder and generates the oversampling batch.
///
/// Clients that need no samples (`target_count == 0`) or cannot support the
/// latent neighbor search (fewer than `smote_k + 1` skewed samples) skip
/// oversampling with a logged reason and participate with raw data.
pub fn prepare_augmentation(
    shard: &ClientShard,
    skewed_class: usize,
    cfg: &RecoveryConfig,
) -> Result<ShardAugmentation> {
    cfg.validate()?;
    let original_skewed_count = shard.class_count_of(skewed_class);
    let target = target_count(shard, skewed_class);

    let mut skipped_reason = None;
    if target == 0 {
        skipped_reason = Some("shard already balanced (target_count = 0)".to_string());
    } else if original_skewed_count == 0 {
        skipped_reason = Some("no skewed-class samples on this client".to_string());
    } else if original_skewed_count < cfg.smote_k + 1 {
        skipped_reason = Some(format!(
            "{original_skewed_count} skewed-class samples cannot support smote_k = {}",
            cfg.smote_k
        ));
    }
    if let Some(reason) = &skipped_reason {
        if original_skewed_count < cfg.smote_k + 1 && target > 0 {
            log::warn!("client {}: skipping oversampling: {reason}", shard.client_id);
        }
        return Ok(ShardAugmentation {
            client_id: shard.client_id,
            skewed_class,
            original_skewed_count,
            target_count: target,
            batch: None,
            ae_report: None,
            skipped_reason,
        });
    }

    let (pair, ae_report) = train_autoencoder(shard, cfg)?;
    let skew_rows = shard.data.indices_of_class(skewed_class);
    let skew_samples = shard.data.features().select(Axis(0), &skew_rows);
    let g = (cfg.oversample_factor * target as f64).ceil() as usize;
    let smote_seed = derive_seed(cfg.seed, &[SMOTE_SEED_TAG, shard.client_id as u64]);
    let batch = latent_smote(&pair, skew_samples.view(), g, cfg.smote_k, smote_seed)
        .map_err(|e| match e {
            Error::Validation(msg) => {
                Error::Validation(format!("client {}: {msg}", shard.client_id))
            }
            other => other,
        })?;

    Ok(ShardAugmentation {
        client_id: shard.client_id,
        skewed_class,
        original_skewed_count,
        target_count: target,
        batch: Some(batch),
        ae_report: Some(ae_report),
        skipped_reason: None,
    })
}

/// Merges the variant's selection of generated samples into the shard and
/// writes the audit manifest.
pub fn apply_variant(
    shard: &ClientShard,
    aug: &ShardAugmentation,
    variant: RecoveryVariant,
    denoise_k: usize,
) -> Result<(ClientShard, AugmentationManifest)> {
    let mut manifest = AugmentationManifest {
        client_id: aug.client_id,
        skewed_class: aug.skewed_class,
        original_skewed_count: aug.original_skewed_count,
        target_count: aug.target_count,
        generated_count: aug.batch.as_ref().map_or(0, GeneratedBatch::len),
        median_factor: None,
        kept_ids: Vec::new(),
        removed_ids: Vec::new(),
        density_factors: Vec::new(),
        ae_initial_recon: aug.ae_report.as_ref().map(|r| r.initial_recon),
        ae_final_recon: aug.ae_report.as_ref().map(|r| r.final_recon),
        skipped_reason: aug.skipped_reason.clone(),
    };

    let batch = match (&aug.batch, variant) {
        (_, RecoveryVariant::PlainFinetune) | (None, _) => {
            return Ok((shard.clone(), manifest));
        }
        (Some(batch), _) => batch,
    };

    let kept = match variant {
        RecoveryVariant::Smote => {
            // Unfiltered: the first target_count generated samples.
            manifest.kept_ids = (0..aug.target_count).collect();
            manifest.removed_ids = (aug.target_count..batch.len()).collect();
            batch
                .samples
                .slice(ndarray::s![..aug.target_count, ..])
                .to_owned()
        }
        RecoveryVariant::SmoteDenoise => {
            let skew_rows = shard.data.indices_of_class(aug.skewed_class);
            let originals = shard.data.features().select(Axis(0), &skew_rows);
            let (kept, report) = denoise(batch, originals.view(), denoise_k, aug.target_count)?;
            manifest.median_factor = Some(report.median_factor);
            manifest.density_factors = report.entries.iter().map(|e| e.psi).collect();
            manifest.kept_ids = report
                .entries
                .iter()
                .filter(|e| !e.removed)
                .map(|e| e.generated_index)
                .collect();
            manifest.removed_ids = report
                .entries
                .iter()
                .filter(|e| e.removed)
                .map(|e| e.generated_index)
                .collect();
            kept
        }
        RecoveryVariant::PlainFinetune => unreachable!("handled above"),
    };

    let mut data = shard.data.clone();
    data.append_rows(&kept, aug.skewed_class)?;
    let mut generated_mask = shard.generated_mask.clone();
    generated_mask.extend(std::iter::repeat_n(true, kept.nrows()));
    let augmented = ClientShard {
        client_id: shard.client_id,
        data,
        generated_mask,
    };
    Ok((augmented, manifest))
}

/// Full recovery: per-client augmentation (parallel) followed by federated
/// fine-tuning of `unlearned` on the rebalanced shards.
///
/// `shards` must contain only the remaining clients; the unlearning client's
/// data never enters this function.
pub fn recover(
    unlearned: &ModelParams,
    shards: &[ClientShard],
    cfg: &RecoveryConfig,
    variant: RecoveryVariant,
    eval: Option<EvalSpec<'_>>,
) -> Result<RecoveryOutcome> {
    cfg.validate()?;
    if shards.is_empty() {
        return Err(Error::Validation("recovery needs at least one remaining client".into()));
    }
    let skewed_class = eval
        .map(|spec| spec.skewed_class)
        .ok_or_else(|| Error::Validation("recovery requires an EvalSpec naming the skewed class".into()))?;

    let (augmented, manifests) = augment_shards(shards, skewed_class, cfg, variant)?;
    let (model, trace) = run_federated(&augmented, &cfg.fed, unlearned, eval)?;
    Ok(RecoveryOutcome {
        model,
        trace,
        shards: augmented,
        manifests,
    })
}

/// The augmentation half of [`recover`], split out so callers comparing
/// variants can reuse prepared artifacts.
pub fn augment_shards(
    shards: &[ClientShard],
    skewed_class: usize,
    cfg: &RecoveryConfig,
    variant: RecoveryVariant,
) -> Result<(Vec<ClientShard>, Vec<AugmentationManifest>)> {
    if variant == RecoveryVariant::PlainFinetune {
        let manifests = shards
            .iter()
            .map(|s| AugmentationManifest {
                client_id: s.client_id,
                skewed_class,
                original_skewed_count: s.class_count_of(skewed_class),
                target_count: target_count(s, skewed_class),
                generated_count: 0,
                median_factor: None,
                kept_ids: Vec::new(),
                removed_ids: Vec::new(),
                density_factors: Vec::new(),
                ae_initial_recon: None,
                ae_final_recon: None,
                skipped_reason: Some("plain fine-tuning variant".to_string()),
            })
            .collect();
        return Ok((shards.to_vec(), manifests));
    }

    let prepared: Vec<Result<ShardAugmentation>> = shards
        .par_iter()
        .map(|shard| prepare_augmentation(shard, skewed_class, cfg))
        .collect();
    let mut augmented = Vec::with_capacity(shards.len());
    let mut manifests = Vec::with_capacity(shards.len());
    for (shard, prep) in shards.iter().zip(prepared) {
        let aug = prep?;
        let (new_shard, manifest) = apply_variant(shard, &aug, variant, cfg.denoise_k)?;
        augmented.push(new_shard);
        manifests.push(manifest);
    }
    if manifests.iter().all(|m| m.kept_ids.is_empty()) {
        log::warn!("every client skipped oversampling; recovery degenerates to plain fine-tuning");
    }
    Ok((augmented, manifests))
}
