//! Experiment configuration: one TOML file drives the whole pipeline.
//!
//! Any key can be overridden from the environment with the `FRS_` prefix,
//! sections separated by double underscores and values parsed as TOML:
//! `FRS_PARTITION__ALPHA=0.85`, `FRS_RECOVERY__DENOISE_K=7`,
//! `FRS_MASTER_SEED=9`, `FRS_SEEDS='[1, 2]'`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use frs_core::data::PartitionSpec;
use frs_core::fed::FedRoundConfig;
use frs_core::recovery::{RecoveryConfig, RecoveryVariant};
use frs_core::seed::derive_seed;
use frs_core::unlearn::UnlearnConfig;

pub const CONFIG_VERSION: u32 = 1;
pub const ENV_PREFIX: &str = "FRS_";

/// Full declarative description of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// Seeds for repeated runs in sweeps (means and standard deviations).
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub pretrain: TrainConfig,
    #[serde(default)]
    pub unlearn: UnlearnSection,
    #[serde(default)]
    pub recovery: RecoverySection,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_master_seed() -> u64 {
    1
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

/// Where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX image/label pairs on disk.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// Seeded Gaussian-blob generator (optionally multi-modal classes),
    /// stratified-split into train and test.
    Synthetic {
        class_count: usize,
        per_class: usize,
        dim: usize,
        cluster_std: f64,
        #[serde(default = "default_modes")]
        modes_per_class: usize,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_modes() -> usize {
    1
}
fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub client_count: usize,
    /// Skewed class; omitted means a seed-derived default.
    pub skewed_class: Option<usize>,
    pub alpha: f64,
    /// Sweep axis for `ablation` and `ksweep`.
    pub alphas: Vec<f64>,
}

fn default_alphas() -> Vec<f64> {
    vec![0.8, 0.85, 0.9]
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            client_count: 5,
            skewed_class: None,
            alpha: 0.8,
            alphas: default_alphas(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub rounds: usize,
    pub local_rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            local_rounds: 2,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnlearnSection {
    pub ascent_steps: usize,
    pub ascent_lr: f64,
    /// Ball radius as a fraction of the pre-unlearning model's norm.
    /// Ignored when `radius` is set.
    pub radius_scale: f64,
    /// Absolute ball radius; overrides `radius_scale`.
    pub radius: Option<f64>,
    pub batch_size: usize,
}

impl Default for UnlearnSection {
    fn default() -> Self {
        Self {
            ascent_steps: 50,
            ascent_lr: 0.01,
            radius_scale: 0.005,
            radius: None,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverySection {
    pub latent_dim: usize,
    pub ae_hidden_dim: usize,
    pub ae_epochs: usize,
    pub smote_k: usize,
    pub denoise_k: usize,
    pub oversample_factor: f64,
    /// Global fine-tuning rounds (τ).
    pub rounds: usize,
    /// Local epochs per round (T).
    pub local_rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Variant run by `pipeline`.
    pub variant: String,
    /// Variants run by `ablation`.
    pub variants: Vec<String>,
}

fn default_variants() -> Vec<String> {
    vec![
        "plain_finetune".to_string(),
        "smote".to_string(),
        "smote_denoise".to_string(),
    ]
}

impl Default for RecoverySection {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            ae_hidden_dim: 128,
            ae_epochs: 200,
            smote_k: 5,
            denoise_k: 5,
            oversample_factor: 2.0,
            rounds: 10,
            local_rounds: 2,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.5,
            variant: "smote_denoise".to_string(),
            variants: default_variants(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 3, 5, 10, 15, 25],
        }
    }
}

/// Seed roles derived from the master seed, one per pipeline stage.
#[derive(Debug, Clone, Copy)]
pub struct SeedPlan {
    pub data: u64,
    pub split: u64,
    pub partition: u64,
    pub model_init: u64,
    pub pretrain: u64,
    pub unlearn: u64,
    pub recovery_fed: u64,
    pub recovery_aug: u64,
    pub skewed_class_default: u64,
}

impl SeedPlan {
    pub fn from_master(master: u64) -> Self {
        Self {
            data: derive_seed(master, &[1]),
            split: derive_seed(master, &[2]),
            partition: derive_seed(master, &[3]),
            model_init: derive_seed(master, &[4]),
            pretrain: derive_seed(master, &[5]),
            unlearn: derive_seed(master, &[6]),
            recovery_fed: derive_seed(master, &[7]),
            recovery_aug: derive_seed(master, &[8]),
            skewed_class_default: derive_seed(master, &[9]),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file, applies `FRS_*` environment overrides, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text, std::env::vars())
    }

    /// Parses from TOML text with explicit environment pairs (testable).
    pub fn from_toml_str(
        text: &str,
        env: impl Iterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).context("parsing config TOML")?;
        apply_env_overrides(&mut value, env)?;
        let config: ExperimentConfig = value.try_into().context("interpreting config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!(
                "config version {} not supported (expected {CONFIG_VERSION})",
                self.version
            );
        }
        if self.seeds.is_empty() {
            bail!("seeds list must be nonempty");
        }
        if self.partition.alphas.is_empty() {
            bail!("partition.alphas must be nonempty");
        }
        if self.sweep.k_values.is_empty() {
            bail!("sweep.k_values must be nonempty");
        }
        for &alpha in self.partition.alphas.iter().chain([&self.partition.alpha]) {
            if !(alpha > 0.0 && alpha < 1.0) {
                bail!("alpha {alpha} must lie strictly inside (0, 1)");
            }
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            bail!("model.dropout must be in [0, 1)");
        }
        self.recovery
            .variant
            .parse::<RecoveryVariant>()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        for v in &self.recovery.variants {
            v.parse::<RecoveryVariant>().map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        if let DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } = &self.dataset
        {
            for path in [train_images, train_labels, test_images, test_labels] {
                if !path.exists() {
                    bail!("dataset file {} does not exist", path.display());
                }
            }
        }
        Ok(())
    }

    /// The resolved config as canonical TOML (the echo embedded in reports).
    pub fn echo_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config echo")
    }

    pub fn seed_plan(&self, master_seed: u64) -> SeedPlan {
        SeedPlan::from_master(master_seed)
    }

    /// Skewed class: configured value or the seed-derived default.
    pub fn skewed_class(&self, class_count: usize, plan: &SeedPlan) -> usize {
        self.partition
            .skewed_class
            .unwrap_or((plan.skewed_class_default % class_count as u64) as usize)
    }

    pub fn partition_spec(&self, alpha: f64, skewed_class: usize, plan: &SeedPlan) -> PartitionSpec {
        PartitionSpec {
            client_count: self.partition.client_count,
            skewed_class,
            alpha,
            seed: plan.partition,
        }
    }

    pub fn pretrain_fed(&self, plan: &SeedPlan) -> FedRoundConfig {
        FedRoundConfig {
            local_rounds: self.pretrain.local_rounds,
            global_rounds: self.pretrain.rounds,
            batch_size: self.pretrain.batch_size,
            learning_rate: self.pretrain.learning_rate,
            momentum: self.pretrain.momentum,
            seed: plan.pretrain,
        }
    }

    /// Unlearning config; the radius resolves against the reference model's
    /// norm unless an absolute radius was configured.
    pub fn unlearn_config(&self, reference_norm: f64, plan: &SeedPlan) -> UnlearnConfig {
        let radius = self
            .unlearn
            .radius
            .unwrap_or(self.unlearn.radius_scale * reference_norm);
        UnlearnConfig {
            ascent_steps: self.unlearn.ascent_steps,
            ascent_lr: self.unlearn.ascent_lr,
            radius,
            batch_size: self.unlearn.batch_size,
            seed: plan.unlearn,
        }
    }

    pub fn recovery_config(&self, plan: &SeedPlan) -> RecoveryConfig {
        RecoveryConfig {
            latent_dim: self.recovery.latent_dim,
            ae_hidden_dim: self.recovery.ae_hidden_dim,
            ae_epochs: self.recovery.ae_epochs,
            smote_k: self.recovery.smote_k,
            denoise_k: self.recovery.denoise_k,
            oversample_factor: self.recovery.oversample_factor,
            fed: FedRoundConfig {
                local_rounds: self.recovery.local_rounds,
                global_rounds: self.recovery.rounds,
                batch_size: self.recovery.batch_size,
                learning_rate: self.recovery.learning_rate,
                momentum: self.recovery.momentum,
                seed: plan.recovery_fed,
            },
            seed: plan.recovery_aug,
        }
    }
}

/// Applies `FRS_SECTION__KEY=value` pairs onto the parsed TOML tree.
fn apply_env_overrides(
    value: &mut toml::Value,
    env: impl Iterator<Item = (String, String)>,
) -> Result<()> {
    let mut overrides: Vec<(String, String)> = env
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|part| part.to_lowercase())
            .collect();
        if path.iter().any(String::is_empty) {
            bail!("malformed override variable {key}");
        }
        // Values are TOML; bare strings that fail to parse are taken verbatim.
        let parsed = parse_toml_scalar(&raw);
        let mut cursor = &mut *value;
        for part in &path[..path.len() - 1] {
            cursor = cursor
                .as_table_mut()
                .with_context(|| format!("override {key}: {part} is not a table"))?
                .entry(part.clone())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = cursor
            .as_table_mut()
            .with_context(|| format!("override {key}: parent is not a table"))?;
        table.insert(path[path.len() - 1].clone(), parsed);
    }
    Ok(())
}

/// Parses one override value as a TOML scalar/array; unparseable text is a
/// plain string.
fn parse_toml_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Value>() {
        Ok(toml::Value::Table(mut table)) => table
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        _ => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset]
        kind = "synthetic"
        class_count = 3
        per_class = 30
        dim = 4
        cluster_std = 0.2
    "#;

    fn no_env() -> impl Iterator<Item = (String, String)> {
        std::iter::empty()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, no_env()).unwrap();
        assert_eq!(cfg.master_seed, 1);
        assert_eq!(cfg.partition.client_count, 5);
        assert_eq!(cfg.recovery.ae_epochs, 200);
        assert_eq!(cfg.sweep.k_values, vec![1, 3, 5, 10, 15, 25]);
        assert_eq!(cfg.model.hidden_dim, 128);
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let env = vec![
            ("FRS_PARTITION__ALPHA".to_string(), "0.85".to_string()),
            ("FRS_MASTER_SEED".to_string(), "42".to_string()),
            ("FRS_RECOVERY__DENOISE_K".to_string(), "7".to_string()),
        ];
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, env.into_iter()).unwrap();
        assert_eq!(cfg.partition.alpha, 0.85);
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.recovery.denoise_k, 7);
    }

    #[test]
    fn unrelated_env_vars_are_ignored() {
        let env = vec![("PATH".to_string(), "/usr/bin".to_string())];
        assert!(ExperimentConfig::from_toml_str(MINIMAL, env.into_iter()).is_ok());
    }

    #[test]
    fn missing_idx_files_fail_validation() {
        let text = r#"
            [dataset]
            kind = "idx"
            train_images = "/nonexistent/a"
            train_labels = "/nonexistent/b"
            test_images = "/nonexistent/c"
            test_labels = "/nonexistent/d"
        "#;
        let err = ExperimentConfig::from_toml_str(text, no_env()).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn bad_variant_is_rejected() {
        let env = vec![(
            "FRS_RECOVERY__VARIANT".to_string(),
            "mystery".to_string(),
        )];
        assert!(ExperimentConfig::from_toml_str(MINIMAL, env.into_iter()).is_err());
    }

    #[test]
    fn empty_sweep_lists_are_rejected() {
        let env = vec![("FRS_SWEEP__K_VALUES".to_string(), "[]".to_string())];
        assert!(ExperimentConfig::from_toml_str(MINIMAL, env.into_iter()).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL, no_env()).unwrap();
        let echo = cfg.echo_toml().unwrap();
        let again = ExperimentConfig::from_toml_str(&echo, no_env()).unwrap();
        assert_eq!(cfg.master_seed, again.master_seed);
        assert_eq!(cfg.recovery.variants, again.recovery.variants);
    }
}
