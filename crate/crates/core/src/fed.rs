//! Federated orchestration: local training episodes, data-size-weighted
//! model averaging, the global training loop, and evaluation metrics.
//!
//! Client seeds are derived from `(cfg.seed, client_id, round)`, so training
//! the clients of one round in parallel or sequentially produces
//! bit-identical models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{
    loss_and_grad, predict, sgd_step_in_place, LossKind, ModelParams, OptimizerState, Targets,
};
use crate::seed::{derive_seed, rng_from};
use rand::seq::SliceRandom;

/// Evaluation batching, fixed so metric computation is reproducible.
pub const EVAL_BATCH: usize = 128;

/// Hyperparameters for one federated training phase.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FedRoundConfig {
    /// Local epochs per upload (`T`).
    pub local_rounds: usize,
    /// Server aggregation rounds (`τ`).
    pub global_rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl FedRoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_rounds == 0 || self.global_rounds == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "local_rounds, global_rounds, and batch_size must all be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Classification quality on a test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Recall per class; `NaN` for classes absent from the test set.
    pub per_class_accuracy: Vec<f64>,
    /// Mean of the per-class recalls over classes present in the test set.
    pub balanced_accuracy: f64,
    pub skewed_class_accuracy: f64,
    pub overall_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// What to measure after each aggregation round.
#[derive(Debug, Clone, Copy)]
pub struct EvalSpec<'a> {
    pub test: &'a LabeledDataset,
    pub skewed_class: usize,
}

/// Trains `model` on one client's shard for `cfg.local_rounds` epochs of
/// seeded mini-batch SGD. The input model is left untouched.
pub fn local_train(
    model: &ModelParams,
    shard: &ClientShard,
    cfg: &FedRoundConfig,
    client_seed: u64,
) -> Result<ModelParams> {
    cfg.validate()?;
    if shard.is_empty() {
        return Err(Error::Validation(format!(
            "client {} has no local data",
            shard.client_id
        )));
    }
    let mut model = model.clone();
    let mut opt = OptimizerState::new(&model, cfg.learning_rate, cfg.momentum)?;
    let mut rng = rng_from(client_seed);
    let n = shard.len();
    let mut order: Vec<usize> = (0..n).collect();

    for _epoch in 0..cfg.local_rounds {
        order.shuffle(&mut rng);
        for batch_rows in order.chunks(cfg.batch_size) {
            let batch = shard.data.features().select(ndarray::Axis(0), batch_rows);
            let labels: Vec<usize> = batch_rows.iter().map(|&r| shard.data.labels()[r]).collect();
            let rng_opt = if model.dropout_rate() > 0.0 {
                Some(&mut rng)
            } else {
                None
            };
            let (_, grads) = loss_and_grad(
                &model,
                batch.view(),
                Targets::Classes(&labels),
                LossKind::CrossEntropy,
                true,
                rng_opt,
            )
            .map_err(|e| tag_client(e, shard.client_id))?;
            sgd_step_in_place(&mut model, &grads, &mut opt)?;
        }
    }
    Ok(model)
}

fn tag_client(err: Error, client_id: usize) -> Error {
    match err {
        Error::Numeric { context, batch_index } => Error::Numeric {
            context: format!("client {client_id}: {context}"),
            batch_index,
        },
        other => other,
    }
}

/// Data-size-weighted element-wise model average:
/// `Ω = Σ_i (N_i / Σ_j N_j) · ω_i`.
pub fn aggregate(models: &[ModelParams], data_sizes: &[usize]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::Aggregation("no models to aggregate".into()));
    }
    if models.len() != data_sizes.len() {
        return Err(Error::Aggregation(format!(
            "{} models but {} sizes",
            models.len(),
            data_sizes.len()
        )));
    }
    if data_sizes.contains(&0) {
        return Err(Error::Aggregation("every data size must be positive".into()));
    }
    for m in &models[1..] {
        if !models[0].same_spec(m) {
            return Err(Error::Aggregation("models have mismatched layer specs".into()));
        }
    }
    let total: f64 = data_sizes.iter().map(|&n| n as f64).sum();
    let mut result = models[0].scale(data_sizes[0] as f64 / total);
    for (model, &size) in models.iter().zip(data_sizes).skip(1) {
        result.add_scaled_in_place(model, size as f64 / total)?;
    }
    Ok(result)
}

/// Runs `cfg.global_rounds` rounds of broadcast → local training on every
/// shard → size-weighted aggregation, starting from `init`.
///
/// Returns the final global model and, when `eval` is given, one
/// [`EvalReport`] per round.
pub fn run_federated(
    shards: &[ClientShard],
    cfg: &FedRoundConfig,
    init: &ModelParams,
    eval: Option<EvalSpec<'_>>,
) -> Result<(ModelParams, Vec<EvalReport>)> {
    cfg.validate()?;
    if shards.is_empty() {
        return Err(Error::Validation("run_federated needs at least one shard".into()));
    }
    let sizes: Vec<usize> = shards.iter().map(ClientShard::len).collect();
    let mut global = init.clone();
    let mut trace = Vec::new();

    for round in 0..cfg.global_rounds {
        let locals: Vec<Result<ModelParams>> = shards
            .par_iter()
            .map(|shard| {
                let client_seed = derive_seed(cfg.seed, &[shard.client_id as u64, round as u64]);
                local_train(&global, shard, cfg, client_seed)
            })
            .collect();
        let mut models = Vec::with_capacity(locals.len());
        for result in locals {
            models.push(result.map_err(|e| round_context(e, round))?);
        }
        global = aggregate(&models, &sizes)?;
        if let Some(spec) = eval {
            trace.push(evaluate(&global, spec.test, spec.skewed_class)?);
        }
    }
    Ok((global, trace))
}

fn round_context(err: Error, round: usize) -> Error {
    match err {
        Error::Numeric { context, batch_index } => Error::Numeric {
            context: format!("round {round}: {context}"),
            batch_index,
        },
        other => other,
    }
}

/// Confusion matrix and accuracy summary of `model` on `test`.
///
/// Classes absent from the test set get `NaN` recall and are excluded from
/// the balanced-accuracy mean.
pub fn evaluate(model: &ModelParams, test: &LabeledDataset, skewed_class: usize) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Validation("cannot evaluate on an empty test set".into()));
    }
    let classes = test.class_count();
    if model.output_dim() != classes {
        return Err(Error::shape(
            "evaluate",
            format!("model output dim {}", classes),
            format!("{}", model.output_dim()),
        ));
    }
    if skewed_class >= classes {
        return Err(Error::Validation(format!(
            "skewed_class {skewed_class} exceeds class count {classes}"
        )));
    }

    let mut confusion = vec![vec![0usize; classes]; classes];
    let rows: Vec<usize> = (0..test.len()).collect();
    for chunk in rows.chunks(EVAL_BATCH) {
        let batch = test.features().select(ndarray::Axis(0), chunk);
        let preds = predict(model, batch.view())?;
        for (&row, pred) in chunk.iter().zip(preds) {
            confusion[test.labels()[row]][pred] += 1;
        }
    }

    let mut per_class = vec![f64::NAN; classes];
    let mut present = 0usize;
    let mut recall_sum = 0.0;
    let mut diagonal = 0usize;
    for (class, row) in confusion.iter().enumerate() {
        let row_total: usize = row.iter().sum();
        diagonal += row[class];
        if row_total > 0 {
            let recall = row[class] as f64 / row_total as f64;
            per_class[class] = recall;
            recall_sum += recall;
            present += 1;
        }
    }
    let balanced = recall_sum / present as f64;
    let skewed = per_class[skewed_class];

    Ok(EvalReport {
        per_class_accuracy: per_class,
        balanced_accuracy: balanced,
        skewed_class_accuracy: skewed,
        overall_accuracy: diagonal as f64 / test.len() as f64,
        confusion,
    })
}
