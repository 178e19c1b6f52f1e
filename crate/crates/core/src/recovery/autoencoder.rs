//! Per-client encoder/decoder training.
//!
//! The pair is trained jointly as one stacked MLP
//! `d → hidden → latent → hidden → d` minimizing `L = L1 + L2` per step:
//!
//! - `L1` — reconstruction error of a mini-batch against itself.
//! - `L2` — reverse-order reconstruction: an ordered chunk of samples from
//!   one class (re-drawn each epoch) is encoded, the latent codes are fed to
//!   the decoder in reverse order, and output `q` is compared against sample
//!   `p − q + 1`. With a chunk of one sample this reduces exactly to `L1` on
//!   that sample.
//!
//! Per epoch, the selected class's shuffled sequence is consumed once, chunk
//! by chunk; each chunk's gradient is added to the step of the corresponding
//! reconstruction batch.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::nn::{
    forward, loss_and_grad, sgd_step_in_place, Activation, LayerSpec, LossKind, ModelParams,
    OptimizerState, Targets,
};
use crate::recovery::RecoveryConfig;
use crate::seed::{derive_seed, rng_from};
use rand::seq::SliceRandom;
use rand::Rng;

/// Encoder (`d → latent`) and decoder (`latent → d`) halves.
#[derive(Debug, Clone)]
pub struct AutoencoderPair {
    pub encoder: ModelParams,
    pub decoder: ModelParams,
    pub latent_dim: usize,
}

impl AutoencoderPair {
    /// Splits a stacked `d → hidden → latent → hidden → d` model into halves.
    fn from_stacked(stacked: &ModelParams, latent_dim: usize) -> Result<Self> {
        let specs = stacked.specs();
        let layers = stacked.layers();
        if specs.len() != 4 {
            return Err(Error::Validation(format!(
                "stacked autoencoder must have 4 layers, got {}",
                specs.len()
            )));
        }
        let encoder = ModelParams::from_layers(specs[..2].to_vec(), layers[..2].to_vec(), 0.0)?;
        let decoder = ModelParams::from_layers(specs[2..].to_vec(), layers[2..].to_vec(), 0.0)?;
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Maps data rows to latent rows (inference mode).
    pub fn encode(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(&self.encoder, batch, false, None)
    }

    /// Maps latent rows back to data rows (inference mode).
    pub fn decode(&self, latents: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(&self.decoder, latents, false, None)
    }

    /// `decode(encode(batch))`.
    pub fn reconstruct(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let latents = self.encode(batch)?;
        self.decode(latents.view())
    }
}

/// Element-mean squared error between two equally shaped matrices.
pub fn mean_squared_error(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            "mean_squared_error",
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(total / a.len() as f64)
}

/// Forward reconstruction loss of the pair on `data`.
pub fn recon_loss(pair: &AutoencoderPair, data: ArrayView2<'_, f64>) -> Result<f64> {
    let recon = pair.reconstruct(data)?;
    mean_squared_error(recon.view(), data)
}

/// Reverse-order reconstruction loss on an ordered sequence: output `q` is
/// compared against sample `p − q + 1`.
pub fn reverse_recon_loss(pair: &AutoencoderPair, sequence: ArrayView2<'_, f64>) -> Result<f64> {
    if sequence.nrows() == 0 {
        return Err(Error::Validation("reverse loss needs a nonempty sequence".into()));
    }
    let recon = pair.reconstruct(sequence)?;
    let reversed = reverse_rows(sequence);
    mean_squared_error(recon.view(), reversed.view())
}

fn reverse_rows(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let rows: Vec<usize> = (0..m.nrows()).rev().collect();
    m.select(Axis(0), &rows)
}

/// What happened during autoencoder training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeTrainReport {
    /// Full-shard reconstruction error of the freshly initialized pair.
    pub initial_recon: f64,
    /// Full-shard reconstruction error after training.
    pub final_recon: f64,
    /// Class selected for the reverse-order term each epoch; `None` when the
    /// class had fewer than two samples and the term was skipped.
    pub l2_class_per_epoch: Vec<Option<usize>>,
    pub epochs: usize,
}

const AE_SEED_TAG: u64 = 0xAE;

/// Trains the encoder/decoder pair on the shard's complete local data.
///
/// Deterministic per `(cfg.seed, shard.client_id)`.
pub fn train_autoencoder(
    shard: &ClientShard,
    cfg: &RecoveryConfig,
) -> Result<(AutoencoderPair, AeTrainReport)> {
    cfg.validate()?;
    if shard.is_empty() {
        return Err(Error::Validation(format!(
            "client {}: cannot train an autoencoder on an empty shard",
            shard.client_id
        )));
    }
    let dim = shard.data.dim();
    if cfg.latent_dim >= dim {
        return Err(Error::Validation(format!(
            "latent_dim {} must be smaller than the data dim {dim}",
            cfg.latent_dim
        )));
    }

    let specs = vec![
        LayerSpec::new(dim, cfg.ae_hidden_dim, Activation::Relu),
        LayerSpec::new(cfg.ae_hidden_dim, cfg.latent_dim, Activation::Identity),
        LayerSpec::new(cfg.latent_dim, cfg.ae_hidden_dim, Activation::Relu),
        LayerSpec::new(cfg.ae_hidden_dim, dim, Activation::Identity),
    ];
    let mut rng = rng_from(derive_seed(cfg.seed, &[AE_SEED_TAG, shard.client_id as u64]));
    let mut stacked = ModelParams::init(&specs, 0.0, &mut rng)?;
    let mut opt = OptimizerState::new(&stacked, cfg.fed.learning_rate, cfg.fed.momentum)?;

    let features = shard.data.features();
    let initial_recon = {
        let pair = AutoencoderPair::from_stacked(&stacked, cfg.latent_dim)?;
        recon_loss(&pair, features.view())?
    };

    let present: Vec<usize> = (0..shard.data.class_count())
        .filter(|&c| shard.class_count_of(c) > 0)
        .collect();
    let n = shard.len();
    let mut order: Vec<usize> = (0..n).collect();
    let batch_size = cfg.fed.batch_size;
    let mut l2_classes = Vec::with_capacity(cfg.ae_epochs);

    for _epoch in 0..cfg.ae_epochs {
        let class = present[rng.gen_range(0..present.len())];
        let mut class_rows = shard.data.indices_of_class(class);
        class_rows.shuffle(&mut rng);
        let use_l2 = class_rows.len() >= 2;
        if !use_l2 {
            log::debug!(
                "client {}: class {class} has {} samples, skipping reverse-order loss this epoch",
                shard.client_id,
                class_rows.len()
            );
        }
        l2_classes.push(use_l2.then_some(class));
        let chunks: Vec<&[usize]> = if use_l2 {
            class_rows.chunks(batch_size).collect()
        } else {
            Vec::new()
        };

        order.shuffle(&mut rng);
        for (t, batch_rows) in order.chunks(batch_size).enumerate() {
            let batch = features.select(Axis(0), batch_rows);
            let (_, mut grads) = loss_and_grad(
                &stacked,
                batch.view(),
                Targets::Values(batch.view()),
                LossKind::Mse,
                true,
                None,
            )?;
            if t < chunks.len() {
                let chunk = features.select(Axis(0), chunks[t]);
                let reversed = reverse_rows(chunk.view());
                let (_, l2_grads) = loss_and_grad(
                    &stacked,
                    chunk.view(),
                    Targets::Values(reversed.view()),
                    LossKind::Mse,
                    true,
                    None,
                )?;
                grads.add_scaled_in_place(&l2_grads, 1.0)?;
            }
            sgd_step_in_place(&mut stacked, &grads, &mut opt)?;
        }
    }

    let pair = AutoencoderPair::from_stacked(&stacked, cfg.latent_dim)?;
    let final_recon = recon_loss(&pair, features.view())?;
    let report = AeTrainReport {
        initial_recon,
        final_recon,
        l2_class_per_epoch: l2_classes,
        epochs: cfg.ae_epochs,
    };
    Ok((pair, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::fed::FedRoundConfig;
    use crate::nn::DenseLayer;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn test_cfg(seed: u64) -> RecoveryConfig {
        RecoveryConfig {
            latent_dim: 3,
            ae_hidden_dim: 16,
            ae_epochs: 40,
            smote_k: 3,
            denoise_k: 3,
            oversample_factor: 2.0,
            fed: FedRoundConfig {
                local_rounds: 2,
                global_rounds: 2,
                batch_size: 16,
                learning_rate: 0.05,
                momentum: 0.5,
                seed,
            },
            seed,
        }
    }

    /// Fixed linear 1-d autoencoder for hand-checking the reverse loss:
    /// encoder y = 2x, decoder y = 0.5x + 0.1.
    fn linear_pair() -> AutoencoderPair {
        let encoder = ModelParams::from_layers(
            vec![LayerSpec::new(1, 1, Activation::Identity)],
            vec![DenseLayer {
                weights: array![[2.0]],
                bias: array![0.0],
            }],
            0.0,
        )
        .unwrap();
        let decoder = ModelParams::from_layers(
            vec![LayerSpec::new(1, 1, Activation::Identity)],
            vec![DenseLayer {
                weights: array![[0.5]],
                bias: array![0.1],
            }],
            0.0,
        )
        .unwrap();
        AutoencoderPair {
            encoder,
            decoder,
            latent_dim: 1,
        }
    }

    #[test]
    fn reverse_loss_on_singleton_equals_forward_loss() {
        let pair = linear_pair();
        for v in [0.0, 0.3, 0.9, -1.2] {
            let seq = array![[v]];
            let l1 = recon_loss(&pair, seq.view()).unwrap();
            let l2 = reverse_recon_loss(&pair, seq.view()).unwrap();
            assert_eq!(l1, l2);
        }
    }

    #[test]
    fn reverse_loss_matches_hand_evaluation_on_two_samples() {
        // d1 = 0.2, d2 = 0.8; reconstruction y = 0.5·(2x) + 0.1 = x + 0.1.
        // y1 = 0.3, y2 = 0.9. Reverse pairing: (y2 − d1)² and (y1 − d2)².
        // L2 = ½ [(0.9 − 0.2)² + (0.3 − 0.8)²] = ½ [0.49 + 0.25] = 0.37.
        let pair = linear_pair();
        let seq = array![[0.2], [0.8]];
        let l2 = reverse_recon_loss(&pair, seq.view()).unwrap();
        assert_abs_diff_eq!(l2, 0.37, epsilon = 1e-12);
    }

    #[test]
    fn two_hundred_epochs_halve_the_reconstruction_error() {
        // 100 samples, 200 epochs: the final error must be under half the
        // initial one (loose by design).
        let data = gen_synthetic(4, 25, 8, 0.1, 77).unwrap();
        let shard = ClientShard::new(2, data);
        let mut cfg = test_cfg(5);
        cfg.ae_epochs = 200;
        let (_, report) = train_autoencoder(&shard, &cfg).unwrap();
        assert_eq!(shard.len(), 100);
        assert!(
            report.final_recon < 0.5 * report.initial_recon,
            "initial {} final {}",
            report.initial_recon,
            report.final_recon
        );
    }

    #[test]
    fn training_is_deterministic_per_seed_and_client() {
        let data = gen_synthetic(2, 20, 6, 0.2, 3).unwrap();
        let shard = ClientShard::new(1, data);
        let mut cfg = test_cfg(9);
        cfg.ae_epochs = 5;
        let (a, ra) = train_autoencoder(&shard, &cfg).unwrap();
        let (b, rb) = train_autoencoder(&shard, &cfg).unwrap();
        assert!(a.encoder.bits_eq(&b.encoder));
        assert!(a.decoder.bits_eq(&b.decoder));
        assert_eq!(ra.l2_class_per_epoch, rb.l2_class_per_epoch);
    }

    #[test]
    fn latent_must_be_smaller_than_data_dim() {
        let data = gen_synthetic(2, 10, 3, 0.2, 3).unwrap();
        let shard = ClientShard::new(0, data);
        let mut cfg = test_cfg(1);
        cfg.latent_dim = 3;
        assert!(train_autoencoder(&shard, &cfg).is_err());
    }

    #[test]
    fn encode_decode_shapes_are_consistent() {
        let data = gen_synthetic(2, 16, 6, 0.2, 4).unwrap();
        let shard = ClientShard::new(0, data);
        let mut cfg = test_cfg(2);
        cfg.ae_epochs = 2;
        let (pair, _) = train_autoencoder(&shard, &cfg).unwrap();
        let latents = pair.encode(shard.data.features().view()).unwrap();
        assert_eq!(latents.dim(), (shard.len(), cfg.latent_dim));
        let recon = pair.decode(latents.view()).unwrap();
        assert_eq!(recon.dim(), (shard.len(), 6));
    }
}
