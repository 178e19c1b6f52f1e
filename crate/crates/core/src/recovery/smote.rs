//! Latent-space minority oversampling.
//!
//! Skewed-class samples are encoded, and each synthetic sample is a convex
//! combination `z = z_src + t · (z_nb − z_src)` of a random source latent and
//! one of its `k` nearest latent neighbors (Euclidean, ties by ascending
//! index), decoded back to data space. Every draw is recorded so generation
//! is fully replayable.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recovery::autoencoder::AutoencoderPair;
use crate::seed::rng_from;

/// A fully provenanced batch of generated samples.
#[derive(Debug, Clone)]
pub struct GeneratedBatch {
    /// Decoder outputs, `[G × d]`.
    pub samples: Array2<f64>,
    /// Interpolated latent codes, `[G × latent_dim]`.
    pub latents: Array2<f64>,
    /// Row of the skewed-class input that anchored each draw.
    pub source_index: Vec<usize>,
    /// Row of the chosen latent neighbor.
    pub neighbor_index: Vec<usize>,
    /// Interpolation coefficient in `[0, 1]`.
    pub rand_t: Vec<f64>,
}

impl GeneratedBatch {
    pub fn len(&self) -> usize {
        self.rand_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rand_t.is_empty()
    }
}

/// One interpolation decision: `(source row, neighbor row, t)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoteDraw {
    pub source: usize,
    pub neighbor: usize,
    pub t: f64,
}

/// `k` nearest rows to `row` among `points` (self excluded), ties broken by
/// ascending index.
pub(crate) fn nearest_neighbors(points: ArrayView2<'_, f64>, row: usize, k: usize) -> Vec<usize> {
    let anchor = points.row(row);
    let mut candidates: Vec<(f64, usize)> = (0..points.nrows())
        .filter(|&i| i != row)
        .map(|i| {
            let dist: f64 = points
                .row(i)
                .iter()
                .zip(anchor.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (dist, i)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    candidates.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Oversamples the skewed class: `count` draws of
/// (seeded source, seeded neighbor among the `smote_k` nearest latents,
/// uniform `t`), interpolated in latent space and decoded.
pub fn latent_smote(
    pair: &AutoencoderPair,
    skew_samples: ArrayView2<'_, f64>,
    count: usize,
    smote_k: usize,
    seed: u64,
) -> Result<GeneratedBatch> {
    let n = skew_samples.nrows();
    if smote_k == 0 {
        return Err(Error::Validation("smote_k must be at least 1".into()));
    }
    if n < smote_k + 1 {
        return Err(Error::Validation(format!(
            "latent oversampling needs at least smote_k + 1 = {} skewed samples, got {n}",
            smote_k + 1
        )));
    }
    if count == 0 {
        return Err(Error::Validation("generated count must be at least 1".into()));
    }

    let latents = pair.encode(skew_samples)?;
    let neighbor_lists: Vec<Vec<usize>> = (0..n)
        .map(|i| nearest_neighbors(latents.view(), i, smote_k))
        .collect();

    let mut rng = rng_from(seed);
    let mut draws = Vec::with_capacity(count);
    for _ in 0..count {
        let source = rng.gen_range(0..n);
        let neighbor = neighbor_lists[source][rng.gen_range(0..smote_k)];
        let t: f64 = rng.gen();
        draws.push(SmoteDraw { source, neighbor, t });
    }
    interpolate_latents(pair, skew_samples, &draws)
}

/// Deterministic core of [`latent_smote`]: materializes explicit draws.
///
/// Each latent row is exactly `z_src + t · (z_nb − z_src)` and each sample
/// row exactly the decoder's output for it.
pub fn interpolate_latents(
    pair: &AutoencoderPair,
    skew_samples: ArrayView2<'_, f64>,
    draws: &[SmoteDraw],
) -> Result<GeneratedBatch> {
    let n = skew_samples.nrows();
    let latents = pair.encode(skew_samples)?;
    let latent_dim = latents.ncols();

    let mut generated = Array2::zeros((draws.len(), latent_dim));
    for (g, draw) in draws.iter().enumerate() {
        if draw.source >= n || draw.neighbor >= n {
            return Err(Error::Validation(format!(
                "draw {g} references rows ({}, {}) outside the {n} skewed samples",
                draw.source, draw.neighbor
            )));
        }
        if !(0.0..=1.0).contains(&draw.t) {
            return Err(Error::Validation(format!(
                "draw {g} has interpolation t = {} outside [0, 1]",
                draw.t
            )));
        }
        for j in 0..latent_dim {
            let src = latents[[draw.source, j]];
            let nb = latents[[draw.neighbor, j]];
            generated[[g, j]] = src + draw.t * (nb - src);
        }
    }

    let samples = pair.decode(generated.view())?;
    Ok(GeneratedBatch {
        samples,
        latents: generated,
        source_index: draws.iter().map(|d| d.source).collect(),
        neighbor_index: draws.iter().map(|d| d.neighbor).collect(),
        rand_t: draws.iter().map(|d| d.t).collect(),
    })
}
