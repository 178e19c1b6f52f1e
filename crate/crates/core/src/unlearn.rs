//! Unlearning by projected gradient ascent.
//!
//! The departing client maximizes the classification loss on its own data,
//! stepping along `+gradient` and projecting the parameters back onto an L2
//! ball of radius `radius` around the pre-unlearning global model after
//! every step. The ball bounds how far the model can drift, which is what
//! keeps the rest of the model usable while the hoarded class is forgotten.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, LossKind, ModelParams, Targets};
use crate::seed::rng_from;
use rand::seq::SliceRandom;

/// Settings for one unlearning request.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UnlearnConfig {
    pub ascent_steps: usize,
    pub ascent_lr: f64,
    /// L2 ball radius around the pre-unlearning global model. Zero collapses
    /// every step back to the reference.
    pub radius: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ascent_steps == 0 {
            return Err(Error::Validation("ascent_steps must be at least 1".into()));
        }
        if self.ascent_lr <= 0.0 || !self.ascent_lr.is_finite() {
            return Err(Error::Validation(format!(
                "ascent_lr must be positive and finite, got {}",
                self.ascent_lr
            )));
        }
        if !self.radius.is_finite() || self.radius < 0.0 {
            return Err(Error::Validation(format!(
                "radius must be finite and non-negative, got {}",
                self.radius
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Default ball radius: half the parameter norm of the reference model.
pub fn default_radius(reference: &ModelParams) -> f64 {
    0.5 * reference.l2_norm()
}

/// Per-step record of the ascent, written as a JSON sidecar next to the
/// unlearned checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnlearnTrace {
    /// Classification loss on the step's mini-batch, before the step.
    pub step_losses: Vec<f64>,
    /// Distance to the reference model after each projected step.
    pub step_distances: Vec<f64>,
    /// Full-shard loss of the reference model.
    pub initial_loss: f64,
    /// Full-shard loss of the returned model.
    pub final_loss: f64,
    pub radius: f64,
}

/// Projects `params` onto the L2 ball of radius `radius` around `reference`:
/// unchanged when inside, radially rescaled onto the surface when outside.
///
/// Points within a 1e-12 relative band of the surface count as inside, so
/// re-projecting a just-projected point is a bit-exact no-op.
pub fn projection(params: &ModelParams, reference: &ModelParams, radius: f64) -> Result<ModelParams> {
    params.check_same_spec(reference, "projection")?;
    let distance = params.l2_distance(reference)?;
    if distance <= radius * (1.0 + 1e-12) {
        return Ok(params.clone());
    }
    // reference + radius * (params - reference) / distance
    let scale = radius / distance;
    let mut out = reference.scale(1.0 - scale);
    out.add_scaled_in_place(params, scale)?;
    Ok(out)
}

/// Runs projected gradient ascent on the unlearning client's shard, starting
/// from (and projecting around) `global`. Returns the unlearned model and
/// the ascent trace.
pub fn gradient_ascent_unlearn(
    global: &ModelParams,
    unlearn_shard: &ClientShard,
    cfg: &UnlearnConfig,
) -> Result<(ModelParams, UnlearnTrace)> {
    cfg.validate()?;
    if unlearn_shard.is_empty() {
        return Err(Error::Validation(
            "unlearning client's shard must be nonempty".into(),
        ));
    }

    let full_loss = |model: &ModelParams| -> Result<f64> {
        let (loss, _) = loss_and_grad(
            model,
            unlearn_shard.data.features().view(),
            Targets::Classes(unlearn_shard.data.labels()),
            LossKind::CrossEntropy,
            false,
            None,
        )?;
        Ok(loss)
    };
    let initial_loss = full_loss(global)?;

    let mut rng = rng_from(cfg.seed);
    let n = unlearn_shard.len();
    let full_batch = cfg.batch_size >= n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut model = global.clone();
    let mut step_losses = Vec::with_capacity(cfg.ascent_steps);
    let mut step_distances = Vec::with_capacity(cfg.ascent_steps);

    let mut cursor = n; // forces a reshuffle on the first step
    for step in 0..cfg.ascent_steps {
        if cursor >= n {
            // Full batches keep the natural row order so one ascent step is
            // reproducible by a single hand-computed gradient.
            if !full_batch {
                order.shuffle(&mut rng);
            }
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(n);
        let batch_rows = &order[cursor..end];
        cursor = end;

        let batch = unlearn_shard.data.features().select(Axis(0), batch_rows);
        let labels: Vec<usize> = batch_rows
            .iter()
            .map(|&r| unlearn_shard.data.labels()[r])
            .collect();
        let (loss, grads) = loss_and_grad(
            &model,
            batch.view(),
            Targets::Classes(&labels),
            LossKind::CrossEntropy,
            false,
            None,
        )
        .map_err(|e| match e {
            Error::Numeric { context, batch_index } => Error::Numeric {
                context: format!("ascent step {step}: {context}"),
                batch_index,
            },
            other => other,
        })?;
        step_losses.push(loss);

        // Ascend, then project back into the ball.
        model.add_scaled_in_place(&grads, cfg.ascent_lr)?;
        model = projection(&model, global, cfg.radius)?;
        step_distances.push(model.l2_distance(global)?);
    }

    let final_loss = full_loss(&model)?;
    let trace = UnlearnTrace {
        step_losses,
        step_distances,
        initial_loss,
        final_loss,
        radius: cfg.radius,
    };
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::nn::{mlp_classifier_spec, Activation, DenseLayer, LayerSpec};
    use crate::seed::rng_from;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};

    fn shard(seed: u64) -> ClientShard {
        ClientShard::new(0, gen_synthetic(3, 15, 4, 0.2, seed).unwrap())
    }

    fn model(seed: u64) -> ModelParams {
        ModelParams::init(&mlp_classifier_spec(4, 6, 3), 0.0, &mut rng_from(seed)).unwrap()
    }

    fn cfg() -> UnlearnConfig {
        UnlearnConfig {
            ascent_steps: 10,
            ascent_lr: 0.05,
            radius: 1.0,
            batch_size: 8,
            seed: 5,
        }
    }

    #[test]
    fn projection_inside_ball_is_bit_identical() {
        let p = model(1);
        let mut r = p.clone();
        r.add_scaled_in_place(&p.zeros_like(), 0.0).unwrap();
        let out = projection(&p, &r, 10.0).unwrap();
        assert!(out.bits_eq(&p));
    }

    #[test]
    fn projection_of_three_four_five_vector() {
        let p = ModelParams::from_layers(
            vec![LayerSpec::new(2, 1, Activation::Identity)],
            vec![DenseLayer {
                weights: array![[3.0, 4.0]],
                bias: Array1::zeros(1),
            }],
            0.0,
        )
        .unwrap();
        let origin = p.zeros_like();
        let out = projection(&p, &origin, 1.0).unwrap();
        assert_abs_diff_eq!(out.layers()[0].weights[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out.layers()[0].weights[[0, 1]], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn projection_norm_identity_on_random_inputs() {
        for seed in 0..20u64 {
            let p = model(seed);
            let r = model(seed + 100);
            let radius = 0.1 + (seed as f64) * 0.05;
            let out = projection(&p, &r, radius).unwrap();
            let expected = radius.min(p.l2_distance(&r).unwrap());
            assert_abs_diff_eq!(out.l2_distance(&r).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let p = model(2);
        let r = model(3);
        let once = projection(&p, &r, 0.5).unwrap();
        let twice = projection(&once, &r, 0.5).unwrap();
        assert!(once.bits_eq(&twice));
    }

    #[test]
    fn zero_radius_returns_the_reference() {
        let global = model(4);
        let mut c = cfg();
        c.radius = 0.0;
        let (out, _) = gradient_ascent_unlearn(&global, &shard(6), &c).unwrap();
        // Every projected step collapses back onto the reference.
        for (a, b) in out.param_iter().zip(global.param_iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_full_batch_step_matches_hand_computed_ascent() {
        let global = model(7);
        let s = shard(8);
        let c = UnlearnConfig {
            ascent_steps: 1,
            ascent_lr: 0.2,
            radius: 1e9,
            batch_size: s.len(), // full batch
            seed: 13,
        };
        let (out, trace) = gradient_ascent_unlearn(&global, &s, &c).unwrap();

        let (loss, grads) = loss_and_grad(
            &global,
            s.data.features().view(),
            Targets::Classes(s.data.labels()),
            LossKind::CrossEntropy,
            false,
            None,
        )
        .unwrap();
        let mut expected = global.clone();
        expected.add_scaled_in_place(&grads, 0.2).unwrap();
        assert!(out.bits_eq(&expected));
        assert_abs_diff_eq!(trace.step_losses[0], loss, epsilon = 1e-15);
    }

    #[test]
    fn result_stays_inside_the_ball() {
        let global = model(9);
        let s = shard(10);
        let mut c = cfg();
        c.radius = 0.3;
        c.ascent_steps = 40;
        let (out, trace) = gradient_ascent_unlearn(&global, &s, &c).unwrap();
        let dist = out.l2_distance(&global).unwrap();
        assert!(dist <= c.radius * (1.0 + 1e-9), "distance {dist}");
        for &d in &trace.step_distances {
            assert!(d <= c.radius * (1.0 + 1e-9));
        }
    }

    #[test]
    fn full_batch_ascent_loss_is_nondecreasing() {
        let global = model(11);
        let s = shard(12);
        let c = UnlearnConfig {
            ascent_steps: 15,
            ascent_lr: 0.02,
            radius: 1e9, // effectively unconstrained
            batch_size: s.len(),
            seed: 3,
        };
        let (_, trace) = gradient_ascent_unlearn(&global, &s, &c).unwrap();
        // With full batches every recorded batch loss is the shard loss.
        for pair in trace.step_losses.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "losses {:?}", trace.step_losses);
        }
        assert!(trace.final_loss >= trace.initial_loss);
    }

    #[test]
    fn forgetting_raises_the_shard_loss() {
        let global = model(14);
        let s = shard(15);
        let (_, trace) = gradient_ascent_unlearn(&global, &s, &cfg()).unwrap();
        assert!(trace.final_loss >= trace.initial_loss);
    }

    #[test]
    fn infinite_radius_is_rejected() {
        let mut c = cfg();
        c.radius = f64::INFINITY;
        assert!(c.validate().is_err());
        c.radius = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let global = model(16);
        let s = shard(17);
        let (a, _) = gradient_ascent_unlearn(&global, &s, &cfg()).unwrap();
        let (b, _) = gradient_ascent_unlearn(&global, &s, &cfg()).unwrap();
        assert!(a.bits_eq(&b));
    }
}
