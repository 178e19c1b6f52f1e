//! Forward pass, losses, and reverse-mode gradients.
//!
//! Dropout uses inverted scaling (`kept / (1 - rate)`) after every hidden
//! activation, training mode only, so inference needs no rescaling. The
//! backward pass reuses the exact masks drawn in the forward pass.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::model::{Activation, ModelParams};

/// Which loss `loss_and_grad` computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy over class-index targets (fused for stability).
    CrossEntropy,
    /// Mean squared error over every output element (batch mean of
    /// per-sample mean squared residuals).
    Mse,
}

/// Training targets for a batch.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// One class index per batch row, each in `[0, output_dim)`.
    Classes(&'a [usize]),
    /// A real matrix matching the output shape.
    Values(ArrayView2<'a, f64>),
}

struct ForwardTrace {
    /// Input to each layer (post-dropout output of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Post-activation output of each layer, before dropout.
    activations: Vec<Array2<f64>>,
    /// Dropout masks (already divided by keep probability) per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

fn run_forward(
    model: &ModelParams,
    batch: ArrayView2<f64>,
    training: bool,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardTrace> {
    let expected = model.input_dim();
    if batch.ncols() != expected {
        return Err(Error::shape(
            "forward input (layer 0)",
            format!("{} columns", expected),
            format!("{} columns", batch.ncols()),
        ));
    }
    let rate = model.dropout_rate();
    let needs_rng = training && rate > 0.0;
    if needs_rng && rng.is_none() {
        return Err(Error::Validation(
            "forward in training mode with dropout > 0 requires an rng".into(),
        ));
    }

    let layer_count = model.layers().len();
    let mut inputs = Vec::with_capacity(layer_count);
    let mut activations = Vec::with_capacity(layer_count);
    let mut masks = Vec::with_capacity(layer_count);
    let mut current = batch.to_owned();

    for (idx, (layer, spec)) in model.layers().iter().zip(model.specs()).enumerate() {
        inputs.push(current.clone());
        let mut z = current.dot(&layer.weights.t());
        z += &layer.bias;
        let act = z.mapv_into(|v| spec.activation.apply(v));
        activations.push(act.clone());

        let is_hidden = idx + 1 < layer_count;
        if is_hidden && needs_rng {
            let rng = rng.as_deref_mut().expect("rng checked above");
            let keep = 1.0 - rate;
            let mask = Array2::from_shape_fn(act.dim(), |_| {
                if rng.gen::<f64>() >= rate {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            current = act * &mask;
            masks.push(Some(mask));
        } else {
            current = act;
            masks.push(None);
        }
    }

    Ok(ForwardTrace {
        inputs,
        activations,
        masks,
        output: current,
    })
}

/// Runs the model on a batch, applying dropout only when `training`.
///
/// The returned matrix is `[batch × output_dim]`: logits for a classifier,
/// reconstructions for a decoder.
pub fn forward(
    model: &ModelParams,
    batch: ArrayView2<f64>,
    training: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Array2<f64>> {
    Ok(run_forward(model, batch, training, rng)?.output)
}

/// Batch-mean loss and its exact gradient w.r.t. every model parameter.
///
/// Gradients come from reverse-mode backpropagation through the same dropout
/// masks used in the forward pass, so `(model, batch, seed)` triples produce
/// bit-identical results.
pub fn loss_and_grad(
    model: &ModelParams,
    batch: ArrayView2<f64>,
    targets: Targets<'_>,
    loss: LossKind,
    training: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, ModelParams)> {
    let trace = run_forward(model, batch, training, rng)?;
    let (loss_value, mut upstream) = match (loss, targets) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => {
            cross_entropy(trace.output.view(), labels)?
        }
        (LossKind::Mse, Targets::Values(values)) => mse(trace.output.view(), values)?,
        (LossKind::CrossEntropy, Targets::Values(_)) => {
            return Err(Error::Validation(
                "cross_entropy expects class-index targets".into(),
            ))
        }
        (LossKind::Mse, Targets::Classes(_)) => {
            return Err(Error::Validation("mse expects value targets".into()))
        }
    };

    let mut grads = model.zeros_like();
    let layer_count = model.layers().len();
    for idx in (0..layer_count).rev() {
        if let Some(mask) = &trace.masks[idx] {
            upstream *= mask;
        }
        let spec = model.specs()[idx];
        let dz = match spec.activation {
            Activation::Identity => upstream,
            Activation::Relu => {
                // relu'(z) = 1 where the activation survived, 0 elsewhere.
                let mut dz = upstream;
                dz.zip_mut_with(&trace.activations[idx], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                dz
            }
        };
        let grad_layer = &mut grads.layers_mut()[idx];
        grad_layer.weights = dz.t().dot(&trace.inputs[idx]);
        grad_layer.bias = dz.sum_axis(Axis(0));
        upstream = dz.dot(&model.layers()[idx].weights);
    }

    Ok((loss_value, grads))
}

/// Softmax cross-entropy with max-subtraction; returns (loss, dL/dlogits).
fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::shape(
            "cross_entropy targets",
            format!("{batch} labels"),
            format!("{} labels", labels.len()),
        ));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Validation(format!(
            "label {label} out of range [0, {classes}) at batch row {row}"
        )));
    }

    let inv_batch = 1.0 / batch as f64;
    let mut grad = Array2::zeros((batch, classes));
    let mut total = 0.0;
    for (row, (logit_row, &label)) in logits.outer_iter().zip(labels).enumerate() {
        let max = logit_row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for &v in logit_row {
            sum += (v - max).exp();
        }
        let log_sum = sum.ln() + max;
        let sample_loss = log_sum - logit_row[label];
        if !sample_loss.is_finite() {
            return Err(Error::Numeric {
                context: "cross_entropy loss".into(),
                batch_index: row,
            });
        }
        total += sample_loss;
        for (col, &v) in logit_row.iter().enumerate() {
            let p = (v - max).exp() / sum;
            grad[[row, col]] = (p - if col == label { 1.0 } else { 0.0 }) * inv_batch;
        }
    }
    Ok((total * inv_batch, grad))
}

/// Element-mean squared error; returns (loss, dL/doutput).
fn mse(output: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if output.dim() != targets.dim() {
        return Err(Error::shape(
            "mse targets",
            format!("{:?}", output.dim()),
            format!("{:?}", targets.dim()),
        ));
    }
    let inv_count = 1.0 / (output.nrows() * output.ncols()) as f64;
    let diff = &output - &targets;
    let mut total = 0.0;
    for (row, diff_row) in diff.outer_iter().enumerate() {
        let sample: f64 = diff_row.iter().map(|d| d * d).sum();
        if !sample.is_finite() {
            return Err(Error::Numeric {
                context: "mse loss".into(),
                batch_index: row,
            });
        }
        total += sample;
    }
    let grad = diff.mapv_into(|d| 2.0 * d * inv_count);
    Ok((total * inv_count, grad))
}

/// Row-wise argmax of the logits; ties resolve to the lowest class index.
pub fn predict(model: &ModelParams, inputs: ArrayView2<f64>) -> Result<Vec<usize>> {
    let logits = forward(model, inputs, false, None)?;
    Ok(logits.outer_iter().map(|row| argmax(row.iter())).collect())
}

pub(crate) fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.enumerate() {
        if v > best_value {
            best_value = v;
            best = i;
        }
    }
    best
}
