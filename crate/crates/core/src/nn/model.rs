//! Dense MLP parameters and the linear algebra federated aggregation needs.
//!
//! A [`ModelParams`] is an ordered stack of dense layers, each `y = act(Wx + b)`
//! with `W` stored row-major as `[out_dim × in_dim]`. Two models with the same
//! [`LayerSpec`] list form a vector space under [`ModelParams::scale`] and
//! [`ModelParams::add`], which is what weighted model averaging relies on.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    /// Stable one-byte code used by the checkpoint format.
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// One dense layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out_dim × in_dim]`, row-major.
    pub weights: Array2<f64>,
    /// `[out_dim]`.
    pub bias: Array1<f64>,
}

/// Parameters of an MLP (classifier, encoder, or decoder).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseLayer>,
    specs: Vec<LayerSpec>,
    dropout_rate: f64,
}

impl ModelParams {
    /// Seeded uniform init in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(specs: &[LayerSpec], dropout_rate: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_specs(specs)?;
        validate_dropout(dropout_rate)?;
        let layers = specs
            .iter()
            .map(|spec| {
                let limit = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
                let weights = Array2::from_shape_fn((spec.output_dim, spec.input_dim), |_| {
                    rng.gen_range(-limit..=limit)
                });
                let bias = Array1::zeros(spec.output_dim);
                DenseLayer { weights, bias }
            })
            .collect();
        Ok(Self {
            layers,
            specs: specs.to_vec(),
            dropout_rate,
        })
    }

    /// Builds a model from explicit layer parameters, validating shapes and
    /// finiteness.
    pub fn from_layers(
        specs: Vec<LayerSpec>,
        layers: Vec<DenseLayer>,
        dropout_rate: f64,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        validate_dropout(dropout_rate)?;
        if specs.len() != layers.len() {
            return Err(Error::shape(
                "ModelParams::from_layers",
                format!("{} layers", specs.len()),
                format!("{} layers", layers.len()),
            ));
        }
        for (i, (spec, layer)) in specs.iter().zip(&layers).enumerate() {
            if layer.weights.dim() != (spec.output_dim, spec.input_dim) {
                return Err(Error::shape(
                    format!("layer {i} weights"),
                    format!("{}x{}", spec.output_dim, spec.input_dim),
                    format!("{}x{}", layer.weights.dim().0, layer.weights.dim().1),
                ));
            }
            if layer.bias.len() != spec.output_dim {
                return Err(Error::shape(
                    format!("layer {i} bias"),
                    format!("{}", spec.output_dim),
                    format!("{}", layer.bias.len()),
                ));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric {
                    context: format!("layer {i} parameters"),
                    batch_index: 0,
                });
            }
        }
        Ok(Self {
            layers,
            specs,
            dropout_rate,
        })
    }

    /// All-zero model with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .specs
            .iter()
            .map(|spec| DenseLayer {
                weights: Array2::zeros((spec.output_dim, spec.input_dim)),
                bias: Array1::zeros(spec.output_dim),
            })
            .collect();
        Self {
            layers,
            specs: self.specs.clone(),
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        validate_dropout(rate)?;
        self.dropout_rate = rate;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].output_dim
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Whether `other` has the same layer specs (and is therefore addable).
    pub fn same_spec(&self, other: &Self) -> bool {
        self.specs == other.specs
    }

    /// `self * factor`, element-wise.
    pub fn scale(&self, factor: f64) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer {
                weights: &l.weights * factor,
                bias: &l.bias * factor,
            })
            .collect();
        Self {
            layers,
            specs: self.specs.clone(),
            dropout_rate: self.dropout_rate,
        }
    }

    /// `self + other`, element-wise. Fails on spec mismatch.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_spec(other, "ModelParams::add")?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| DenseLayer {
                weights: &a.weights + &b.weights,
                bias: &a.bias + &b.bias,
            })
            .collect();
        Ok(Self {
            layers,
            specs: self.specs.clone(),
            dropout_rate: self.dropout_rate,
        })
    }

    /// `self += factor * other`, element-wise, in place.
    pub fn add_scaled_in_place(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.check_same_spec(other, "ModelParams::add_scaled_in_place")?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(factor, &b.weights);
            a.bias.scaled_add(factor, &b.bias);
        }
        Ok(())
    }

    /// Iterates every scalar parameter in a fixed order (layer by layer,
    /// weights row-major then bias).
    pub fn param_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    /// L2 norm of the flattened parameter vector.
    pub fn l2_norm(&self) -> f64 {
        self.param_iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// L2 distance between the flattened parameter vectors.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_spec(other, "ModelParams::l2_distance")?;
        let mut acc = 0.0;
        for (a, b) in self.param_iter().zip(other.param_iter()) {
            let d = a - b;
            acc += d * d;
        }
        Ok(acc.sqrt())
    }

    /// True when every parameter is bit-identical to `other`'s.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.same_spec(other)
            && self
                .param_iter()
                .zip(other.param_iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn check_same_spec(&self, other: &Self, context: &str) -> Result<()> {
        if !self.same_spec(other) {
            return Err(Error::shape(
                context,
                format!("{:?}", self.specs),
                format!("{:?}", other.specs),
            ));
        }
        Ok(())
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Validation("model needs at least one layer".into()));
    }
    for spec in specs {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Validation(format!(
                "layer dims must be positive, got {}x{}",
                spec.input_dim, spec.output_dim
            )));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_dim != pair[1].input_dim {
            return Err(Error::shape(
                format!("layer chain {i}->{}", i + 1),
                format!("input_dim {}", pair[0].output_dim),
                format!("input_dim {}", pair[1].input_dim),
            ));
        }
    }
    Ok(())
}

fn validate_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Validation(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Convenience spec for the classifier used throughout: `d -> hidden (ReLU) -> classes`.
pub fn mlp_classifier_spec(input_dim: usize, hidden_dim: usize, class_count: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, hidden_dim, Activation::Relu),
        LayerSpec::new(hidden_dim, class_count, Activation::Identity),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn small_model(seed: u64) -> ModelParams {
        let specs = mlp_classifier_spec(4, 3, 2);
        ModelParams::init(&specs, 0.0, &mut rng_from(seed)).unwrap()
    }

    #[test]
    fn init_is_seeded_and_within_limits() {
        let a = small_model(9);
        let b = small_model(9);
        assert!(a.bits_eq(&b));
        let limit = (6.0_f64 / 7.0).sqrt();
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn scale_by_one_is_identity() {
        let m = small_model(3);
        assert!(m.scale(1.0).bits_eq(&m));
    }

    #[test]
    fn scaling_distributes_over_addition() {
        let m = small_model(5);
        let lhs = m.scale(0.25).add(&m.scale(0.5)).unwrap();
        let rhs = m.scale(0.75);
        for (a, b) in lhs.param_iter().zip(rhs.param_iter()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let specs = vec![
            LayerSpec::new(4, 3, Activation::Relu),
            LayerSpec::new(2, 2, Activation::Identity),
        ];
        assert!(ModelParams::init(&specs, 0.0, &mut rng_from(0)).is_err());
    }

    #[test]
    fn add_rejects_different_specs() {
        let a = small_model(1);
        let specs = mlp_classifier_spec(4, 5, 2);
        let b = ModelParams::init(&specs, 0.0, &mut rng_from(1)).unwrap();
        assert!(a.add(&b).is_err());
    }
}
