//! Minimal dense neural-network engine: forward pass, backpropagation,
//! momentum SGD, cross-entropy and MSE losses, inverted dropout, and a
//! bit-exact binary checkpoint format.

pub mod checkpoint;
pub mod model;
pub mod ops;
pub mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{mlp_classifier_spec, Activation, DenseLayer, LayerSpec, ModelParams};
pub use ops::{forward, loss_and_grad, predict, LossKind, Targets};
pub use optim::{sgd_step, sgd_step_in_place, OptimizerState, SgdConfig};
