//! Desk-scale federated learning, unlearning, and recovery simulator.
//!
//! The crate is organized around one experiment arc:
//!
//! 1. [`data`] — load or synthesize a labeled dataset and partition it across
//!    clients with a controllable label skew (one client hoards most of a
//!    "skewed" class).
//! 2. [`fed`] — train a global MLP classifier with data-size-weighted
//!    federated averaging and evaluate it (per-class, balanced, and
//!    skewed-class accuracy).
//! 3. [`unlearn`] — remove the skewed client's contribution from the global
//!    model by projected gradient ascent on its local data, bounded by an
//!    L2 ball around the pre-unlearning model.
//! 4. [`recovery`] — repair the damaged model using only the remaining
//!    clients: per-client autoencoder training (with a reverse-order
//!    reconstruction term), latent-space interpolation oversampling of the
//!    skewed class, density-factor denoising of the generated samples, and
//!    federated fine-tuning on the rebalanced shards.
//!
//! Everything is deterministic given the seeds in the configs; per-client
//! work may run in parallel without changing any result (client seeds are
//! derived from `(seed, client_id, round)`, see [`seed`]).

pub mod data;
pub mod error;
pub mod fed;
pub mod nn;
pub mod recovery;
pub mod seed;
pub mod unlearn;

pub use error::{Error, Result};
