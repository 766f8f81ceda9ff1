//! Dense matrices, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod matrix;
mod rng;
mod tape;

pub use adam::{adam_update, Adam, AdamState, DEFAULT_LR};
pub use matrix::Matrix;
pub use rng::{derive_seed, rng_for, stable_hash, Rng64};
pub use tape::{sigmoid_scalar, Activation, Gradients, Tape, Var};
