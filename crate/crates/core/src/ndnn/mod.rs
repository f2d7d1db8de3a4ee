//! Dense numeric core: matrices, the two-block MLP, losses, the input
//! Jacobian penalty and SGD.
//!
//! Models are values. Every update returns a new [`MlpModel`], so the same
//! model can be shared across threads without locking.

pub mod gradcheck;
mod jacobian;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use jacobian::{
    input_jacobian_sqnorm, jacobian_rows, jacobian_sqnorm_value, MAX_JACOBIAN_CLASSES,
};
pub use loss::{argmax, kl_to_reference, margin_loss, softmax, softmax_ce, LogitLoss, LossBundle, PROB_FLOOR};
pub use matrix::DenseMatrix;
pub use mlp::{Activation, ForwardCache, Gradients, Layer, MlpModel, ParamBlock};
pub use optim::{schedule_rate, sgd_step, LrSchedule};

use crate::Result;

/// Logits of `model` on `x`.
pub fn forward(model: &MlpModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    model.forward(x)
}

/// Per-row argmax of the logits, lowest index on ties.
pub fn predict(model: &MlpModel, x: &DenseMatrix) -> Result<Vec<usize>> {
    Ok(model.forward(x)?.row_iter().map(argmax).collect())
}
