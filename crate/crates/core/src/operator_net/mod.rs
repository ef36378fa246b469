//! The learned operator: a dense rectifier network mapping the controller
//! context to the Hankel column-combination vector, its penalized training
//! objective, analytic gradients and the Adam training loop.

mod loss;
mod network;
mod train;

pub use loss::{batch_grad, batch_loss, grad, loss, soft_penalty, BatchMatrices, LossWeights};
pub use network::{Dense, Gradients, OperatorNetwork, Variant};
pub use train::{moving_average, train, train_matrices, write_training_log, EpochLog, TrainConfig};
