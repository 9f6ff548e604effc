//! Patch-to-flow regressor: a small convolutional network with exact
//! backpropagation, SGD training and a binary weight format.

mod net;
mod train;
mod weights;


pub use net::{ConvNet, LayerKind, NetShape};
pub use train::{best_epoch, evaluate_loss, train, train_from, write_history_csv, EpochStats, TrainConfig, TrainOutcome};
pub use weights::{decode_weights, encode_weights, load_weights, read_shape, save_weights, FORMAT_VERSION, MAGIC};

use crate::scalar::Real;

/// Squared Euclidean error `‖pred - target‖²`.
pub fn l2_loss<T: Real>(pred: [T; 2], target: [T; 2]) -> T {
    let dx = pred[0] - target[0];
    let dy = pred[1] - target[1];
    dx * dx + dy * dy
}
