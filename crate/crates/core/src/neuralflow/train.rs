use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{ConvNet, NetShape};
use crate::error::{Error, Result};
use crate::patchdata::Dataset;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
    /// Epochs (1-based) from which the rate is multiplied by `lr_gamma`
    /// once more. Empty keeps the rate constant.
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 0.05,
            epochs: 20,
            momentum: 0.9,
            seed: 0,
            validation_fraction: 0.1,
            clip_norm: Some(1.0),
            lr_milestones: Vec::new(),
            lr_gamma: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must lie in [0, 1)".into()));
        }
        if !(self.lr_gamma > 0.0) {
            return Err(Error::InvalidConfig("lr_gamma must be positive".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

impl TrainConfig {
    /// Learning rate used during `epoch` (1-based).
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.learning_rate * self.lr_gamma.powi(drops as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Snapshot from the epoch with the lowest validation loss.
    pub net: ConvNet<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Index of the first epoch with minimal validation loss.
pub fn best_epoch(history: &[EpochStats]) -> Option<usize> {
    history
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.val_loss.total_cmp(&b.1.val_loss))
        .map(|(i, _)| i)
}

/// Mean per-record squared error, evaluated in chunks.
pub fn evaluate_loss<T: Real>(net: &ConvNet<T>, ds: &Dataset<T>, chunk: usize) -> Result<f64> {
    if ds.is_empty() {
        return Ok(f64::NAN);
    }
    let n = ds.input_len();
    let mut total = 0.0;
    for start in (0..ds.len()).step_by(chunk.max(1)) {
        let end = (start + chunk.max(1)).min(ds.len());
        let preds = net.forward_flat(&ds.inputs[start * n..end * n])?;
        for (p, t) in preds.iter().zip(&ds.targets[start..end]) {
            let dx = (p[0] - t[0]).f64();
            let dy = (p[1] - t[1]).f64();
            total += dx * dx + dy * dy;
        }
    }
    Ok(total / ds.len() as f64)
}

/// Train from a fresh He initialization seeded by `cfg.seed`.
pub fn train<T: Real>(
    dataset: &Dataset<T>,
    shape: NetShape,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = ConvNet::init(shape, &mut rng)?;
    train_from(net, dataset, cfg, &mut rng, on_epoch)
}

/// Minibatch SGD with momentum on the mean L2 loss.
///
/// A seeded shuffle holds out `validation_fraction` of the records; the
/// remaining ones are reshuffled every epoch. Returns the lowest-validation
/// snapshot together with the full per-epoch history.
pub fn train_from<T: Real>(
    mut net: ConvNet<T>,
    dataset: &Dataset<T>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if dataset.len() < cfg.batch_size {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} records, fewer than batch size {}",
            dataset.len(),
            cfg.batch_size
        )));
    }
    if dataset.channels != net.in_channels() || dataset.size != net.shape().input_size {
        return Err(Error::ChannelMismatch {
            expected: net.in_channels(),
            actual: dataset.channels,
        });
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let n_val = (dataset.len() as f64 * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(dataset.len() - 1);
    let val = dataset.subset(&order[..n_val]);
    let mut train_idx = order[n_val..].to_vec();

    let mu = T::of(cfg.momentum);
    let mut velocity = net.zeros_like();
    let n = dataset.input_len();
    let mut batch_inputs: Vec<T> = Vec::with_capacity(cfg.batch_size * n);
    let mut batch_targets: Vec<[T; 2]> = Vec::with_capacity(cfg.batch_size);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ConvNet<T>)> = None;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(rng);
        let lr = T::of(cfg.rate_at(epoch + 1));
        let mut epoch_loss = 0.0;
        for (b, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
            batch_inputs.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_inputs.extend_from_slice(&dataset.inputs[i * n..(i + 1) * n]);
                batch_targets.push(dataset.targets[i]);
            }
            let (loss, mut grad) = net.loss_and_gradient(&batch_inputs, &batch_targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                    value: loss,
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            if let Some(c) = cfg.clip_norm {
                let norm = grad.norm_sq().sqrt();
                if norm > c {
                    grad.scale(T::of(c / norm));
                }
            }
            // v <- mu v + g ; w <- w - lr v
            velocity.scale(mu);
            velocity.axpy(T::one(), &grad);
            net.axpy(-lr, &velocity);
            if !net.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                    value: f64::NAN,
                });
            }
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            evaluate_loss(&net, &val, 256)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                batch: usize::MAX,
                value: val_loss,
            });
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
        };
        on_epoch(&stats);
        history.push(stats);
        if best.as_ref().map_or(true, |(v, _, _)| val_loss < *v) {
            best = Some((val_loss, epoch + 1, net.clone()));
        }
    }
    let (_, best_epoch, net) = best.unwrap_or((f64::NAN, 0, net));
    Ok(TrainOutcome {
        net,
        best_epoch,
        history,
    })
}

/// `epoch,train_loss,val_loss` rows.
pub fn write_history_csv(history: &[EpochStats], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss")?;
    for h in history {
        writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_loss)?;
    }
    Ok(())
}
