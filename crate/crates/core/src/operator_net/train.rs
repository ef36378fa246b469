use std::io::Write;
use std::time::Instant;

use log::info;
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_grad, batch_loss, BatchMatrices, LossWeights};
use super::network::{Gradients, OperatorNetwork};
use crate::dataset::TrainingSample;
use crate::error::{DeepcError, Result};
use crate::hankel::HankelSet;

fn default_epochs() -> usize {
    1000
}
fn default_batch() -> usize {
    200
}
fn default_lr() -> f64 {
    1e-4
}
fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}
fn default_eps() -> f64 {
    1e-8
}
fn default_hidden() -> Vec<usize> {
    vec![150, 150]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch: default_batch(),
            learning_rate: default_lr(),
            betas: default_betas(),
            eps: default_eps(),
            seed: 0,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(self.learning_rate > 0.0) {
            return Err(DeepcError::Config(format!(
                "need batch >= 1 and learning_rate > 0, got {} / {}",
                self.batch, self.learning_rate
            )));
        }
        Ok(())
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl Adam {
    fn new(net: &OperatorNetwork, tc: &TrainConfig) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
            lr: tc.learning_rate,
            b1: tc.betas.0,
            b2: tc.betas.1,
            eps: tc.eps,
        }
    }

    fn step(&mut self, net: &mut OperatorNetwork, g: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        let (b1, b2, lr, eps) = (self.b1, self.b2, self.lr, self.eps);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights[i])
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias[i])
                .and(&mut self.m.bias[i])
                .and(&mut self.v.bias[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: f64,
}

pub fn write_training_log<W: Write>(w: W, log: &[EpochLog]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epoch", "train_loss", "val_loss", "wall_ms"])?;
    for e in log {
        wtr.write_record(&[
            e.epoch.to_string(),
            format!("{:e}", e.train_loss),
            e.val_loss.map(|v| format!("{v:e}")).unwrap_or_default(),
            format!("{:.3}", e.wall_ms),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Minibatch Adam on the operator objective. Returns the per-epoch mean
/// training loss (and validation loss when `validation` is nonempty).
pub fn train(
    net: &mut OperatorNetwork,
    dataset: &[TrainingSample],
    validation: &[TrainingSample],
    h: &HankelSet,
    w: &LossWeights,
    tc: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    tc.validate()?;
    let data = BatchMatrices::from_samples(net.variant, dataset)?;
    let val = if validation.is_empty() {
        None
    } else {
        Some(BatchMatrices::from_samples(net.variant, validation)?)
    };
    train_matrices(net, &data, val.as_ref(), h, w, tc)
}

pub fn train_matrices(
    net: &mut OperatorNetwork,
    data: &BatchMatrices,
    val: Option<&BatchMatrices>,
    h: &HankelSet,
    w: &LossWeights,
    tc: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    tc.validate()?;
    // Shape check up front, also covering the zero-epoch case.
    batch_loss(net, &data.select(&[0]), h, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(net, tc);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let start = Instant::now();
    let mut log = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(tc.batch) {
            let b = data.select(chunk);
            let (l, g) = batch_grad(net, &b, h, w)?;
            if !l.is_finite() {
                return Err(DeepcError::Divergence { epoch, loss: l });
            }
            sum += l * chunk.len() as f64;
            adam.step(net, &g);
        }
        let train_loss = sum / data.len() as f64;
        let val_loss = match val {
            Some(v) => Some(batch_loss(net, v, h, w)?),
            None => None,
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        if epoch % 50 == 0 || epoch + 1 == tc.epochs {
            info!("epoch {epoch}: train {train_loss:.5e} val {val_loss:?} ({wall_ms:.0} ms)");
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_ms,
        });
    }
    Ok(log)
}

/// Trailing moving average.
pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || v.len() < window {
        return Vec::new();
    }
    let a = Array1::from(v.to_vec());
    (0..=v.len() - window)
        .map(|i| a.slice(ndarray::s![i..i + window]).mean().unwrap_or(0.0))
        .collect()
}
