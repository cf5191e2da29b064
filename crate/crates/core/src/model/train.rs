//! Training step and epoch loop.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, Schedule};
use super::{Image, ModelConfig, Network};
use crate::error::{Error, Result};
use crate::objective::{LossConfig, LossReport, ZeroRows};
use crate::rng::child_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_pairs: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub cosine_decay_alpha: f64,
    pub momentum: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub rho: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_pairs: 32,
            epochs: 20,
            peak_lr: 1e-2,
            warmup_epochs: 1,
            cosine_decay_alpha: 0.001,
            momentum: 0.9,
            beta2: 0.999,
            weight_decay: 1e-4,
            loss: LossConfig::default(),
            rho: 0.10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_pairs < 2 {
            return Err(Error::Config("batch_pairs must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        let rates = [self.peak_lr, self.cosine_decay_alpha, self.loss.tau];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("rates {rates:?} must be positive")));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..1.0).contains(&self.beta2) || self.weight_decay < 0.0 {
            return Err(Error::Config("invalid optimizer moments or weight decay".into()));
        }
        self.loss.weights.validate()
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW { beta1: self.momentum, beta2: self.beta2, weight_decay: self.weight_decay, ..AdamW::default() }
    }

    pub fn steps_per_epoch(&self, pairs: usize) -> u64 {
        let full = pairs / self.batch_pairs;
        let tail = usize::from(pairs % self.batch_pairs >= 2);
        (full + tail) as u64
    }

    pub fn schedule(&self, steps_per_epoch: u64) -> Schedule {
        Schedule {
            peak: self.peak_lr,
            warmup_steps: self.warmup_epochs as u64 * steps_per_epoch,
            total_steps: self.epochs as u64 * steps_per_epoch,
            alpha: self.cosine_decay_alpha,
        }
    }
}

/// Trainable parameters plus optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub net: Network<f32>,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl ModelState {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Ok(Self::from_network(Network::new(config)?))
    }

    pub fn from_network(net: Network<f32>) -> Self {
        let m = net.zero_grads();
        let v = net.zero_grads();
        Self { net, m, v, step: 0 }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }
}

/// One optimizer step on `N` aligned normal/augmented pairs.
pub fn train_step(
    state: &mut ModelState,
    normals: &[Image<f32>],
    augmented: &[Image<f32>],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossReport> {
    let (report, grads) = state.net.loss_and_grad(normals, augmented, &cfg.loss, ZeroRows::Ignore)?;
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::TrainingAborted(format!("non-finite gradient at step {}", state.step)));
    }
    state.step += 1;
    cfg.optimizer().update(&mut state.net.params, &grads, &mut state.m, &mut state.v, lr, state.step);
    if state.net.params.iter().flatten().any(|p| !p.is_finite()) {
        return Err(Error::TrainingAborted(format!("non-finite parameter after step {}", state.step)));
    }
    Ok(report)
}

/// Supplies the `index`-th training pair for an epoch. Implementations are
/// pure in `(index, epoch)` so pairs can be built concurrently.
pub trait PairSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn pair(&self, index: usize, epoch: usize) -> Result<(Image<f32>, Image<f32>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub l_bc: f64,
    pub l_cl: f64,
    pub l_if: f64,
    pub l_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    /// Mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Runs the full schedule. `on_step` sees every step's losses (the CLI
/// writes them as CSV).
pub fn train(
    state: &mut ModelState,
    source: &dyn PairSource,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let pairs = source.len();
    if pairs < 2 {
        return Err(Error::InsufficientData(format!("{pairs} training pairs; need at least 2")));
    }
    let per_epoch = cfg.steps_per_epoch(pairs);
    let schedule = cfg.schedule(per_epoch);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut local_step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs).collect();
        order.shuffle(&mut child_rng(cfg.seed, &[epoch as u64]));
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in order.chunks(cfg.batch_pairs).filter(|b| b.len() >= 2) {
            let built: Vec<(Image<f32>, Image<f32>)> =
                batch.par_iter().map(|&i| source.pair(i, epoch)).collect::<Result<_>>()?;
            let (normals, augmented): (Vec<_>, Vec<_>) = built.into_iter().unzip();
            let lr = schedule.lr_at(local_step);
            let report = train_step(state, &normals, &augmented, cfg, lr)?;
            on_step(&StepRecord {
                step: state.step,
                epoch,
                lr,
                l_bc: report.l_bc,
                l_cl: report.l_cl,
                l_if: report.l_if,
                l_total: report.l_total,
            })?;
            sum += report.l_total;
            count += 1;
            local_step += 1;
        }
        epoch_loss.push(sum / count.max(1) as f64);
        log::info!("epoch {epoch}: mean loss {:.4}", sum / count.max(1) as f64);
    }
    Ok(TrainSummary { steps: local_step, epoch_loss })
}
