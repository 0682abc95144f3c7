use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seed::substream;

use super::{Inputs, Model, Params};

/// Random-access training data.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Network inputs and the full `[BOS, …, EOS]` token sequence.
    fn sample(&self, index: usize) -> Result<(Inputs, Vec<usize>)>;
}

pub type Batch = Vec<(Inputs, Vec<usize>)>;

impl SampleSource for Batch {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn sample(&self, index: usize) -> Result<(Inputs, Vec<usize>)> {
        self.get(index)
            .cloned()
            .ok_or_else(|| Error::contract(format!("sample {index} out of range")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate of the cosine schedule as a fraction of the peak.
    pub min_lr_ratio: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; zero disables clipping.
    pub grad_clip: f64,
    /// Samples drawn (without replacement) per epoch; zero means all.
    pub samples_per_epoch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            min_lr_ratio: 0.05,
            warmup_steps: 50,
            grad_clip: 1.0,
            samples_per_epoch: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs >= 1
            && self.batch_size >= 1
            && self.learning_rate > 0.0
            && (0.0..=1.0).contains(&self.min_lr_ratio)
            && self.grad_clip >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("train config", format!("{self:?}")))
        }
    }

    fn per_epoch(&self, n: usize) -> usize {
        if self.samples_per_epoch == 0 {
            n
        } else {
            self.samples_per_epoch.min(n)
        }
    }

    /// Linear warmup, then cosine decay to `min_lr_ratio · learning_rate`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1);
        let t = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let lo = self.learning_rate * self.min_lr_ratio;
        lo + 0.5 * (self.learning_rate - lo) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).data();
            let m = self.m.get_mut(name).data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            }
            let v = self.v.get_mut(name).data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
            let m = self.m.get(name).data();
            let v = self.v.get(name).data();
            for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
                let upd = lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
                // keep parameters f32-representable so checkpoints are exact
                *pi = (*pi - upd) as f32 as f64;
            }
        }
    }
}

/// Minibatch Adam on mean token cross-entropy. Deterministic for a fixed
/// seed: the shuffle comes from a named substream and per-sample gradients
/// are reduced in batch order. `on_epoch` sees each epoch's mean loss and
/// the model after that epoch.
pub fn train(
    model: &mut Model,
    data: &dyn SampleSource,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
    mut on_epoch: impl FnMut(usize, f64, &Model),
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let per_epoch = cfg.per_epoch(n);
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut adam = Adam {
        m: model.params().zeros_like(),
        v: model.params().zeros_like(),
        t: 0,
    };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, "train/shuffle", epoch as u64));
        order.truncate(per_epoch);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let results = exec.map(chunk, |&i| -> Result<(f64, Params)> {
                let (inputs, seq) = data.sample(i)?;
                model.raw_gradients(&inputs, &seq)
            });
            let inv = 1.0 / chunk.len() as f64;
            let mut grads = model.params().zeros_like();
            let mut loss = 0.0;
            for r in results {
                let (l, g) = r?;
                loss += l;
                grads.add_scaled(&g, inv);
            }
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: loss * inv,
                });
            }
            if cfg.grad_clip > 0.0 {
                let norm = grads.norm();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    for (_, t) in grads.iter_mut() {
                        t.scale(s);
                    }
                }
            }
            let lr = cfg.lr_at(step, total);
            adam.step(model.params_mut(), &grads, lr, cfg);
            sum += loss;
            step += 1;
        }
        let mean = sum / per_epoch as f64;
        on_epoch(epoch, mean, model);
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        epoch_losses,
        steps: step,
    })
}
