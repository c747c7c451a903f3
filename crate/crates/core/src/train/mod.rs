//! Per-user training with Adam, learning-rate decay and validation
//! checkpointing.

mod adam;
mod loss;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::eval::{evaluate, Metrics};
use crate::model::Model;
use crate::tape::Tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{l2_penalty, loss, objective};

/// Validation metric that decides which epoch is kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Selection {
    #[default]
    Mrr,
    Hits1,
}

impl Selection {
    pub fn score(self, m: &Metrics) -> f64 {
        match self {
            Self::Mrr => m.mrr,
            Self::Hits1 => m.hits1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    pub decay: f64,
    pub min_lr: f64,
    /// L2 weight on weight matrices.
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub selection: Selection,
    /// Training stops once the relative change of the epoch loss stays below
    /// `tolerance` for `patience` consecutive epochs.
    pub tolerance: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            decay: 0.9,
            min_lr: 0.0005,
            l2: 1e-5,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            selection: Selection::Mrr,
            tolerance: 1e-5,
            patience: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m| Err(Error::Config(m));
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail(format!("decay {} outside (0, 1]", self.decay));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.learning_rate)
            || !positive(self.min_lr)
            || self.min_lr > self.learning_rate
        {
            return fail(format!(
                "need 0 < min_lr ({}) <= learning_rate ({})",
                self.min_lr, self.learning_rate
            ));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return fail(format!("negative L2 weight {}", self.l2));
        }
        if self.epochs == 0 {
            return fail("epoch budget must be positive".into());
        }
        Ok(())
    }

    /// Learning rate used in each epoch, in order.
    pub fn schedule(&self) -> impl Iterator<Item = f64> + '_ {
        core::iter::successors(Some(self.learning_rate), move |lr| {
            Some((lr * self.decay).max(self.min_lr))
        })
        .take(self.epochs)
    }
}

/// Runs one Adam step per example in a shuffled order and returns the mean
/// training objective. Dropout masks and the order are drawn from `rng`.
pub fn train_epoch(
    model: &mut Model,
    optimizer: &mut AdamState,
    examples: &[Example],
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for i in order {
        let ex = &examples[i];
        let mut tape = Tape::new();
        let (bindings, logits) =
            model.logits(&mut tape, &ex.batch, Some(rng as &mut dyn RngCore))?;
        let l = objective(&mut tape, &bindings, logits, &ex.targets, cfg.l2)?;
        total += tape.value(l).get(0, 0);
        let grads = tape.backward(l)?;
        let grads = bindings.collect(&tape, &grads);
        adam_step(&mut model.params, &grads, optimizer, lr, &cfg.adam)?;
    }
    Ok(total / examples.len() as f64)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid: Metrics,
}

/// Parameters and optimizer state from the best validation epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamState,
    pub epoch: usize,
    pub valid: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
    pub converged: bool,
}

/// Extension points for [`fit_with`].
pub trait FitHooks {
    /// Validation pass; the model must not be modified.
    fn validate(&mut self, model: &Model, examples: &[Example]) -> Result<Metrics> {
        evaluate(model, examples)
    }

    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

impl FitHooks for () {}

/// Whether `candidate` should replace the incumbent checkpoint; ties keep
/// the earlier epoch.
pub fn improves(selection: Selection, candidate: &Metrics, incumbent: Option<&Metrics>) -> bool {
    match incumbent {
        None => true,
        Some(best) => selection.score(candidate) > selection.score(best),
    }
}

fn converged(losses: &[f64], tolerance: f64, patience: usize) -> bool {
    if patience == 0 || losses.len() <= patience {
        return false;
    }
    losses[losses.len() - patience - 1..].windows(2).all(|w| {
        let scale = libm::fabs(w[0]).max(f64::MIN_POSITIVE);
        libm::fabs(w[1] - w[0]) / scale < tolerance
    })
}

pub fn fit(
    model: Model,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    fit_with(model, train, valid, cfg, &mut ())
}

/// Trains for up to `cfg.epochs` epochs. After each epoch the learning
/// rate decays and the model is validated; the best epoch is returned.
pub fn fit_with(
    mut model: Model,
    train: &[Example],
    valid: &[Example],
    cfg: &TrainConfig,
    hooks: &mut dyn FitHooks,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    if valid.is_empty() {
        return Err(Error::Empty("validation examples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = AdamState::new(&model.params);
    let mut best: Option<Checkpoint> = None;
    let mut log = Vec::new();
    let mut losses = Vec::new();
    let mut done = false;
    for (i, lr) in cfg.schedule().enumerate() {
        let train_loss = train_epoch(&mut model, &mut optimizer, train, lr, cfg, &mut rng)?;
        let metrics = hooks.validate(&model, valid)?;
        let record = EpochRecord {
            epoch: i + 1,
            lr,
            train_loss,
            valid: metrics,
        };
        log::info!(
            "epoch {} lr {:.6} loss {:.6} valid hits@1 {:.4} mrr {:.4}",
            record.epoch,
            lr,
            train_loss,
            metrics.hits1,
            metrics.mrr
        );
        hooks.on_epoch(&record);
        log.push(record);
        if improves(cfg.selection, &metrics, best.as_ref().map(|b| &b.valid)) {
            best = Some(Checkpoint {
                model: model.clone(),
                optimizer: optimizer.clone(),
                epoch: i + 1,
                valid: metrics,
            });
        }
        losses.push(train_loss);
        if converged(&losses, cfg.tolerance, cfg.patience) {
            done = true;
            break;
        }
    }
    Ok(FitOutcome {
        best: best.expect("at least one epoch runs"),
        log,
        converged: done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(mrr: f64) -> Metrics {
        Metrics {
            hits1: 0.0,
            hits5: 0.0,
            hits10: 0.0,
            mrr,
            num_targets: 1,
        }
    }

    #[test]
    fn geometric_schedule_with_floor() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 60,
            ..TrainConfig::default()
        };
        let lrs: Vec<f64> = cfg.schedule().collect();
        assert_eq!(lrs.len(), 60);
        assert_eq!(lrs[0], 0.1);
        assert!((lrs[1] - 0.09).abs() < 1e-15);
        assert!((lrs[2] - 0.081).abs() < 1e-15);
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*lrs.last().unwrap(), 0.0005);
    }

    #[test]
    fn worse_epochs_do_not_replace_the_best() {
        let best = metrics(0.6);
        assert!(improves(Selection::Mrr, &metrics(0.1), None));
        assert!(!improves(Selection::Mrr, &metrics(0.5), Some(&best)));
        assert!(!improves(Selection::Mrr, &metrics(0.6), Some(&best)));
        assert!(improves(Selection::Mrr, &metrics(0.61), Some(&best)));
    }

    #[test]
    fn convergence_needs_consecutive_flat_epochs() {
        assert!(!converged(&[1.0, 1.0, 1.0], 1e-5, 3));
        assert!(converged(&[1.0, 1.0, 1.0, 1.0], 1e-5, 3));
        assert!(!converged(&[1.0, 0.5, 0.5, 0.5], 1e-5, 3));
        assert!(converged(&[2.0, 1.0, 1.0, 1.0, 1.0], 1e-5, 3));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            decay: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            min_lr: 0.01,
            learning_rate: 0.005,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
