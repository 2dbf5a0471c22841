//! The training loop: dual-view forward, masked losses, Adam updates, and
//! metric-driven scheduling.

mod adam;
mod schedule;

pub use adam::Adam;
pub use schedule::{EarlyStop, PlateauScheduler};

use crate::data::{batches, AssembledDataset, AugmentationConfig, TrainBatch};
use crate::error::{Error, Result};
use crate::eval::{class_similarity, evaluate, ClassMetrics, SimilarityMatrix};
use crate::loss::{bce_masked, compose, consistency_loss, pseudo_loss, LossBreakdown, SharpenConfig};
use crate::model::ModelState;
use crate::rng::mix;
use crate::tensor::{Tape, Tensor};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub sharpen: SharpenConfig,
    pub augment: AugmentationConfig,
    /// Keep the task encoding frozen at its identity initialization
    /// (the fixed-encoding baseline).
    pub freeze_q: bool,
    pub disable_pseudo: bool,
    pub disable_consist: bool,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 64,
            batch_size: 64,
            seed: 0,
            learning_rate: 2e-4,
            sharpen: SharpenConfig::default(),
            augment: AugmentationConfig::default(),
            freeze_q: false,
            disable_pseudo: false,
            disable_consist: false,
            plateau_factor: 2.0,
            plateau_patience: 5,
            early_stop_patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract(
                "max_epochs and batch_size must be positive",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        self.sharpen.validate()?;
        self.augment.validate()
    }

    /// The tensors the optimizer updates, honoring the freeze flag. The
    /// encoding is the last entry of [`ModelState::parameters`].
    fn trainable(&self, state: &ModelState) -> Vec<Tensor> {
        let mut params = state.parameters();
        if self.freeze_q {
            params.pop();
        }
        params
    }
}

/// One optimization step on one batch.
///
/// Both augmented views run through the same parameters; the strong view is
/// only evaluated when the consistency term can contribute. Gradients are
/// zeroed after the update.
pub fn train_step(
    state: &ModelState,
    opt: &mut Adam,
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let answers_weak = state.answers(&tape, &batch.weak)?;

    let l_bce = bce_masked(&tape, &answers_weak, &batch.mask)?;
    let l_pseudo = if cfg.disable_pseudo {
        Tensor::scalar(0.0)
    } else {
        pseudo_loss(&tape, &answers_weak, &batch.mask, &cfg.sharpen)?
    };
    let consist_active = !cfg.disable_consist && batch.mask.unknown_count() > 0;
    let l_consist = if consist_active {
        let answers_strong = state.answers(&tape, &batch.strong)?;
        consistency_loss(&tape, &answers_strong, &answers_weak, &batch.mask, &cfg.sharpen)?
    } else {
        Tensor::scalar(0.0)
    };

    let breakdown = compose(&tape, l_bce, l_pseudo, l_consist, &batch.mask)?;
    if !breakdown.is_finite() {
        let (l_bce, l_pseudo, l_consist, _) = breakdown.values();
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            l_bce,
            l_pseudo,
            l_consist,
        });
    }

    tape.backward(&breakdown.l_total)?;
    opt.step(&cfg.trainable(state));
    state.zero_grads();
    Ok(breakdown)
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_bce: f64,
    pub l_pseudo: f64,
    pub l_consist: f64,
    pub l_total: f64,
    pub lr: f64,
    pub valid_mauc: f64,
}

/// Everything `fit` observed: the loss curves, the chosen epoch, and the
/// final validation metrics of the restored model.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_mauc: f64,
    pub final_metrics: ClassMetrics,
    pub similarity: SimilarityMatrix,
}

impl RunMetrics {
    /// The per-epoch CSV: `epoch,l_bce,l_pseudo,l_consist,l_total,lr,valid_mauc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_bce,l_pseudo,l_consist,l_total,lr,valid_mauc\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.l_bce, r.l_pseudo, r.l_consist, r.l_total, r.lr, r.valid_mauc
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// True when at least one class of `d` has both an annotated positive and
/// an annotated negative, i.e. a validation mAUC exists.
fn has_evaluable_class(d: &AssembledDataset) -> bool {
    let n = d.union_schema.len();
    (0..n).any(|c| {
        let mut pos = false;
        let mut neg = false;
        for s in &d.samples {
            match s.labels.state(c) {
                crate::data::LabelState::Positive => pos = true,
                crate::data::LabelState::Negative => neg = true,
                crate::data::LabelState::Unknown => {}
            }
            if pos && neg {
                return true;
            }
        }
        false
    })
}

/// Trains for up to `max_epochs`, monitoring validation mAUC for plateau
/// reduction and early stopping, and restores the best-epoch parameters
/// (ties resolve to the earliest epoch) before returning.
pub fn fit(
    state: &ModelState,
    train: &AssembledDataset,
    valid: &AssembledDataset,
    cfg: &TrainConfig,
) -> Result<RunMetrics> {
    cfg.validate()?;
    if valid.is_empty() || !has_evaluable_class(valid) {
        return Err(Error::contract(
            "validation set has no class with both annotated positives and negatives",
        ));
    }
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }

    let mut opt = Adam::new(&cfg.trainable(state), cfg.learning_rate);
    let mut scheduler = PlateauScheduler::new(cfg.plateau_factor, cfg.plateau_patience);
    let mut stopper = EarlyStop::new(cfg.early_stop_patience);

    let mut records = Vec::new();
    let mut best_mauc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_snapshot = state.snapshot();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = mix(cfg.seed, epoch as u64);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut batch_count = 0usize;
        for (batch_idx, batch) in
            batches(train, cfg.batch_size, epoch_seed, &cfg.augment).enumerate()
        {
            let breakdown = train_step(state, &mut opt, &batch, cfg).map_err(|e| match e {
                Error::NonFiniteLoss {
                    l_bce,
                    l_pseudo,
                    l_consist,
                    ..
                } => Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    l_bce,
                    l_pseudo,
                    l_consist,
                },
                other => other,
            })?;
            let (b, p, c, t) = breakdown.values();
            sums = (sums.0 + b, sums.1 + p, sums.2 + c, sums.3 + t);
            batch_count += 1;
        }

        let metrics = evaluate(state, valid)?;
        let mauc = metrics
            .mauc
            .expect("validated evaluable class implies an mAUC");
        let lr = opt.learning_rate();
        let denom = batch_count as f64;
        records.push(EpochRecord {
            epoch,
            l_bce: sums.0 / denom,
            l_pseudo: sums.1 / denom,
            l_consist: sums.2 / denom,
            l_total: sums.3 / denom,
            lr,
            valid_mauc: mauc,
        });

        if mauc > best_mauc {
            best_mauc = mauc;
            best_epoch = epoch;
            best_snapshot = state.snapshot();
        }
        if let Some(new_lr) = scheduler.observe(mauc, lr) {
            opt.set_learning_rate(new_lr);
        }
        if stopper.observe(mauc) {
            break;
        }
    }

    state.restore(&best_snapshot);
    let final_metrics = evaluate(state, valid)?;
    let similarity = class_similarity(state, valid)?;
    Ok(RunMetrics {
        epochs: records,
        best_epoch,
        best_mauc,
        final_metrics,
        similarity,
    })
}
