//! Training loop: Adam on the composite loss with per-step loss logs and
//! per-epoch metrics.

use cdds_compute::{Adam, ComputeError, Graph, ParameterStore};

use crate::data::{batches, Dataset, Role};
use crate::error::{CoreError, Result};
use crate::infer::evaluate;
use crate::metrics::EvalReport;
use crate::model::{forward, losses, Hyperparams, Mode, PairBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seed for batch shuffling; model streams use the store's seed.
    pub seed: u64,
    /// Decision threshold for kappa / F1.
    pub threshold: f64,
    /// Evaluate train and validation metrics every this many epochs
    /// (and always after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 40, batch_size: 128, lr: 1e-3, seed: 0, threshold: 0.5, eval_every: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub batch: usize,
    pub l_tol: f64,
    pub l_suf: f64,
    pub l_ind: f64,
    pub l_inter: f64,
}

impl StepLog {
    pub const HEADER: &'static str = "step,epoch,batch,l_tol,l_suf,l_ind,l_inter";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.step, self.epoch, self.batch, self.l_tol, self.l_suf, self.l_ind, self.l_inter
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train: EvalReport,
    pub valid: Option<EvalReport>,
}

pub struct TrainOutcome {
    pub best: ParameterStore<f32>,
    pub last: ParameterStore<f32>,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

fn numeric(e: ComputeError, epoch: usize, batch: usize) -> CoreError {
    match e {
        ComputeError::NonFinite { .. } => CoreError::NonFiniteLoss { epoch, batch },
        e => e.into(),
    }
}

/// One optimizer step on `batch`; returns `(l_tol, l_suf, l_ind, l_inter)`.
/// Uses and then advances `store.step`.
pub fn train_step(
    store: &mut ParameterStore<f32>,
    adam: &Adam,
    hp: &Hyperparams,
    batch: &PairBatch,
) -> std::result::Result<(f64, f64, f64, f64), ComputeError> {
    let step = store.step;
    let augmented;
    let batch = if hp.symmetrize {
        augmented = batch.with_swapped();
        &augmented
    } else {
        batch
    };
    let mut g = Graph::<f32>::new();
    let mut f = forward(&mut g, store, hp, batch, Mode::Train { step })?;
    let l = losses(&mut g, store, hp, batch, &mut f, step)?;
    let vals = l.values(&g);
    if !vals.0.is_finite() {
        return Err(ComputeError::NonFinite { op: "loss" });
    }
    let grads = g.backward(l.total)?.for_store(store);
    if grads.values().any(|t| !t.is_finite()) {
        return Err(ComputeError::NonFinite { op: "gradient" });
    }
    adam.step(store, &grads)?;
    Ok(vals)
}

/// Trains from `store` on `train` samples, evaluating on `valid` (if any).
/// The best store is chosen by validation (or, without one, training)
/// selection score; ties keep the earlier epoch.
pub fn train(
    ds: &Dataset,
    train_idx: &[usize],
    valid_idx: &[usize],
    hp: &Hyperparams,
    cfg: &TrainConfig,
    mut store: ParameterStore<f32>,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    hp.validate()?;
    let adam = Adam { lr: cfg.lr, ..Adam::default() };
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, ParameterStore<f32>)> = None;
    for epoch in 0..cfg.epochs {
        for (bi, idx) in batches(train_idx, cfg.batch_size, cfg.seed, epoch as u64, Role::Train)?.iter().enumerate() {
            let batch = PairBatch::from_samples(ds, idx, hp.task);
            let step = store.step;
            let (l_tol, l_suf, l_ind, l_inter) = train_step(&mut store, &adam, hp, &batch).map_err(|e| numeric(e, epoch, bi))?;
            let log = StepLog { step, epoch, batch: bi, l_tol, l_suf, l_ind, l_inter };
            on_step(&log);
            steps.push(log);
        }
        let last_epoch = epoch + 1 == cfg.epochs;
        if last_epoch || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            let tr = evaluate(&store, hp, ds, train_idx, cfg.batch_size, cfg.threshold)?;
            let va = if valid_idx.is_empty() {
                None
            } else {
                Some(evaluate(&store, hp, ds, valid_idx, cfg.batch_size, cfg.threshold)?)
            };
            let score = va.as_ref().unwrap_or(&tr).selection_score();
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, store.clone()));
            }
            log::info!("epoch {epoch}: train {:?}", tr.metrics());
            epochs.push(EpochLog { epoch, train: tr, valid: va });
        }
    }
    let best = best.map(|(_, s)| s).unwrap_or_else(|| store.clone());
    Ok(TrainOutcome { best, last: store, steps, epochs })
}
