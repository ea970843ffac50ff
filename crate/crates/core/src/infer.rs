//! Deterministic inference: predictions, evaluation and per-atom importances.

use cdds_compute::{Graph, ParameterStore};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::metrics::{classification_metrics, regression_metrics, EvalReport, Task};
use crate::model::{forward, Hyperparams, Mode, PairBatch};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn batch_outputs(store: &ParameterStore<f32>, hp: &Hyperparams, batch: &PairBatch) -> Result<Vec<f64>> {
    let mut g = Graph::<f32>::new();
    let f = forward(&mut g, store, hp, batch, Mode::Eval)?;
    Ok(g.value(f.out)
        .data()
        .iter()
        .map(|&x| {
            let x = x as f64;
            match hp.task {
                Task::Classification => sigmoid(x),
                Task::Regression => x,
            }
        })
        .collect())
}

/// Probabilities (classification) or scores (regression) for each pair.
/// With `symmetrize`, the two drug orders are averaged.
pub fn predict_batch(store: &ParameterStore<f32>, hp: &Hyperparams, batch: &PairBatch) -> Result<Vec<f64>> {
    let fwd = batch_outputs(store, hp, batch)?;
    if !hp.symmetrize {
        return Ok(fwd);
    }
    let rev = batch_outputs(store, hp, &batch.swapped())?;
    Ok(fwd.iter().zip(&rev).map(|(a, b)| (a + b) / 2.0).collect())
}

/// Predictions for dataset samples, evaluated in chunks of `batch_size`.
pub fn predict(
    store: &ParameterStore<f32>,
    hp: &Hyperparams,
    ds: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        out.extend(predict_batch(store, hp, &PairBatch::from_samples(ds, chunk, hp.task))?);
    }
    Ok(out)
}

/// Metrics of the model on the given samples.
pub fn evaluate(
    store: &ParameterStore<f32>,
    hp: &Hyperparams,
    ds: &Dataset,
    indices: &[usize],
    batch_size: usize,
    threshold: f64,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(CoreError::EmptySelection);
    }
    let preds = predict(store, hp, ds, indices, batch_size)?;
    match hp.task {
        Task::Classification => {
            let labels: Vec<u8> = indices.iter().map(|&i| ds.samples[i].label).collect();
            classification_metrics(&preds, &labels, threshold)
        }
        Task::Regression => {
            let y: Vec<f64> = indices.iter().map(|&i| ds.samples[i].score).collect();
            regression_metrics(&preds, &y)
        }
    }
}

/// Per-atom importances `p` for drug A and drug B of each pair (atom order
/// of the parsed molecules). With `symmetrize`, both orders are averaged.
pub fn explain_batch(store: &ParameterStore<f32>, hp: &Hyperparams, batch: &PairBatch) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let run = |b: &PairBatch| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut g = Graph::<f32>::new();
        let f = forward(&mut g, store, hp, b, Mode::Eval)?;
        let p = g.value(f.p).data();
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); 2 * b.len()];
        for (i, &s) in f.seg.iter().enumerate() {
            rows[s].push(p[i] as f64);
        }
        let mut it = rows.into_iter();
        Ok(std::iter::from_fn(|| Some((it.next()?, it.next()?))).collect())
    };
    let fwd = run(batch)?;
    if !hp.symmetrize {
        return Ok(fwd);
    }
    let rev = run(&batch.swapped())?;
    let avg = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a + b) / 2.0).collect();
    Ok(fwd.iter().zip(&rev).map(|((a, b), (rb, ra))| (avg(a, ra), avg(b, rb))).collect())
}
