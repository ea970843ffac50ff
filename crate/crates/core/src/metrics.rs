//! Evaluation metrics: AUC, average precision, Cohen's kappa and F1 for
//! classification; RMSE, MAE, Pearson r and R² for regression.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalReport {
    Classification { n: usize, threshold: f64, auc: f64, aupr: f64, kappa: f64, f1: f64 },
    Regression { n: usize, rmse: f64, mae: f64, pcc: f64, r2: f64 },
}

impl EvalReport {
    pub fn task(&self) -> Task {
        match self {
            EvalReport::Classification { .. } => Task::Classification,
            EvalReport::Regression { .. } => Task::Regression,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            EvalReport::Classification { n, .. } | EvalReport::Regression { n, .. } => n,
        }
    }

    /// `(name, value)` in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        match *self {
            EvalReport::Classification { auc, aupr, kappa, f1, .. } => {
                vec![("auc", auc), ("aupr", aupr), ("kappa", kappa), ("f1", f1)]
            }
            EvalReport::Regression { rmse, mae, pcc, r2, .. } => {
                vec![("rmse", rmse), ("mae", mae), ("pcc", pcc), ("r2", r2)]
            }
        }
    }

    /// Model-selection score, larger is better (AUC, or −RMSE).
    pub fn selection_score(&self) -> f64 {
        match *self {
            EvalReport::Classification { auc, .. } => auc,
            EvalReport::Regression { rmse, .. } => -rmse,
        }
    }

    /// `metric,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.metrics() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    /// `key = value` block for run logs.
    pub fn to_kv(&self) -> String {
        let mut s = format!("n = {}\n", self.n());
        if let EvalReport::Classification { threshold, .. } = self {
            s.push_str(&format!("threshold = {threshold}\n"));
        }
        for (k, v) in self.metrics() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CoreError::LengthMismatch(a, b));
    }
    if a < 2 {
        return Err(CoreError::Invalid(format!("need at least 2 samples, got {a}")));
    }
    Ok(())
}

/// Ranks 1..=n with ties given their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney AUC with tied scores counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(CoreError::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over distinct score thresholds,
/// highest first.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(CoreError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Confusion counts `(tp, fp, fn, tn)` for predictions `score ≥ threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

pub fn kappa_from_confusion((tp, fp, fn_, tn): (usize, usize, usize, usize)) -> f64 {
    let n = (tp + fp + fn_ + tn) as f64;
    let po = (tp + tn) as f64 / n;
    let pe = ((tp + fp) as f64 * (tp + fn_) as f64 + (fn_ + tn) as f64 * (fp + tn) as f64) / (n * n);
    if pe >= 1.0 {
        return if po >= 1.0 { 1.0 } else { 0.0 };
    }
    (po - pe) / (1.0 - pe)
}

pub fn f1_from_confusion((tp, fp, fn_, _): (usize, usize, usize, usize)) -> f64 {
    let d = 2 * tp + fp + fn_;
    if d == 0 {
        0.0
    } else {
        2.0 * tp as f64 / d as f64
    }
}

pub fn classification_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    let auc = roc_auc(scores, labels)?;
    let aupr = average_precision(scores, labels)?;
    let c = confusion(scores, labels, threshold);
    Ok(EvalReport::Classification {
        n: scores.len(),
        threshold,
        auc,
        aupr,
        kappa: kappa_from_confusion(c),
        f1: f1_from_confusion(c),
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson correlation; 0 when the predictions are constant.
pub fn pearson(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(preds.len(), targets.len())?;
    let (mp, mt) = (mean(preds), mean(targets));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &t) in preds.iter().zip(targets) {
        sxy += (p - mp) * (t - mt);
        sxx += (p - mp) * (p - mp);
        syy += (t - mt) * (t - mt);
    }
    if syy == 0.0 {
        return Err(CoreError::ZeroVariance);
    }
    if sxx == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn regression_metrics(preds: &[f64], targets: &[f64]) -> Result<EvalReport> {
    check_lengths(preds.len(), targets.len())?;
    let n = preds.len() as f64;
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let sae: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    let mt = mean(targets);
    let sst: f64 = targets.iter().map(|t| (t - mt) * (t - mt)).sum();
    if sst == 0.0 {
        return Err(CoreError::ZeroVariance);
    }
    Ok(EvalReport::Regression {
        n: preds.len(),
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        pcc: pearson(preds, targets)?,
        r2: 1.0 - sse / sst,
    })
}

/// Mean and population standard deviation per metric across reports of one
/// task, in [`EvalReport::metrics`] order.
pub fn summarize(reports: &[EvalReport]) -> Vec<(&'static str, f64, f64)> {
    let Some(first) = reports.first() else { return Vec::new() };
    first
        .metrics()
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let vals: Vec<f64> = reports.iter().map(|r| r.metrics()[k].1).collect();
            let m = mean(&vals);
            let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt();
            (*name, m, sd)
        })
        .collect()
}
