//! Batched forward pass and composite loss.
//!
//! All samples of a batch share one tape. Unique drugs are encoded once as
//! a disjoint union; each sample then contributes two row segments (drug A
//! at `2i`, drug B at `2i + 1`) to the stacked `H`, so masking and readout
//! run as single segment-wise ops.
//!
//! Randomness per training step comes from `indexed_stream(seed, name,
//! step)` for `gumbel`, `noise`, `dropout` and `permute`; the main pass
//! draws first and the intervention pass continues the same streams.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cdds_chem::MolecularGraph;
use cdds_compute::{rng, ComputeError, Graph, ParameterStore, Result, Scalar, Tensor, Var};

use super::blocks::{
    cell_embedding, disentangle, encode, gumbel_lambda, importance_logits, interaction, kl_to_uniform, mlp_head,
    set2set, task_loss, GraphBatch, PROB_CLAMP,
};
use super::hyper::{Hyperparams, NoiseMode};
use crate::data::{Dataset, Normalizer};
use crate::metrics::Task;

/// Drug pairs with cell expression and targets, drugs deduplicated.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pub drugs: Vec<&'a MolecularGraph>,
    /// `(a, b)` indices into `drugs`.
    pub pairs: Vec<(usize, usize)>,
    /// `log2(tpm + 1)` expression per sample.
    pub cells: Vec<&'a [f64]>,
    /// Labels (0/1) or scores, depending on the task.
    pub targets: Vec<f64>,
}

impl<'a> PairBatch<'a> {
    pub fn from_samples(ds: &'a Dataset, indices: &[usize], task: Task) -> Self {
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let mut drugs = Vec::new();
        let mut id = |d: usize, drugs: &mut Vec<&'a MolecularGraph>| {
            *local.entry(d).or_insert_with(|| {
                drugs.push(&ds.drugs[d].graph);
                drugs.len() - 1
            })
        };
        let mut pairs = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = &ds.samples[i];
            let a = id(s.a, &mut drugs);
            let b = id(s.b, &mut drugs);
            pairs.push((a, b));
        }
        let samples = indices.iter().map(|&i| &ds.samples[i]);
        PairBatch {
            drugs,
            pairs,
            cells: samples.clone().map(|s| ds.cells[s.cell].log_expression.as_slice()).collect(),
            targets: samples
                .map(|s| match task {
                    Task::Classification => s.label as f64,
                    Task::Regression => s.score,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same samples with drug order reversed.
    pub fn swapped(&self) -> Self {
        PairBatch { pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(), ..self.clone() }
    }

    /// This batch followed by its swapped copy.
    pub fn with_swapped(&self) -> Self {
        let mut out = self.clone();
        out.pairs.extend(self.pairs.iter().map(|&(a, b)| (b, a)));
        out.cells.extend(self.cells.iter().copied());
        out.targets.extend(self.targets.iter().copied());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stochastic masks, noise and dropout drawn for this optimizer step.
    Train { step: u64 },
    /// Deterministic masks; `ε` per the configured noise mode.
    Eval,
}

/// Tape handles produced by [`forward`].
pub struct Forward {
    /// Prediction-head output (logits or regression scores), B × 1.
    pub out: Var,
    /// Per-drug encoder outputs, indexed like `PairBatch::drugs`.
    pub xs: Vec<Var>,
    /// Stacked `H` rows and their segment ids.
    pub h: Var,
    pub seg: Vec<usize>,
    /// Importance logits and probabilities per stacked row.
    pub s: Var,
    pub p: Var,
    /// `None` when disentanglement is off.
    pub lambda: Option<Var>,
    pub c: Var,
    pub spurious: Option<Var>,
    pub z_c1: Var,
    pub z_c2: Var,
    pub z_cell: Var,
    pub z_s1: Option<Var>,
    pub z_s2: Option<Var>,
    pub ind_out: Option<Var>,
    gumbel: Option<ChaCha8Rng>,
}

impl Forward {
    /// Rows of `H` belonging to each segment.
    pub fn segment_rows(&self, segment: usize) -> Vec<usize> {
        self.seg.iter().enumerate().filter(|(_, &s)| s == segment).map(|(i, _)| i).collect()
    }
}

/// Loss components; `None` for terms that are switched off.
pub struct Losses {
    pub total: Var,
    pub suf: Option<Var>,
    pub ind: Option<Var>,
    pub inter: Option<Var>,
}

impl Losses {
    /// Component values as `(l_tol, l_suf, l_ind, l_inter)`, 0 when off.
    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> (f64, f64, f64, f64) {
        let v = |x: Option<Var>| x.map_or(0.0, |x| Scalar::to_f64(g.scalar(x)));
        (v(Some(self.total)), v(self.suf), v(self.ind), v(self.inter))
    }
}

fn even_odd(n: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).map(|i| 2 * i).collect(), (0..n).map(|i| 2 * i + 1).collect())
}

/// Pairs drug encodings and stacks `H` with segment ids.
fn stack_pairs<T: Scalar>(g: &mut Graph<T>, xs: &[Var], pairs: &[(usize, usize)]) -> Result<(Var, Vec<usize>)> {
    let mut parts = Vec::with_capacity(2 * pairs.len());
    let mut seg = Vec::new();
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let (_, h1, h2) = interaction(g, xs[a], xs[b])?;
        seg.extend(std::iter::repeat_n(2 * i, g.shape(h1).0));
        seg.extend(std::iter::repeat_n(2 * i + 1, g.shape(h2).0));
        parts.push(h1);
        parts.push(h2);
    }
    Ok((g.concat_rows(&parts)?, seg))
}

fn logit_uniforms<T: Scalar>(g: &mut Graph<T>, n: usize, r: &mut ChaCha8Rng) -> Result<Var> {
    let lu: Vec<T> = (0..n)
        .map(|_| {
            let u: f64 = r.random::<f64>().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            <T as Scalar>::from_f64((u / (1.0 - u)).ln())
        })
        .collect();
    g.constant(Tensor::matrix(n, 1, lu)?)
}

/// Per-segment mean and population std of `H` rows, as plain values.
fn segment_stats<T: Scalar>(h: &Tensor<T>, seg: &[usize], n_seg: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let w = h.cols();
    let mut mean = vec![vec![0.0; w]; n_seg];
    let mut count = vec![0usize; n_seg];
    for (i, &s) in seg.iter().enumerate() {
        count[s] += 1;
        for (m, &x) in mean[s].iter_mut().zip(h.row(i)) {
            *m += Scalar::to_f64(x);
        }
    }
    for (m, &c) in mean.iter_mut().zip(&count) {
        m.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    let mut var = vec![vec![0.0; w]; n_seg];
    for (i, &s) in seg.iter().enumerate() {
        for ((v, &x), m) in var[s].iter_mut().zip(h.row(i)).zip(&mean[s]) {
            let dx = Scalar::to_f64(x) - m;
            *v += dx * dx;
        }
    }
    let std = var
        .into_iter()
        .zip(&count)
        .map(|(v, &c)| v.into_iter().map(|v| (v / c.max(1) as f64).sqrt()).collect())
        .collect();
    (mean, std)
}

/// Normalized expression rows as a constant.
fn cell_input<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, cells: &[&[f64]]) -> Result<Var> {
    let stat = |name: &str| -> Result<Vec<f64>> {
        Ok(store
            .get(name)
            .ok_or_else(|| ComputeError::UnknownParameter(name.into()))?
            .data()
            .iter()
            .map(|&x| Scalar::to_f64(x))
            .collect())
    };
    let norm = Normalizer { mean: stat("norm.mean")?, std: stat("norm.std")? };
    let width = norm.mean.len();
    let mut data = Vec::with_capacity(cells.len() * width);
    for c in cells {
        if c.len() != width {
            return Err(ComputeError::ShapeMismatch { op: "cell_input", detail: format!("{} genes, expected {width}", c.len()) });
        }
        data.extend(norm.apply(c).into_iter().map(T::from_f64));
    }
    g.constant(Tensor::matrix(cells.len(), width, data)?)
}

pub fn forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    hp: &Hyperparams,
    batch: &PairBatch,
    mode: Mode,
) -> Result<Forward> {
    let b = batch.len();
    if b == 0 {
        return Err(ComputeError::ShapeMismatch { op: "forward", detail: "empty batch".into() });
    }
    let gb = GraphBatch::<T>::new(&batch.drugs);
    let nodes = encode(g, store, hp.gin_layers, &gb)?;
    let xs = gb
        .offsets
        .iter()
        .zip(&gb.sizes)
        .map(|(&o, &n)| g.slice_rows(nodes, o, o + n))
        .collect::<Result<Vec<_>>>()?;
    let (h, seg) = stack_pairs(g, &xs, &batch.pairs)?;
    let n_seg = 2 * b;
    let s = importance_logits(g, store, h)?;
    let p = g.sigmoid(s)?;

    let seed = store.seed;
    let mut gumbel = None;
    let (lambda, c, spurious) = if hp.toggles.disentangle {
        let n = seg.len();
        let (lambda, eps) = match mode {
            Mode::Train { step } => {
                let mut gr = rng::indexed_stream(seed, rng::GUMBEL, step);
                let lu = logit_uniforms(g, n, &mut gr)?;
                gumbel = Some(gr);
                let lambda = gumbel_lambda(g, s, Some(lu), hp.temperature)?;
                let (mean, std) = segment_stats(g.value(h), &seg, n_seg);
                let mut nr = rng::indexed_stream(seed, rng::NOISE, step);
                let w = g.shape(h).1;
                let mut eps = Vec::with_capacity(n * w);
                for &sg in &seg {
                    for j in 0..w {
                        let z: f64 = nr.sample(StandardNormal);
                        eps.push(T::from_f64(mean[sg][j] + std[sg][j] * z));
                    }
                }
                (lambda, Some(g.constant(Tensor::matrix(n, w, eps)?)?))
            }
            Mode::Eval => {
                let lambda = gumbel_lambda(g, s, None, hp.temperature)?;
                let eps = match hp.eval_noise {
                    NoiseMode::Zero => None,
                    NoiseMode::Mean => {
                        let (mean, _) = segment_stats(g.value(h), &seg, n_seg);
                        let w = g.shape(h).1;
                        let data = seg.iter().flat_map(|&sg| mean[sg].iter().map(|&m| T::from_f64(m))).collect();
                        Some(g.constant(Tensor::matrix(n, w, data)?)?)
                    }
                };
                (lambda, eps)
            }
        };
        let (c, sp) = disentangle(g, h, lambda, eps)?;
        (Some(lambda), c, Some(sp))
    } else {
        (None, h, None)
    };

    let (even, odd) = even_odd(b);
    let zc = set2set(g, store, "s2s_c", c, &seg, n_seg, hp.set2set_steps)?;
    let z_c1 = g.gather_rows(zc, &even)?;
    let z_c2 = g.gather_rows(zc, &odd)?;
    let xc = cell_input(g, store, &batch.cells)?;
    let z_cell = cell_embedding(g, store, xc)?;
    let pred_in = g.concat_cols(&[z_c1, z_c2, z_cell])?;
    let out = match mode {
        Mode::Train { step } if hp.dropout > 0.0 => {
            let mut dr = rng::indexed_stream(seed, rng::DROPOUT, step);
            mlp_head(g, store, "pred", 3, pred_in, Some((hp.dropout, &mut dr)))?
        }
        _ => mlp_head::<T, ChaCha8Rng>(g, store, "pred", 3, pred_in, None)?,
    };

    let (z_s1, z_s2, ind_out) = match spurious {
        Some(sp) => {
            let zs = set2set(g, store, "s2s_s", sp, &seg, n_seg, hp.set2set_steps)?;
            let z_s1 = g.gather_rows(zs, &even)?;
            let z_s2 = g.gather_rows(zs, &odd)?;
            let ind_in = g.concat_cols(&[z_s1, z_s2, z_cell])?;
            let ind = mlp_head::<T, ChaCha8Rng>(g, store, "ind", 2, ind_in, None)?;
            (Some(z_s1), Some(z_s2), Some(ind))
        }
        None => (None, None, None),
    };

    Ok(Forward { out, xs, h, seg, s, p, lambda, c, spurious, z_c1, z_c2, z_cell, z_s1, z_s2, ind_out, gumbel })
}

/// Builds the enabled loss terms for a training-mode forward pass.
pub fn losses<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    hp: &Hyperparams,
    batch: &PairBatch,
    fwd: &mut Forward,
    step: u64,
) -> Result<Losses> {
    let t = &hp.toggles;
    let y = &batch.targets;
    let suf = if t.sufficiency { Some(task_loss(g, fwd.out, y, hp.task)?) } else { None };
    let ind = match (t.use_independence(), fwd.ind_out) {
        (true, Some(ind)) => Some(match hp.task {
            Task::Classification => kl_to_uniform(g, ind)?,
            Task::Regression => {
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                task_loss(g, ind, &vec![mean; y.len()], Task::Regression)?
            }
        }),
        _ => None,
    };
    let inter = if t.use_intervention() && hp.permutations > 0 {
        Some(intervention_loss(g, store, hp, batch, fwd, step)?)
    } else {
        None
    };
    let terms: Vec<Var> = [suf, ind, inter].into_iter().flatten().collect();
    let total = match terms.split_first() {
        None => g.constant(Tensor::scalar(T::zero()))?,
        Some((&first, rest)) => rest.iter().try_fold(first, |acc, &v| g.add(acc, v))?,
    };
    Ok(Losses { total, suf, ind, inter })
}

/// Re-pairs drug A of sample `i` with drug B of sample `π(i)` for `K`
/// random permutations, mean-pools the re-paired spurious parts, and scores
/// `[z_C1 ‖ z_C2 ‖ z_S̃1 ‖ z_S̃2 ‖ z_cell]` against sample `i`'s target.
fn intervention_loss<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    hp: &Hyperparams,
    batch: &PairBatch,
    fwd: &mut Forward,
    step: u64,
) -> Result<Var> {
    let b = batch.len();
    let mut pr = rng::indexed_stream(store.seed, rng::PERMUTE, step);
    let mut per_perm = Vec::with_capacity(hp.permutations);
    for _ in 0..hp.permutations {
        let mut pi: Vec<usize> = (0..b).collect();
        pi.shuffle(&mut pr);
        let pairs: Vec<(usize, usize)> = (0..b).map(|i| (batch.pairs[i].0, batch.pairs[pi[i]].1)).collect();
        per_perm.push(intervention_term(g, store, hp, batch, fwd, &pairs)?);
    }
    let sum = per_perm[1..].iter().try_fold(per_perm[0], |acc, &v| g.add(acc, v))?;
    g.scale(sum, 1.0 / per_perm.len() as f64)
}

/// Intervention loss for one explicit re-pairing (indices into the batch's
/// drug list, one pair per sample).
pub fn intervention_term<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    hp: &Hyperparams,
    batch: &PairBatch,
    fwd: &mut Forward,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let b = pairs.len();
    let (h, seg) = stack_pairs(g, &fwd.xs, pairs)?;
    let s = importance_logits(g, store, h)?;
    let lu = match fwd.gumbel.as_mut() {
        Some(r) => Some(logit_uniforms(g, seg.len(), r)?),
        None => None,
    };
    let lambda = gumbel_lambda(g, s, lu, hp.temperature)?;
    let rest = g.one_minus(lambda)?;
    let sp = g.mul(h, rest)?;
    let pooled = g.segment_mean(sp, &seg, 2 * b)?;
    let (even, odd) = even_odd(b);
    let zs1 = g.gather_rows(pooled, &even)?;
    let zs2 = g.gather_rows(pooled, &odd)?;
    let x = g.concat_cols(&[fwd.z_c1, fwd.z_c2, zs1, zs2, fwd.z_cell])?;
    let out = mlp_head::<T, ChaCha8Rng>(g, store, "inter", 2, x, None)?;
    task_loss(g, out, &batch.targets, hp.task)
}
