//! Model building blocks, generic over precision so the same code runs in
//! 32-bit training and 64-bit gradient checks.

use cdds_chem::{MolecularGraph, ATOM_FEATURE_DIM, BOND_FEATURE_DIM};
use cdds_compute::nn::{linear, lstm_cell, LstmWeights};
use cdds_compute::{ParameterStore, Result, Scalar, Tensor, Graph, Var};

use crate::metrics::Task;

/// Clamp applied to importances and Gumbel uniforms.
pub const PROB_CLAMP: f64 = 1e-6;
/// `logit(1 − PROB_CLAMP)`: the equivalent clamp on logits.
pub const LOGIT_CLAMP: f64 = 13.815_509_557_963_774;

fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (p / (1.0 - p)).ln()
}

/// Relaxed Bernoulli sample `σ((logit p + logit u) / t)`; pass `u = 0.5`
/// for the noiseless evaluation value.
pub fn gumbel_sigmoid(p: f64, t: f64, u: f64) -> f64 {
    let z = (logit(p) + logit(u)) / t;
    1.0 / (1.0 + (-z).exp())
}

/// Disjoint union of several molecules with edges in both directions.
#[derive(Debug, Clone)]
pub struct GraphBatch<T> {
    pub atoms: Tensor<T>,
    pub edges: Tensor<T>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// First row of each molecule.
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl<T: Scalar> GraphBatch<T> {
    pub fn new(mols: &[&MolecularGraph]) -> Self {
        let n: usize = mols.iter().map(|m| m.num_atoms()).sum();
        let m: usize = mols.iter().map(|m| m.num_bonds()).sum();
        let mut atoms = Vec::with_capacity(n * ATOM_FEATURE_DIM);
        let mut edges = Vec::with_capacity(2 * m * BOND_FEATURE_DIM);
        let (mut src, mut dst) = (Vec::with_capacity(2 * m), Vec::with_capacity(2 * m));
        let (mut offsets, mut sizes) = (Vec::new(), Vec::new());
        let mut off = 0;
        for mol in mols {
            atoms.extend(mol.atom_features.data.iter().map(|&x| T::from_f64(x as f64)));
            for (k, bond) in mol.bonds.iter().enumerate() {
                let row = mol.bond_features.row(k);
                for (s, t) in [(bond.begin, bond.end), (bond.end, bond.begin)] {
                    src.push(off + s);
                    dst.push(off + t);
                    edges.extend(row.iter().map(|&x| T::from_f64(x as f64)));
                }
            }
            offsets.push(off);
            sizes.push(mol.num_atoms());
            off += mol.num_atoms();
        }
        GraphBatch {
            atoms: Tensor::matrix(n, ATOM_FEATURE_DIM, atoms).expect("sized"),
            edges: Tensor::matrix(src.len(), BOND_FEATURE_DIM, edges).expect("sized"),
            src,
            dst,
            offsets,
            sizes,
        }
    }
}

/// One GINE layer:
/// `h ← ReLU(MLP((1 + ε)·h + Σ_{j→i} ReLU(h_j + W_e e_ji)))`
/// with a two-layer ReLU MLP. `e` holds one row per directed edge.
pub fn gin_layer<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    layer: usize,
    h: Var,
    e: Var,
    src: &[usize],
    dst: &[usize],
) -> Result<Var> {
    let n = g.shape(h).0;
    let eps = g.param(store, &format!("gin.l{layer}.eps"))?;
    let eh = g.mul(h, eps)?;
    let mut z = g.add(h, eh)?;
    if !src.is_empty() {
        let we = linear(g, store, &format!("gin.l{layer}.edge"), e)?;
        let hj = g.gather_rows(h, src)?;
        let msg = g.add(hj, we)?;
        let msg = g.relu(msg)?;
        let agg = g.scatter_add_rows(msg, dst, n)?;
        z = g.add(z, agg)?;
    }
    let a = linear(g, store, &format!("gin.l{layer}.mlp1"), z)?;
    let a = g.relu(a)?;
    let b = linear(g, store, &format!("gin.l{layer}.mlp2"), a)?;
    g.relu(b)
}

/// Encodes every molecule of `batch`; returns the stacked node matrix.
pub fn encode<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, layers: usize, batch: &GraphBatch<T>) -> Result<Var> {
    let x = g.constant(batch.atoms.clone())?;
    let e = g.constant(batch.edges.clone())?;
    let mut h = linear(g, store, "enc.atom_in", x)?;
    for l in 0..layers {
        h = gin_layer(g, store, l, h, e, &batch.src, &batch.dst)?;
    }
    Ok(h)
}

/// Interaction map `I = cos(X1, X2)` and the concatenations
/// `H1 = X1 ‖ I·X2`, `H2 = X2 ‖ Iᵀ·X1`.
pub fn interaction<T: Scalar>(g: &mut Graph<T>, x1: Var, x2: Var) -> Result<(Var, Var, Var)> {
    let i = g.cosine_map(x1, x2)?;
    let e1 = g.matmul(i, x2)?;
    let it = g.transpose(i)?;
    let e2 = g.matmul(it, x1)?;
    let h1 = g.concat_cols(&[x1, e1])?;
    let h2 = g.concat_cols(&[x2, e2])?;
    Ok((i, h1, h2))
}

/// Importance logits `s` (n × 1), with `p = σ(s)`.
pub fn importance_logits<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, h: Var) -> Result<Var> {
    let a = linear(g, store, "imp.l1", h)?;
    let a = g.relu(a)?;
    linear(g, store, "imp.l2", a)
}

/// `λ = σ((clamp(s) + logit u) / t)`; `logit_u = None` gives the noiseless
/// evaluation mask.
pub fn gumbel_lambda<T: Scalar>(g: &mut Graph<T>, s: Var, logit_u: Option<Var>, t: f64) -> Result<Var> {
    let mut z = g.clamp(s, -LOGIT_CLAMP, LOGIT_CLAMP)?;
    if let Some(lu) = logit_u {
        z = g.add(z, lu)?;
    }
    let z = g.scale(z, 1.0 / t)?;
    g.sigmoid(z)
}

/// `C = λ·H + (1 − λ)·ε`, `S = (1 − λ)·H`, with `λ` a column broadcast over
/// features and `ε = 0` when absent.
pub fn disentangle<T: Scalar>(g: &mut Graph<T>, h: Var, lambda: Var, eps: Option<Var>) -> Result<(Var, Var)> {
    let keep = g.mul(h, lambda)?;
    let rest = g.one_minus(lambda)?;
    let s = g.mul(h, rest)?;
    let c = match eps {
        Some(e) => {
            let noise = g.mul(e, rest)?;
            g.add(keep, noise)?
        }
        None => keep,
    };
    Ok((c, s))
}

/// Batched Set2Set over row segments of `m` (n × w); returns
/// `n_seg × 2w` readouts `q* = q ‖ r`.
pub fn set2set<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    m: Var,
    seg: &[usize],
    n_seg: usize,
    steps: usize,
) -> Result<Var> {
    let w = g.shape(m).1;
    let lstm = LstmWeights::bind(g, store, &format!("{prefix}.lstm"))?;
    let mut q_star = g.constant(Tensor::zeros(&[n_seg, 2 * w]))?;
    let mut h = g.constant(Tensor::zeros(&[n_seg, w]))?;
    let mut c = g.constant(Tensor::zeros(&[n_seg, w]))?;
    for _ in 0..steps {
        (h, c) = lstm_cell(g, lstm, q_star, h, c)?;
        let q_rows = g.gather_rows(h, seg)?;
        let prod = g.mul(m, q_rows)?;
        let e = g.sum_cols(prod)?;
        let alpha = g.segment_softmax(e, seg, n_seg)?;
        let weighted = g.mul(m, alpha)?;
        let r = g.scatter_add_rows(weighted, seg, n_seg)?;
        q_star = g.concat_cols(&[h, r])?;
    }
    Ok(q_star)
}

/// Two-layer cell-line embedding of normalized expression rows.
pub fn cell_embedding<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
    let a = linear(g, store, "cell.l1", x)?;
    let a = g.relu(a)?;
    let b = linear(g, store, "cell.l2", a)?;
    g.relu(b)
}

/// ReLU MLP over the layers `{prefix}.l1 … {prefix}.l{n}`, with dropout
/// after every hidden layer when `dropout` is given.
pub fn mlp_head<T: Scalar, R: rand::Rng>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    n_layers: usize,
    x: Var,
    mut dropout: Option<(f64, &mut R)>,
) -> Result<Var> {
    let mut h = x;
    for l in 1..=n_layers {
        h = linear(g, store, &format!("{prefix}.l{l}"), h)?;
        if l < n_layers {
            h = g.relu(h)?;
            if let Some((rate, r)) = dropout.as_mut() {
                h = g.dropout(h, *rate, *r)?;
            }
        }
    }
    Ok(h)
}

/// Mean over rows of `KL(softmax(z) ‖ uniform) = Σ p log p + log k`.
pub fn kl_to_uniform<T: Scalar>(g: &mut Graph<T>, logits: Var) -> Result<Var> {
    let (n, k) = g.shape(logits);
    let p = g.softmax_rows(logits)?;
    let lp = g.log(p)?;
    let plp = g.mul(p, lp)?;
    let s = g.sum_all(plp)?;
    let m = g.scale(s, 1.0 / n as f64)?;
    g.add_scalar(m, (k as f64).ln())
}

/// Mean BCE on logits, or mean squared error for regression.
pub fn task_loss<T: Scalar>(g: &mut Graph<T>, out: Var, targets: &[f64], task: Task) -> Result<Var> {
    let y: Vec<T> = targets.iter().map(|&v| T::from_f64(v)).collect();
    match task {
        Task::Classification => g.bce_with_logits(out, &y),
        Task::Regression => {
            let t = g.constant(Tensor::matrix(y.len(), 1, y)?)?;
            let diff = g.sub(out, t)?;
            let sq = g.mul(diff, diff)?;
            g.mean_all(sq)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gumbel_examples() {
        assert_eq!(gumbel_sigmoid(0.5, 0.3, 0.5), 0.5);
        assert!((gumbel_sigmoid(0.9, 1.0, 0.5) - 0.9).abs() < 1e-12);
        assert!((LOGIT_CLAMP - logit(1.0 - PROB_CLAMP)).abs() < 1e-9);
    }
}
