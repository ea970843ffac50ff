//! The disentanglement model: GIN drug encoder, cross-drug interaction,
//! per-atom causal masks, Set2Set readouts, prediction / independence /
//! intervention heads and the composite loss.

mod blocks;
pub mod check;
mod forward;
mod hyper;

pub use blocks::{
    cell_embedding, disentangle, encode, gin_layer, gumbel_lambda, gumbel_sigmoid, importance_logits, interaction,
    kl_to_uniform, mlp_head, set2set, task_loss, GraphBatch, LOGIT_CLAMP, PROB_CLAMP,
};
pub use forward::{forward, intervention_term, losses, Forward, Losses, Mode, PairBatch};
pub use hyper::{Hyperparams, NoiseMode, Toggles};

use cdds_compute::nn::{init_linear, init_lstm};
use cdds_compute::{rng, ParameterStore, Tensor};
use cdds_chem::{ATOM_FEATURE_DIM, BOND_FEATURE_DIM};

use crate::data::{Normalizer, GENE_COUNT};

/// Hidden width of the cell-line MLP.
pub const CELL_HIDDEN: usize = 256;

/// Creates every parameter for `hp`, drawing weights from the `init` stream
/// of `seed` in a fixed order. Normalization statistics are stored as
/// non-trainable parameters so checkpoints are self-contained.
pub fn init_params(hp: &Hyperparams, seed: u64, norm: &Normalizer) -> ParameterStore<f32> {
    let mut store = ParameterStore::new(seed);
    let r = &mut rng::stream(seed, rng::INIT);
    let d = hp.d;
    init_linear(&mut store, "enc.atom_in", ATOM_FEATURE_DIM, d, r);
    for l in 0..hp.gin_layers {
        init_linear(&mut store, &format!("gin.l{l}.edge"), BOND_FEATURE_DIM, d, r);
        init_linear(&mut store, &format!("gin.l{l}.mlp1"), d, d, r);
        init_linear(&mut store, &format!("gin.l{l}.mlp2"), d, d, r);
        store.init_const(&format!("gin.l{l}.eps"), 1, 0.0);
    }
    init_linear(&mut store, "imp.l1", 2 * d, d, r);
    init_linear(&mut store, "imp.l2", d, 1, r);
    init_lstm(&mut store, "s2s_c.lstm", 4 * d, 2 * d, r);
    init_lstm(&mut store, "s2s_s.lstm", 4 * d, 2 * d, r);
    init_linear(&mut store, "cell.l1", GENE_COUNT, CELL_HIDDEN, r);
    init_linear(&mut store, "cell.l2", CELL_HIDDEN, hp.cell_width, r);
    let pred_in = 8 * d + hp.cell_width;
    init_linear(&mut store, "pred.l1", pred_in, hp.pred_hidden1, r);
    init_linear(&mut store, "pred.l2", hp.pred_hidden1, hp.pred_hidden2, r);
    init_linear(&mut store, "pred.l3", hp.pred_hidden2, 1, r);
    init_linear(&mut store, "ind.l1", pred_in, hp.head_hidden, r);
    init_linear(&mut store, "ind.l2", hp.head_hidden, hp.ind_outputs(), r);
    init_linear(&mut store, "inter.l1", 12 * d + hp.cell_width, hp.head_hidden, r);
    init_linear(&mut store, "inter.l2", hp.head_hidden, 1, r);
    let row = |v: &[f64]| Tensor::matrix(1, v.len(), v.iter().map(|&x| x as f32).collect()).expect("sized");
    store.insert("norm.mean", row(&norm.mean), false);
    store.insert("norm.std", row(&norm.std), false);
    store
}

/// Reads the normalization statistics back out of a store.
pub fn normalizer_of(store: &ParameterStore<f32>) -> Option<Normalizer> {
    let get = |n: &str| store.get(n).map(|t| t.data().iter().map(|&x| x as f64).collect());
    Some(Normalizer { mean: get("norm.mean")?, std: get("norm.std")? })
}
