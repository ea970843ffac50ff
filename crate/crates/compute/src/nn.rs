//! Small composed blocks built from tape primitives.

use crate::error::Result;
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tape::{Graph, Var};

/// `x W + b` with parameters `{prefix}.w` (in × out) and `{prefix}.b` (1 × out).
pub fn linear<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add(xw, b)
}

/// LSTM weights as tape vars: `w_ih` (in × 4h), `w_hh` (h × 4h), `b` (1 × 4h),
/// gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
}

impl LstmWeights {
    pub fn bind<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, prefix: &str) -> Result<Self> {
        Ok(LstmWeights {
            w_ih: g.param(store, &format!("{prefix}.w_ih"))?,
            w_hh: g.param(store, &format!("{prefix}.w_hh"))?,
            b: g.param(store, &format!("{prefix}.b"))?,
        })
    }
}

/// One LSTM step on a batch of rows; returns `(h', c')`.
pub fn lstm_cell<T: Scalar>(g: &mut Graph<T>, w: LstmWeights, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hid = g.shape(h).1;
    let a = g.matmul(x, w.w_ih)?;
    let bh = g.matmul(h, w.w_hh)?;
    let s = g.add(a, bh)?;
    let gates = g.add(s, w.b)?;
    let i = g.slice_cols(gates, 0, hid)?;
    let f = g.slice_cols(gates, hid, 2 * hid)?;
    let gg = g.slice_cols(gates, 2 * hid, 3 * hid)?;
    let o = g.slice_cols(gates, 3 * hid, 4 * hid)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let gg = g.tanh(gg)?;
    let o = g.sigmoid(o)?;
    let fc = g.mul(f, c)?;
    let ig = g.mul(i, gg)?;
    let c2 = g.add(fc, ig)?;
    let tc = g.tanh(c2)?;
    let h2 = g.mul(o, tc)?;
    Ok((h2, c2))
}

/// Initializes LSTM parameters under `prefix` (forget-gate bias 1).
pub fn init_lstm<T: Scalar, R: rand::Rng>(store: &mut ParameterStore<T>, prefix: &str, input: usize, hidden: usize, rng: &mut R) {
    store.init_glorot(&format!("{prefix}.w_ih"), input, 4 * hidden, rng);
    store.init_glorot(&format!("{prefix}.w_hh"), hidden, 4 * hidden, rng);
    let mut b = vec![T::zero(); 4 * hidden];
    for v in &mut b[hidden..2 * hidden] {
        *v = T::one();
    }
    store.insert(format!("{prefix}.b"), crate::Tensor::matrix(1, 4 * hidden, b).expect("sized"), true);
}

/// Initializes a linear layer under `prefix` (Glorot weights, zero bias).
pub fn init_linear<T: Scalar, R: rand::Rng>(store: &mut ParameterStore<T>, prefix: &str, input: usize, output: usize, rng: &mut R) {
    store.init_glorot(&format!("{prefix}.w"), input, output, rng);
    store.init_const(&format!("{prefix}.b"), output, 0.0);
}
