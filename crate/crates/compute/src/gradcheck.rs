//! Finite-difference verification of reverse-mode gradients.
//!
//! A vector-valued function is reduced to the scalar `Σ R ⊙ f(x)` with a fixed
//! random cotangent `R`. The analytic gradient of that scalar comes from one
//! backward sweep; the numeric one from central differences per input
//! coordinate, taken output-element-wise and divided by the step actually
//! realized in floating point (so the identity map is reproduced exactly).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{lstm_cell, LstmWeights};
use crate::rng;
use crate::tape::{Graph, Var};
use crate::tensor::Tensor;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor in the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead of amplified
/// round-off.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// `(input index, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks `f` at `inputs`. Every input is a differentiable leaf.
pub fn gradient_check<F>(f: F, inputs: &[Tensor<f64>], seed: u64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars = xs.iter().map(|x| g.input(x.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (g, vars, out) = eval(inputs)?;
    let out_shape = g.value(out).shape().to_vec();
    let mut r = rng::stream(seed, "gradcheck");
    let cot: Vec<f64> = (0..g.value(out).len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let grads = g.backward_with_seed(out, Tensor::new(out_shape, cot.clone())?)?;

    let mut report = GradCheck { max_rel_err: 0.0, worst: None, coordinates: 0 };
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; x.len()]);
        for k in 0..x.len() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[i].data_mut()[k] += FD_STEP;
            minus[i].data_mut()[k] -= FD_STEP;
            let step = plus[i].data()[k] - minus[i].data()[k];
            let (gp, _, op) = eval(&plus)?;
            let (gm, _, om) = eval(&minus)?;
            let (fp, fm) = (gp.value(op).data(), gm.value(om).data());
            let numeric: f64 = cot.iter().zip(fp.iter().zip(fm)).map(|(&c, (&p, &m))| c * ((p - m) / step)).sum();
            let e = rel_err(analytic[k], numeric);
            report.coordinates += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = e;
                report.worst = Some((i, k));
            }
        }
    }
    Ok(report)
}

/// Uniform entries in `[-1, -lo] ∪ [lo, 1]`, keeping clear of the kinks of
/// ReLU and clamp.
pub fn random_matrix(rows: usize, cols: usize, lo: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let m = r.random_range(lo..1.0);
            if r.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

fn positive_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor<f64> {
    random_matrix(rows, cols, 0.1, r).map(|x| x.abs() + 0.2)
}

type CheckFn = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

/// One named check per tape primitive (and the LSTM cell), with seeded
/// random inputs.
pub fn primitive_cases(seed: u64) -> Vec<(&'static str, CheckFn, Vec<Tensor<f64>>)> {
    let mut r = rng::stream(seed, "gradcheck-inputs");
    let m = |a: usize, b: usize, r: &mut ChaCha8Rng| random_matrix(a, b, 0.1, r);
    let mut cases: Vec<(&'static str, CheckFn, Vec<Tensor<f64>>)> = Vec::new();
    cases.push(("identity", Box::new(|_, v| Ok(v[0])), vec![m(2, 3, &mut r)]));
    cases.push(("matmul", Box::new(|g, v| g.matmul(v[0], v[1])), vec![m(3, 4, &mut r), m(4, 2, &mut r)]));
    cases.push(("transpose", Box::new(|g, v| g.transpose(v[0])), vec![m(3, 2, &mut r)]));
    cases.push(("add_broadcast_row", Box::new(|g, v| g.add(v[0], v[1])), vec![m(3, 4, &mut r), m(1, 4, &mut r)]));
    cases.push(("sub_broadcast_col", Box::new(|g, v| g.sub(v[0], v[1])), vec![m(3, 4, &mut r), m(3, 1, &mut r)]));
    cases.push(("mul", Box::new(|g, v| g.mul(v[0], v[1])), vec![m(3, 4, &mut r), m(3, 4, &mut r)]));
    cases.push(("mul_broadcast_scalar", Box::new(|g, v| g.mul(v[0], v[1])), vec![m(3, 4, &mut r), m(1, 1, &mut r)]));
    cases.push(("scale", Box::new(|g, v| g.scale(v[0], -2.5)), vec![m(2, 3, &mut r)]));
    cases.push(("add_scalar", Box::new(|g, v| g.add_scalar(v[0], 0.7)), vec![m(2, 3, &mut r)]));
    cases.push(("relu", Box::new(|g, v| g.relu(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("sigmoid", Box::new(|g, v| g.sigmoid(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("tanh", Box::new(|g, v| g.tanh(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("exp", Box::new(|g, v| g.exp(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("log", Box::new(|g, v| g.log(v[0])), vec![positive_matrix(3, 4, &mut r)]));
    cases.push(("sqrt", Box::new(|g, v| g.sqrt(v[0])), vec![positive_matrix(3, 4, &mut r)]));
    cases.push(("clamp", Box::new(|g, v| g.clamp(v[0], -0.5, 0.5)), vec![m(3, 4, &mut r).map(|x| if x.abs() > 0.45 && x.abs() < 0.55 { x * 0.5 } else { x })]));
    cases.push(("concat_cols", Box::new(|g, v| g.concat_cols(&[v[0], v[1]])), vec![m(3, 2, &mut r), m(3, 3, &mut r)]));
    cases.push(("concat_rows", Box::new(|g, v| g.concat_rows(&[v[0], v[1]])), vec![m(2, 3, &mut r), m(1, 3, &mut r)]));
    cases.push(("slice_rows", Box::new(|g, v| g.slice_rows(v[0], 1, 3)), vec![m(4, 3, &mut r)]));
    cases.push(("slice_cols", Box::new(|g, v| g.slice_cols(v[0], 1, 3)), vec![m(3, 4, &mut r)]));
    cases.push(("gather_rows", Box::new(|g, v| g.gather_rows(v[0], &[2, 0, 2, 1])), vec![m(3, 3, &mut r)]));
    cases.push(("scatter_add_rows", Box::new(|g, v| g.scatter_add_rows(v[0], &[1, 0, 1, 2], 3)), vec![m(4, 3, &mut r)]));
    cases.push(("segment_mean", Box::new(|g, v| g.segment_mean(v[0], &[0, 1, 0, 1, 1], 2)), vec![m(5, 3, &mut r)]));
    cases.push(("segment_softmax", Box::new(|g, v| g.segment_softmax(v[0], &[0, 0, 1, 1, 1], 2)), vec![m(5, 1, &mut r)]));
    cases.push(("sum_all", Box::new(|g, v| g.sum_all(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("sum_rows", Box::new(|g, v| g.sum_rows(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("sum_cols", Box::new(|g, v| g.sum_cols(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("mean_rows", Box::new(|g, v| g.mean_rows(v[0])), vec![m(3, 4, &mut r)]));
    cases.push(("var_rows", Box::new(|g, v| g.var_rows(v[0])), vec![m(4, 3, &mut r)]));
    cases.push(("softmax_rows_1x4", Box::new(|g, v| g.softmax_rows(v[0])), vec![m(1, 4, &mut r)]));
    cases.push(("softmax_rows", Box::new(|g, v| g.softmax_rows(v[0])), vec![m(3, 4, &mut r)]));
    cases.push((
        "dropout",
        Box::new(|g, v| {
            let mut d = rng::stream(11, rng::DROPOUT);
            g.dropout(v[0], 0.3, &mut d)
        }),
        vec![m(3, 4, &mut r)],
    ));
    cases.push(("cosine_map", Box::new(|g, v| g.cosine_map(v[0], v[1])), vec![m(3, 4, &mut r), m(2, 4, &mut r)]));
    let targets = [1.0, 0.0, 1.0, 0.0];
    cases.push(("bce_with_logits", Box::new(move |g, v| g.bce_with_logits(v[0], &targets)), vec![m(4, 1, &mut r).map(|x| 3.0 * x)]));
    cases.push((
        "lstm_cell",
        Box::new(|g, v| {
            let w = LstmWeights { w_ih: v[0], w_hh: v[1], b: v[2] };
            let (h, c) = lstm_cell(g, w, v[3], v[4], v[5])?;
            g.concat_cols(&[h, c])
        }),
        vec![m(3, 8, &mut r), m(2, 8, &mut r), m(1, 8, &mut r), m(2, 3, &mut r), m(2, 2, &mut r), m(2, 2, &mut r)],
    ));
    cases
}

/// Runs [`primitive_cases`]; returns `(name, max relative error)` per case.
pub fn primitive_suite(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    primitive_cases(seed)
        .into_iter()
        .map(|(name, f, inputs)| gradient_check(f, &inputs, seed).map(|r| (name, r.max_rel_err)))
        .collect()
}
