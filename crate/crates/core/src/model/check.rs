//! Finite-difference checks of the composed model blocks, in 64-bit with
//! all sampling frozen. Parameters are bound as differentiable inputs so
//! both weight and activation gradients are checked.

use cdds_compute::gradcheck::{gradient_check, random_matrix, GradCheck};
use cdds_compute::{rng, ParameterStore, Result, Tensor, Graph, Var};

use super::blocks::{disentangle, gin_layer, gumbel_lambda, importance_logits, interaction, kl_to_uniform, mlp_head, set2set, task_loss};
use crate::metrics::Task;
use rand_chacha::ChaCha8Rng;

fn store_with(names: &[(&str, Tensor<f64>)]) -> ParameterStore<f64> {
    let mut s = ParameterStore::new(0);
    for (n, t) in names {
        s.insert(*n, t.clone(), true);
    }
    s
}

/// Runs `f` with every parameter in `params` bound to an input var; the
/// remaining inputs follow the parameters.
fn check_block<F>(params: Vec<(&'static str, Tensor<f64>)>, inputs: Vec<Tensor<f64>>, seed: u64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &ParameterStore<f64>, &[Var]) -> Result<Var>,
{
    let store = store_with(&params);
    let names: Vec<&'static str> = params.iter().map(|(n, _)| *n).collect();
    let mut all: Vec<Tensor<f64>> = params.into_iter().map(|(_, t)| t).collect();
    let np = all.len();
    all.extend(inputs);
    gradient_check(
        |g, v| {
            for (n, &var) in names.iter().zip(v) {
                g.bind_param(n, var);
            }
            f(g, &store, &v[np..])
        },
        &all,
        seed,
    )
}

/// `(block name, max relative error)` for every composed block.
pub fn block_suite(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let r = &mut rng::stream(seed, "block-inputs");
    let m = |a: usize, b: usize, r: &mut ChaCha8Rng| random_matrix(a, b, 0.1, r);
    let d = 3;
    let mut out = Vec::new();

    // GIN layer on a 4-node path plus a branch, edges both ways.
    let src = vec![0, 1, 1, 2, 1, 3];
    let dst = vec![1, 0, 2, 1, 3, 1];
    let gin = check_block(
        vec![
            ("gin.l0.eps", Tensor::matrix(1, 1, vec![0.3]).expect("sized")),
            ("gin.l0.edge.w", m(2, d, r)),
            ("gin.l0.edge.b", m(1, d, r)),
            ("gin.l0.mlp1.w", m(d, d, r)),
            ("gin.l0.mlp1.b", m(1, d, r)),
            ("gin.l0.mlp2.w", m(d, d, r)),
            ("gin.l0.mlp2.b", m(1, d, r)),
        ],
        vec![m(4, d, r), m(6, 2, r)],
        seed,
        |g, s, v| gin_layer(g, s, 0, v[0], v[1], &src, &dst),
    )?;
    out.push(("gin_layer", gin.max_rel_err));

    let inter = check_block(vec![], vec![m(3, d, r), m(2, d, r)], seed, |g, _, v| {
        let (_, h1, h2) = interaction(g, v[0], v[1])?;
        let t = g.transpose(h2)?;
        let a = g.matmul(h1, t)?;
        g.concat_cols(&[a])
    })?;
    out.push(("interaction_concat", inter.max_rel_err));

    let lu = m(5, 1, r);
    let eps = m(5, 2 * d, r);
    let dis = check_block(
        vec![("imp.l1.w", m(2 * d, d, r)), ("imp.l1.b", m(1, d, r)), ("imp.l2.w", m(d, 1, r)), ("imp.l2.b", m(1, 1, r))],
        vec![m(5, 2 * d, r)],
        seed,
        move |g, s, v| {
            let logits = importance_logits(g, s, v[0])?;
            let u = g.constant(lu.clone())?;
            let lambda = gumbel_lambda(g, logits, Some(u), 0.7)?;
            let e = g.constant(eps.clone())?;
            let (c, sp) = disentangle(g, v[0], lambda, Some(e))?;
            g.concat_cols(&[c, sp])
        },
    )?;
    out.push(("disentangle", dis.max_rel_err));

    let w = 2;
    let seg = vec![0, 1, 0, 0, 1];
    let s2s = check_block(
        vec![("s.lstm.w_ih", m(2 * w, 4 * w, r)), ("s.lstm.w_hh", m(w, 4 * w, r)), ("s.lstm.b", m(1, 4 * w, r))],
        vec![m(5, w, r)],
        seed,
        |g, s, v| set2set(g, s, "s", v[0], &seg, 2, 3),
    )?;
    out.push(("set2set", s2s.max_rel_err));

    let labels = [1.0, 0.0, 1.0];
    let suf = check_block(vec![("p.l1.w", m(4, 3, r)), ("p.l1.b", m(1, 3, r)), ("p.l2.w", m(3, 1, r)), ("p.l2.b", m(1, 1, r))], vec![m(3, 4, r)], seed, move |g, s, v| {
        let o = mlp_head::<f64, ChaCha8Rng>(g, s, "p", 2, v[0], None)?;
        task_loss(g, o, &labels, Task::Classification)
    })?;
    out.push(("sufficiency_bce", suf.max_rel_err));

    let scores = [2.0, -1.0, 0.5];
    let mse = check_block(vec![], vec![m(3, 1, r)], seed, move |g, _, v| task_loss(g, v[0], &scores, Task::Regression))?;
    out.push(("sufficiency_mse", mse.max_rel_err));

    let ind = check_block(vec![("i.l1.w", m(4, 3, r)), ("i.l1.b", m(1, 3, r)), ("i.l2.w", m(3, 2, r)), ("i.l2.b", m(1, 2, r))], vec![m(3, 4, r)], seed, |g, s, v| {
        let o = mlp_head::<f64, ChaCha8Rng>(g, s, "i", 2, v[0], None)?;
        kl_to_uniform(g, o)
    })?;
    out.push(("independence_kl", ind.max_rel_err));

    // Intervention: re-paired spurious parts, mean-pooled, through the head.
    let lu2 = m(5, 1, r);
    let int = check_block(
        vec![
            ("imp.l1.w", m(2 * d, d, r)),
            ("imp.l1.b", m(1, d, r)),
            ("imp.l2.w", m(d, 1, r)),
            ("imp.l2.b", m(1, 1, r)),
            ("inter.l1.w", m(4 * d + 2, 3, r)),
            ("inter.l1.b", m(1, 3, r)),
            ("inter.l2.w", m(3, 1, r)),
            ("inter.l2.b", m(1, 1, r)),
        ],
        vec![m(2, d, r), m(3, d, r), m(1, 2, r)],
        seed,
        move |g, s, v| {
            let (_, h1, h2) = interaction(g, v[0], v[1])?;
            let h = g.concat_rows(&[h1, h2])?;
            let logits = importance_logits(g, s, h)?;
            let u = g.constant(lu2.clone())?;
            let lambda = gumbel_lambda(g, logits, Some(u), 1.0)?;
            let rest = g.one_minus(lambda)?;
            let sp = g.mul(h, rest)?;
            let pooled = g.segment_mean(sp, &[0, 0, 1, 1, 1], 2)?;
            let z1 = g.slice_rows(pooled, 0, 1)?;
            let z2 = g.slice_rows(pooled, 1, 2)?;
            let x = g.concat_cols(&[z1, z2, v[2]])?;
            let o = mlp_head::<f64, ChaCha8Rng>(g, s, "inter", 2, x, None)?;
            task_loss(g, o, &[1.0], Task::Classification)
        },
    )?;
    out.push(("intervention", int.max_rel_err));
    Ok(out)
}
