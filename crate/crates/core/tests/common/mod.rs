#![allow(dead_code)]

use cdds_chem::{parse_smiles, MolecularGraph};
use cdds_compute::{rng, ParameterStore};
use cdds_core::data::{Normalizer, GENE_COUNT};
use cdds_core::metrics::Task;
use cdds_core::model::{init_params, Hyperparams, PairBatch};
use rand::Rng;

pub fn corpus() -> Vec<MolecularGraph> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../chem/data/drugs30.smi")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| parse_smiles(l.split_whitespace().next().unwrap()).unwrap())
        .collect()
}

pub fn tiny_hp(task: Task) -> Hyperparams {
    Hyperparams {
        task,
        d: 8,
        gin_layers: 2,
        set2set_steps: 2,
        cell_width: 8,
        pred_hidden1: 16,
        pred_hidden2: 8,
        head_hidden: 8,
        ..Hyperparams::default()
    }
}

pub fn unit_normalizer() -> Normalizer {
    Normalizer { mean: vec![0.0; GENE_COUNT], std: vec![1.0; GENE_COUNT] }
}

pub fn store(hp: &Hyperparams, seed: u64) -> ParameterStore<f32> {
    init_params(hp, seed, &unit_normalizer())
}

pub fn cells(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "cells");
    (0..n).map(|_| (0..GENE_COUNT).map(|_| r.random_range(-2.0..2.0)).collect()).collect()
}

/// Batch over `mols` with the given pairs and cell rows.
pub fn batch<'a>(mols: &[&'a MolecularGraph], pairs: &[(usize, usize)], cells: &'a [Vec<f64>], targets: &[f64]) -> PairBatch<'a> {
    PairBatch {
        drugs: mols.to_vec(),
        pairs: pairs.to_vec(),
        cells: (0..pairs.len()).map(|i| cells[i % cells.len()].as_slice()).collect(),
        targets: targets.to_vec(),
    }
}

/// A fixed scrambling permutation of `0..n`: odd positions reversed
/// ahead of even ones.
pub fn shuffled(n: usize) -> Vec<usize> {
    let order: Vec<usize> = (0..n).rev().filter(|i| i % 2 == 1).chain((0..n).filter(|i| i % 2 == 0)).collect();
    let mut perm = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}
