//! Planted-motif benchmark: random fragment-built molecules, some carrying
//! a sulfonamide `S(=O)(=O)N`. A pair is synergistic iff either drug
//! carries the motif, so a model that attends to the right atoms can
//! separate the classes and its per-atom importances can be scored against
//! the known motif atoms.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cdds_chem::{BondOrder, MolecularGraph};
use cdds_compute::{rng, ParameterStore};

use crate::data::{Dataset, GENE_COUNT};
use crate::error::Result;
use crate::infer::explain_batch;
use crate::metrics::roc_auc;
use crate::model::{Hyperparams, PairBatch};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_drugs: usize,
    pub motif_fraction: f64,
    pub n_cells: usize,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { n_drugs: 60, motif_fraction: 0.3, n_cells: 8, n_pairs: 500, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDrug {
    pub id: String,
    pub smiles: String,
    pub motif_atoms: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub drugs: Vec<SyntheticDrug>,
    pub genes: Vec<String>,
    /// `(cell_id, tpm per gene)`.
    pub cells: Vec<(String, Vec<f64>)>,
    /// `(drug_a, drug_b, cell, score)` by index.
    pub samples: Vec<(usize, usize, usize, f64)>,
}

/// Ring cores as `(before branch, after branch)`.
const CORES: &[(&str, &str)] = &[
    ("c1ccc", "cc1"),
    ("c1cc", "ncc1"),
    ("C1CC", "CCC1"),
    ("C1CC", "NCC1"),
    ("c1cc", "oc1"),
    ("c1ccc2cc", "ccc2c1"),
    ("C1CC", "OC1"),
];
const SUBSTITUENTS: &[&str] = &["C", "F", "Cl", "O", "OC", "C(F)(F)F", "C#N", "SC", "C(=O)O", "N", "C(=O)N", "CC"];
const LINKERS: &[&str] = &["", "C", "CC", "O", "N", "C(=O)N", "OC"];
const MOTIFS: &[&str] = &["S(N)(=O)=O", "S(=O)(=O)N", "S(=O)(=O)NC"];

fn core(r: &mut ChaCha8Rng, branch: Option<&str>, tail: Option<&str>) -> String {
    let (a, b) = CORES.choose(r).expect("non-empty");
    let branch = branch.map(|s| format!("({s})")).unwrap_or_default();
    format!("{a}{branch}{b}{}", tail.unwrap_or(""))
}

fn maybe<'a>(r: &mut ChaCha8Rng, p: f64, items: &'a [&'a str]) -> Option<&'a str> {
    if r.random_bool(p) {
        items.choose(r).copied()
    } else {
        None
    }
}

fn molecule(r: &mut ChaCha8Rng, with_motif: bool) -> String {
    let two_cores = r.random_bool(0.6);
    // Slots: branch of core 1, tail of core 1 (or branch of core 2), tail of core 2.
    let mut slots: Vec<Option<String>> = (0..3).map(|_| maybe(r, 0.6, SUBSTITUENTS).map(str::to_string)).collect();
    if with_motif {
        let slot = if two_cores { r.random_range(0..3) } else { [0, 2][r.random_range(0..2)] };
        slots[slot] = Some(MOTIFS.choose(r).expect("non-empty").to_string());
    }
    if two_cores {
        let linker = LINKERS.choose(r).expect("non-empty");
        let second = core(r, slots[1].as_deref(), slots[2].as_deref());
        core(r, slots[0].as_deref(), Some(&format!("{linker}{second}")))
    } else {
        core(r, slots[0].as_deref(), slots[2].as_deref())
    }
}

/// Atoms of every sulfonamide: S with two double-bonded O and an N neighbor,
/// plus those O and N atoms.
pub fn motif_atoms(g: &MolecularGraph) -> Vec<usize> {
    let adj = g.adjacency();
    let mut out = BTreeSet::new();
    for (i, atom) in g.atoms.iter().enumerate() {
        if atom.element != 16 {
            continue;
        }
        let oxo: Vec<usize> = adj[i]
            .iter()
            .filter(|&&(j, b)| g.atoms[j].element == 8 && g.bonds[b].order == BondOrder::Double)
            .map(|&(j, _)| j)
            .collect();
        let amine: Vec<usize> = adj[i].iter().filter(|&&(j, _)| g.atoms[j].element == 7).map(|&(j, _)| j).collect();
        if oxo.len() == 2 && !amine.is_empty() {
            out.insert(i);
            out.extend(oxo);
            out.extend(amine);
        }
    }
    out.into_iter().collect()
}

/// Generates the benchmark deterministically from `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticSet> {
    let r = &mut rng::stream(spec.seed, "synthetic");
    let n_motif = ((spec.n_drugs as f64) * spec.motif_fraction).round() as usize;
    let mut seen = BTreeSet::new();
    let mut drugs = Vec::new();
    while drugs.len() < spec.n_drugs {
        let want_motif = drugs.len() < n_motif;
        let smiles = molecule(r, want_motif);
        if !seen.insert(smiles.clone()) {
            continue;
        }
        let graph = cdds_chem::parse_smiles(&smiles).map_err(|source| crate::CoreError::Parse {
            drug_id: format!("synthetic {smiles}"),
            source,
        })?;
        let motif = motif_atoms(&graph);
        if motif.is_empty() == want_motif {
            continue;
        }
        drugs.push(SyntheticDrug { id: format!("SYN{:03}", drugs.len()), smiles, motif_atoms: motif });
    }
    let genes: Vec<String> = (1..=GENE_COUNT).map(|i| format!("G{i:04}")).collect();
    let cells = (0..spec.n_cells)
        .map(|c| {
            let tpm = (0..GENE_COUNT).map(|_| (r.random_range(-1.0..6.0f64)).exp2().max(0.0).round()).collect();
            (format!("CELL{c:02}"), tpm)
        })
        .collect();
    let mut samples = Vec::with_capacity(spec.n_pairs);
    let mut used = BTreeSet::new();
    while samples.len() < spec.n_pairs {
        let a = r.random_range(0..drugs.len());
        let b = r.random_range(0..drugs.len());
        let c = r.random_range(0..spec.n_cells);
        if a == b || !used.insert((a.min(b), a.max(b), c)) {
            continue;
        }
        let positive = !drugs[a].motif_atoms.is_empty() || !drugs[b].motif_atoms.is_empty();
        let score = if positive { r.random_range(12.0..30.0) } else { r.random_range(-20.0..8.0) };
        samples.push((a, b, c, (score * 1000.0f64).round() / 1000.0));
    }
    Ok(SyntheticSet { drugs, genes, cells, samples })
}

impl SyntheticSet {
    /// Writes `drugs.csv`, `cells.csv` (long form), `samples.csv`,
    /// `genes.txt` and `motifs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("drugs.csv"))?;
        w.write_record(["drug_id", "smiles"])?;
        for d in &self.drugs {
            w.write_record([&d.id, &d.smiles])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
        w.write_record(["cell_id", "gene", "tpm"])?;
        for (id, tpm) in &self.cells {
            for (g, v) in self.genes.iter().zip(tpm) {
                w.write_record([id.as_str(), g.as_str(), &v.to_string()])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("samples.csv"))?;
        w.write_record(["drug_a_id", "drug_b_id", "cell_id", "score"])?;
        for &(a, b, c, s) in &self.samples {
            w.write_record([&self.drugs[a].id, &self.drugs[b].id, &self.cells[c].0, &s.to_string()])?;
        }
        w.flush()?;
        let mut f = fs::File::create(dir.join("genes.txt"))?;
        for g in &self.genes {
            writeln!(f, "{g}")?;
        }
        let mut w = csv::Writer::from_path(dir.join("motifs.csv"))?;
        w.write_record(["drug_id", "motif_atoms"])?;
        for d in &self.drugs {
            let atoms: Vec<String> = d.motif_atoms.iter().map(usize::to_string).collect();
            w.write_record([d.id.clone(), atoms.join(";")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `motifs.csv` into drug id → motif atom indices.
pub fn read_motifs(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut out = BTreeMap::new();
    for rec in csv::Reader::from_path(path)?.records() {
        let rec = rec?;
        let atoms = rec[1]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| crate::CoreError::Invalid(format!("bad motif atom {s:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        out.insert(rec[0].to_string(), atoms);
    }
    Ok(out)
}

/// Per-drug importances averaged over every appearance in `indices`.
pub fn mean_importances(
    store: &ParameterStore<f32>,
    hp: &Hyperparams,
    ds: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut acc: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = PairBatch::from_samples(ds, chunk, hp.task);
        for (&i, (pa, pb)) in chunk.iter().zip(explain_batch(store, hp, &batch)?) {
            let s = &ds.samples[i];
            for (d, p) in [(s.a, pa), (s.b, pb)] {
                let e = acc.entry(d).or_insert_with(|| (vec![0.0; p.len()], 0));
                e.0.iter_mut().zip(&p).for_each(|(x, y)| *x += y);
                e.1 += 1;
            }
        }
    }
    Ok(acc.into_iter().map(|(d, (sum, n))| (d, sum.into_iter().map(|x| x / n as f64).collect())).collect())
}

/// AUROC of atom importances for motif vs non-motif atoms, over the
/// motif-carrying drugs seen in `indices`.
pub fn importance_auroc(
    store: &ParameterStore<f32>,
    hp: &Hyperparams,
    ds: &Dataset,
    indices: &[usize],
    motifs: &BTreeMap<String, Vec<usize>>,
    batch_size: usize,
) -> Result<f64> {
    let imp = mean_importances(store, hp, ds, indices, batch_size)?;
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (d, p) in imp {
        let Some(m) = motifs.get(&ds.drugs[d].id).filter(|m| !m.is_empty()) else { continue };
        for (k, &v) in p.iter().enumerate() {
            scores.push(v);
            labels.push(u8::from(m.contains(&k)));
        }
    }
    roc_auc(&scores, &labels)
}
