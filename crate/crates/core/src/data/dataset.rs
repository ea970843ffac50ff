use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use cdds_chem::{parse_smiles, scaffold_key, MolecularGraph};
use serde::Deserialize;

use crate::error::{CoreError, Result};

/// Scores strictly above this are synergistic.
pub const SYNERGY_THRESHOLD: f64 = 10.0;
/// Length of the frozen gene list.
pub const GENE_COUNT: usize = 640;

pub fn binarize(score: f64) -> u8 {
    u8::from(score > SYNERGY_THRESHOLD)
}

#[derive(Debug, Clone)]
pub struct Drug {
    pub id: String,
    pub smiles: String,
    pub graph: MolecularGraph,
    pub scaffold: String,
    /// Optional per-drug grouping (e.g. a temporal bucket).
    pub group_label: Option<String>,
}

impl Drug {
    pub fn new(id: impl Into<String>, smiles: impl Into<String>) -> Result<Self> {
        let (id, smiles) = (id.into(), smiles.into());
        let graph = parse_smiles(&smiles).map_err(|source| CoreError::Parse { drug_id: id.clone(), source })?;
        if graph.fragment_warning() {
            log::warn!("drug {id}: kept largest fragment of multi-component SMILES");
        }
        let scaffold = scaffold_key(&graph);
        Ok(Drug { id, smiles, graph, scaffold, group_label: None })
    }
}

#[derive(Debug, Clone)]
pub struct CellLine {
    pub id: String,
    /// `log2(tpm + 1)` in gene-list order, before z-scoring.
    pub log_expression: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub a: usize,
    pub b: usize,
    pub cell: usize,
    pub score: f64,
    pub label: u8,
    pub group_label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub genes: Vec<String>,
    pub drugs: Vec<Drug>,
    pub cells: Vec<CellLine>,
    pub samples: Vec<Sample>,
    drug_index: BTreeMap<String, usize>,
    cell_index: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct DrugRow {
    drug_id: String,
    smiles: String,
    #[serde(default)]
    group_label: Option<String>,
}

#[derive(Deserialize)]
struct SampleRow {
    drug_a_id: String,
    drug_b_id: String,
    cell_id: String,
    score: f64,
    #[serde(default)]
    group_label: Option<String>,
}

fn nonempty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.trim().is_empty())
}

/// One symbol per line; blank lines and `#` comments ignored. Must hold
/// exactly [`GENE_COUNT`] distinct symbols.
pub fn read_gene_list<R: Read>(r: R) -> Result<Vec<String>> {
    let mut genes = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            genes.push(t.to_string());
        }
    }
    let distinct: BTreeSet<&String> = genes.iter().collect();
    if genes.len() != GENE_COUNT || distinct.len() != GENE_COUNT {
        return Err(CoreError::GeneList { expected: GENE_COUNT, found: distinct.len() });
    }
    Ok(genes)
}

fn parse_tpm(cell: &str, gene: &str, v: &str) -> Result<f64> {
    let tpm: f64 = v
        .trim()
        .parse()
        .map_err(|_| CoreError::Invalid(format!("cell {cell}, gene {gene}: bad TPM {v:?}")))?;
    if !tpm.is_finite() || tpm < 0.0 {
        return Err(CoreError::Invalid(format!("cell {cell}, gene {gene}: TPM {tpm} out of range")));
    }
    Ok((tpm + 1.0).log2())
}

/// Reads long (`cell_id,gene,tpm`) or wide (`cell_id,<gene>...`) expression
/// tables, restricted to `genes`.
fn read_cells<R: Read>(r: R, genes: &[String]) -> Result<Vec<CellLine>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let gene_pos: BTreeMap<&str, usize> = genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
    let mut values: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut slot = |cell: &str, values: &mut BTreeMap<String, Vec<Option<f64>>>| {
        if !values.contains_key(cell) {
            order.push(cell.to_string());
            values.insert(cell.to_string(), vec![None; genes.len()]);
        }
    };
    if header == ["cell_id", "gene", "tpm"] {
        for rec in rdr.records() {
            let rec = rec?;
            let (cell, gene) = (rec[0].trim(), rec[1].trim());
            slot(cell, &mut values);
            if let Some(&g) = gene_pos.get(gene) {
                values.get_mut(cell).expect("inserted")[g] = Some(parse_tpm(cell, gene, &rec[2])?);
            }
        }
    } else {
        if header.first().map(String::as_str) != Some("cell_id") {
            return Err(CoreError::MissingKey { what: "cell_id column in cells table".into() });
        }
        let cols: Vec<Option<usize>> = header[1..].iter().map(|h| gene_pos.get(h.as_str()).copied()).collect();
        for rec in rdr.records() {
            let rec = rec?;
            let cell = rec[0].trim();
            slot(cell, &mut values);
            for (j, g) in cols.iter().enumerate() {
                if let Some(g) = *g {
                    values.get_mut(cell).expect("inserted")[g] = Some(parse_tpm(cell, &header[j + 1], &rec[j + 1])?);
                }
            }
        }
    }
    order
        .into_iter()
        .map(|id| {
            let v = values.remove(&id).expect("listed");
            let log_expression = v
                .into_iter()
                .enumerate()
                .map(|(g, x)| x.ok_or_else(|| CoreError::MissingGene { cell: id.clone(), gene: genes[g].clone() }))
                .collect::<Result<Vec<f64>>>()?;
            Ok(CellLine { id, log_expression })
        })
        .collect()
}

impl Dataset {
    pub fn from_readers<D: Read, C: Read, S: Read, G: Read>(drugs: D, cells: C, samples: S, genes: G) -> Result<Self> {
        let genes = read_gene_list(genes)?;
        let mut ds = Dataset {
            genes,
            drugs: Vec::new(),
            cells: Vec::new(),
            samples: Vec::new(),
            drug_index: BTreeMap::new(),
            cell_index: BTreeMap::new(),
        };
        for row in csv::Reader::from_reader(drugs).deserialize::<DrugRow>() {
            let row = row?;
            let mut drug = Drug::new(row.drug_id.trim(), row.smiles.trim())?;
            drug.group_label = nonempty(row.group_label);
            ds.insert_drug(drug)?;
        }
        for cell in read_cells(cells, &ds.genes)? {
            if ds.cell_index.insert(cell.id.clone(), ds.cells.len()).is_some() {
                return Err(CoreError::Invalid(format!("duplicate cell id {}", cell.id)));
            }
            ds.cells.push(cell);
        }
        for row in csv::Reader::from_reader(samples).deserialize::<SampleRow>() {
            let row = row?;
            let s = ds.resolve(row.drug_a_id.trim(), row.drug_b_id.trim(), row.cell_id.trim(), row.score)?;
            ds.samples.push(Sample { group_label: nonempty(row.group_label), ..s });
        }
        let self_pairs = ds.samples.iter().filter(|s| s.a == s.b).count();
        if self_pairs > 0 {
            log::warn!("{self_pairs} samples pair a drug with itself");
        }
        let dups = ds.duplicate_report();
        if !dups.is_empty() {
            log::warn!("{} repeated (drug_a, drug_b, cell) rows kept", dups.len());
        }
        Ok(ds)
    }

    pub fn load(drugs: &Path, cells: &Path, samples: &Path, genes: &Path) -> Result<Self> {
        let open = |p: &Path| std::fs::File::open(p).map_err(|e| CoreError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))));
        Self::from_readers(open(drugs)?, open(cells)?, open(samples)?, open(genes)?)
    }

    fn insert_drug(&mut self, drug: Drug) -> Result<usize> {
        if self.drug_index.contains_key(&drug.id) {
            return Err(CoreError::Invalid(format!("duplicate drug id {}", drug.id)));
        }
        self.drug_index.insert(drug.id.clone(), self.drugs.len());
        self.drugs.push(drug);
        Ok(self.drugs.len() - 1)
    }

    /// Adds a drug not present in the table (e.g. a substitution candidate).
    pub fn add_drug(&mut self, id: &str, smiles: &str) -> Result<usize> {
        self.insert_drug(Drug::new(id, smiles)?)
    }

    pub fn drug_id(&self, id: &str) -> Result<usize> {
        self.drug_index.get(id).copied().ok_or_else(|| CoreError::UnresolvedId { kind: "drug", id: id.to_string() })
    }

    pub fn cell_id(&self, id: &str) -> Result<usize> {
        self.cell_index.get(id).copied().ok_or_else(|| CoreError::UnresolvedId { kind: "cell", id: id.to_string() })
    }

    /// Resolves ids into a sample with a binarized label.
    pub fn resolve(&self, a: &str, b: &str, cell: &str, score: f64) -> Result<Sample> {
        Ok(Sample {
            a: self.drug_id(a)?,
            b: self.drug_id(b)?,
            cell: self.cell_id(cell)?,
            score,
            label: binarize(score),
            group_label: None,
        })
    }

    /// Reads extra `(drug_a_id, drug_b_id, cell_id, score[, group_label])`
    /// rows against this dataset's drugs and cells.
    pub fn read_samples<R: Read>(&self, r: R) -> Result<Vec<Sample>> {
        csv::Reader::from_reader(r)
            .deserialize::<SampleRow>()
            .map(|row| {
                let row = row?;
                let s = self.resolve(row.drug_a_id.trim(), row.drug_b_id.trim(), row.cell_id.trim(), row.score)?;
                Ok(Sample { group_label: nonempty(row.group_label), ..s })
            })
            .collect()
    }

    /// Groups of sample indices sharing the same `(a, b, cell)`.
    pub fn duplicate_report(&self) -> Vec<Vec<usize>> {
        let mut seen: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            seen.entry((s.a, s.b, s.cell)).or_default().push(i);
        }
        seen.into_values().filter(|v| v.len() > 1).collect()
    }
}

/// Per-gene z-scoring statistics over `log2(tpm + 1)` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits on the distinct cell lines referenced by `train` samples.
    /// Genes with zero spread keep unit scale.
    pub fn fit(ds: &Dataset, train: &[usize]) -> Result<Self> {
        let cells: BTreeSet<usize> = train.iter().map(|&i| ds.samples[i].cell).collect();
        if cells.is_empty() {
            return Err(CoreError::EmptySelection);
        }
        let n = cells.len() as f64;
        let g = ds.genes.len();
        let mut mean = vec![0.0; g];
        for &c in &cells {
            for (m, x) in mean.iter_mut().zip(&ds.cells[c].log_expression) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; g];
        for &c in &cells {
            for ((v, x), m) in var.iter_mut().zip(&ds.cells[c].log_expression).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let std = var.into_iter().map(|v: f64| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, log_expression: &[f64]) -> Vec<f64> {
        log_expression.iter().zip(self.mean.iter().zip(&self.std)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}
