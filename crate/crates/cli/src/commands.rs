//! Command implementations. Each returns its primary output so it can be
//! driven from tests as well as from the binary.

use std::fs;
use std::path::{Path, PathBuf};

use cdds_chem::{parse_smiles, MolecularGraph};
use cdds_compute::{Checkpoint, ParameterStore};
use cdds_core::data::{make_folds, Dataset, FoldPlan, Normalizer};
use cdds_core::infer::{evaluate, explain_batch, predict_batch};
use cdds_core::metrics::{summarize, EvalReport};
use cdds_core::model::{init_params, PairBatch};
use cdds_core::synthetic::{generate, SyntheticSpec};
use cdds_core::train::{train, StepLog, TrainOutcome};

use crate::artifacts::{checkpoint_hash, config_hash, load_model, run_record, save_checkpoint};
use crate::config::{DataPaths, RunConfig, SplitConfig, DEFAULT_EXPLAIN_THRESHOLD};
use crate::error::{CliError, Result};
use crate::render;

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    Ok(Dataset::load(&d.drugs, &d.cells, &d.samples, &d.genes)?)
}

pub fn folds(cfg: &RunConfig, ds: &Dataset) -> Result<FoldPlan> {
    Ok(make_folds(&ds.samples, &ds.drugs, cfg.split.protocol, cfg.split.k, cfg.split.seed)?)
}

fn fit(ds: &Dataset, cfg: &RunConfig, train_idx: &[usize], valid_idx: &[usize]) -> Result<TrainOutcome> {
    let norm = Normalizer::fit(ds, train_idx)?;
    let store = init_params(&cfg.hp, cfg.train.seed, &norm);
    Ok(train(ds, train_idx, valid_idx, &cfg.hp, &cfg.train, store, |_| ())?)
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn metric_header(r: &EvalReport) -> String {
    r.metrics().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(",")
}

fn metric_row(r: &EvalReport) -> String {
    r.metrics().iter().map(|&(_, v)| num(v)).collect::<Vec<_>>().join(",")
}

pub struct TrainSummary {
    pub dir: PathBuf,
    /// Best checkpoint on the held-out fold.
    pub valid: EvalReport,
}

/// Trains on every fold but `split.fold`, validating on it. Writes
/// `config.ini`, `run.txt`, `folds.csv`, `steps.csv`, `epochs.csv`,
/// `metrics.csv`, `best.ckpt` and `last.ckpt` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    let ds = load_dataset(cfg)?;
    let plan = folds(cfg, &ds)?;
    let (tr, va) = (plan.train_indices(cfg.split.fold), plan.test_indices(cfg.split.fold));
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.ini"), cfg.to_text())?;
    fs::write(dir.join("run.txt"), run_record(cfg, tr.len(), va.len())?)?;
    plan.write_csv(fs::File::create(dir.join("folds.csv"))?)?;

    let norm = Normalizer::fit(&ds, &tr)?;
    let store = init_params(&cfg.hp, cfg.train.seed, &norm);
    let mut steps = format!("{}\n", StepLog::HEADER);
    let out = train(&ds, &tr, &va, &cfg.hp, &cfg.train, store, |l| {
        steps.push_str(&l.csv_row());
        steps.push('\n');
    });
    fs::write(dir.join("steps.csv"), &steps)?;
    let out = out?;

    let mut epochs = String::new();
    for e in &out.epochs {
        if epochs.is_empty() {
            epochs = format!("epoch,split,{}\n", metric_header(&e.train));
        }
        epochs.push_str(&format!("{},train,{}\n", e.epoch, metric_row(&e.train)));
        if let Some(v) = &e.valid {
            epochs.push_str(&format!("{},valid,{}\n", e.epoch, metric_row(v)));
        }
    }
    fs::write(dir.join("epochs.csv"), epochs)?;
    save_checkpoint(&dir.join("best.ckpt"), cfg, &out.best)?;
    save_checkpoint(&dir.join("last.ckpt"), cfg, &out.last)?;
    let valid = evaluate(&out.best, &cfg.hp, &ds, &va, cfg.train.batch_size, cfg.train.threshold)?;
    fs::write(dir.join("metrics.csv"), valid.to_csv())?;
    log::info!("validation:\n{}", valid.to_kv());
    Ok(TrainSummary { dir, valid })
}

/// k-fold cross-validation: one model per fold (trained concurrently),
/// scored on its test fold. Returns and writes `cv.csv`: one row per fold
/// and a final `mean±std` row.
pub fn cmd_evaluate_cv(cfg: &RunConfig) -> Result<String> {
    let ds = load_dataset(cfg)?;
    let plan = folds(cfg, &ds)?;
    let reports: Vec<Result<EvalReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.split.k)
            .map(|f| {
                let (ds, plan) = (&ds, &plan);
                s.spawn(move || -> Result<EvalReport> {
                    let (tr, te) = (plan.train_indices(f), plan.test_indices(f));
                    let out = fit(ds, cfg, &tr, &[])?;
                    Ok(evaluate(&out.last, &cfg.hp, ds, &te, cfg.train.batch_size, cfg.train.threshold)?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = format!("fold,{}\n", metric_header(&reports[0]));
    for (f, r) in reports.iter().enumerate() {
        out.push_str(&format!("{f},{}\n", metric_row(r)));
    }
    let agg: Vec<String> = summarize(&reports).iter().map(|(_, m, s)| format!("{}±{}", num(*m), num(*s))).collect();
    out.push_str(&format!("mean±std,{}\n", agg.join(",")));
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("cv.csv"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    /// The training or test side of a fold.
    Fold { fold: usize, train_side: bool },
    /// A samples CSV resolved against the configured drugs and cells.
    External(PathBuf),
}

pub fn cmd_evaluate_checkpoint(cfg: &RunConfig, checkpoint: &Path, target: &EvalTarget, force: bool) -> Result<EvalReport> {
    let store = load_model(cfg, checkpoint, force)?;
    let mut ds = load_dataset(cfg)?;
    let idx = match target {
        EvalTarget::Fold { fold, train_side } => {
            if *fold >= cfg.split.k {
                return Err(CliError::Config(format!("fold {fold} out of range for k = {}", cfg.split.k)));
            }
            let plan = folds(cfg, &ds)?;
            if *train_side {
                plan.train_indices(*fold)
            } else {
                plan.test_indices(*fold)
            }
        }
        EvalTarget::External(path) => {
            let extra = ds.read_samples(fs::File::open(path)?)?;
            let start = ds.samples.len();
            ds.samples.extend(extra);
            (start..ds.samples.len()).collect()
        }
    };
    Ok(evaluate(&store, &cfg.hp, &ds, &idx, cfg.train.batch_size, cfg.train.threshold)?)
}

fn single<'a>(a: &'a MolecularGraph, b: &'a MolecularGraph, cell: &'a [f64]) -> PairBatch<'a> {
    PairBatch { drugs: vec![a, b], pairs: vec![(0, 1)], cells: vec![cell], targets: vec![0.0] }
}

fn score(store: &ParameterStore<f32>, cfg: &RunConfig, a: &MolecularGraph, b: &MolecularGraph, cell: &[f64]) -> Result<f64> {
    Ok(predict_batch(store, &cfg.hp, &single(a, b, cell))?[0])
}

fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let pos = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h.trim() == *c).ok_or_else(|| {
                CliError::Core(cdds_core::CoreError::MissingKey { what: format!("column {c} in {}", path.display()) })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(pos.iter().map(|&i| rec.get(i).unwrap_or("").trim().to_string()).collect());
    }
    Ok(rows)
}

struct Substitution {
    old: String,
    new: String,
    graph: MolecularGraph,
}

/// Predictions for `(drug_a_id, drug_b_id, cell_id)` rows, written at full
/// precision. Each
/// substitution `(old_drug_id, new_drug_id, new_smiles)` that touches a pair
/// adds a row re-scoring the pair with the replacement molecule; an empty
/// `new_smiles` reuses a configured drug.
pub fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, pairs: &Path, substitutions: Option<&Path>, force: bool) -> Result<String> {
    let store = load_model(cfg, checkpoint, force)?;
    let ds = load_dataset(cfg)?;
    let subs = match substitutions {
        None => Vec::new(),
        Some(p) => read_rows(p, &["old_drug_id", "new_drug_id", "new_smiles"])?
            .into_iter()
            .map(|r| {
                let graph = if r[2].is_empty() {
                    ds.drugs[ds.drug_id(&r[1])?].graph.clone()
                } else {
                    parse_smiles(&r[2])?
                };
                Ok(Substitution { old: r[0].clone(), new: r[1].clone(), graph })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["drug_a", "drug_b", "cell", "raw_score", "substituted_pair", "substituted_score", "delta"])?;
    for row in read_rows(pairs, &["drug_a_id", "drug_b_id", "cell_id"])? {
        let (a, b, c) = (ds.drug_id(&row[0])?, ds.drug_id(&row[1])?, ds.cell_id(&row[2])?);
        let (ga, gb) = (&ds.drugs[a].graph, &ds.drugs[b].graph);
        let cell = ds.cells[c].log_expression.as_slice();
        let raw = score(&store, cfg, ga, gb, cell)?;
        let mut any = false;
        for s in subs.iter().filter(|s| s.old == row[0] || s.old == row[1]) {
            any = true;
            let na = if s.old == row[0] { &s.graph } else { ga };
            let nb = if s.old == row[1] { &s.graph } else { gb };
            let new = score(&store, cfg, na, nb, cell)?;
            let label = |id: &str| if id == s.old { format!("{}->{}", s.old, s.new) } else { id.to_string() };
            w.write_record([
                row[0].as_str(),
                row[1].as_str(),
                row[2].as_str(),
                &raw.to_string(),
                &format!("{}|{}", label(&row[0]), label(&row[1])),
                &new.to_string(),
                &(new - raw).to_string(),
            ])?;
        }
        if !any {
            w.write_record([row[0].as_str(), row[1].as_str(), row[2].as_str(), &raw.to_string(), "", "", ""])?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.into_error()))?).map_err(|e| CliError::Config(e.to_string()))
}

fn file_token(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Writes, per pair row `i`, `{i}_{a}_{b}_{cell}.csv` with per-atom
/// importances of both drugs, plus DOT and SVG renderings of each drug.
/// Returns the written paths.
pub fn cmd_explain(cfg: &RunConfig, checkpoint: &Path, pairs: &Path, out: &Path, force: bool) -> Result<Vec<PathBuf>> {
    let store = load_model(cfg, checkpoint, force)?;
    let ds = load_dataset(cfg)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (i, row) in read_rows(pairs, &["drug_a_id", "drug_b_id", "cell_id"])?.into_iter().enumerate() {
        let (a, b, c) = (ds.drug_id(&row[0])?, ds.drug_id(&row[1])?, ds.cell_id(&row[2])?);
        let graphs = [&ds.drugs[a].graph, &ds.drugs[b].graph];
        let batch = single(graphs[0], graphs[1], &ds.cells[c].log_expression);
        let (pa, pb) = explain_batch(&store, &cfg.hp, &batch)?.remove(0);
        let stem = format!("{i:03}_{}_{}_{}", file_token(&row[0]), file_token(&row[1]), file_token(&row[2]));
        let mut w = csv::Writer::from_path(out.join(format!("{stem}.csv")))?;
        w.write_record(["role", "drug_id", "atom_index", "element", "importance", "shade_per_molecule", "causal"])?;
        for (role, id, g, p) in [("A", &row[0], graphs[0], &pa), ("B", &row[1], graphs[1], &pb)] {
            for (k, (atom, (&pk, sk))) in g.atoms.iter().zip(p.iter().zip(render::shades(p))).enumerate() {
                let causal = u8::from(pk >= cfg.explain_threshold);
                w.write_record([role, id, &k.to_string(), atom.symbol(), &format!("{pk:.6}"), &format!("{sk:.6}"), &causal.to_string()])?;
            }
            let name = format!("{stem}_{role}_{}", file_token(id));
            fs::write(out.join(format!("{name}.dot")), render::dot(id, g, p, cfg.explain_threshold))?;
            fs::write(out.join(format!("{name}.svg")), render::svg(id, g, p, cfg.explain_threshold))?;
            written.push(out.join(format!("{name}.dot")));
            written.push(out.join(format!("{name}.svg")));
        }
        w.flush()?;
        written.push(out.join(format!("{stem}.csv")));
    }
    Ok(written)
}

/// Summary of a checkpoint; verifies that re-serializing reproduces the
/// file byte for byte and, given a config, that the architecture matches.
pub fn cmd_inspect(path: &Path, cfg: Option<&RunConfig>) -> Result<String> {
    let bytes = fs::read(path)?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let round_trip = ckpt.to_bytes()? == bytes;
    let hash = checkpoint_hash(&ckpt).unwrap_or_else(|| "unknown".into());
    let scalars: usize = ckpt.params.iter().map(|(_, t)| t.len()).sum();
    let mut s = format!(
        "version = {}\nconfig_hash = {hash}\nparameters = {}\nscalars = {scalars}\nround_trip = {}\n",
        ckpt.version,
        ckpt.params.len(),
        if round_trip { "ok" } else { "MISMATCH" }
    );
    if let Some(cfg) = cfg {
        let expected = config_hash(&cfg.hp);
        s.push_str(&format!("matches_config = {}\n", hash == expected));
    }
    for (name, t) in &ckpt.params {
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        s.push_str(&format!("{name} {}\n", shape.join("x")));
    }
    if !round_trip {
        return Err(CliError::Checkpoint(cdds_compute::ComputeError::Malformed("re-serialization differs".into())));
    }
    Ok(s)
}

pub fn cmd_make_folds(cfg: &RunConfig, out: &Path) -> Result<FoldPlan> {
    let ds = load_dataset(cfg)?;
    let plan = folds(cfg, &ds)?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    plan.write_csv(fs::File::create(out)?)?;
    Ok(plan)
}

/// Parses a SMILES corpus; returns `(parsed, total)`.
pub fn cmd_parse_corpus(input: &Path, out: Option<&Path>) -> Result<(usize, usize)> {
    let records = cdds_chem::report::parse_corpus(std::io::BufReader::new(fs::File::open(input)?))?;
    match out {
        Some(p) => cdds_chem::report::write_report(&records, fs::File::create(p)?)?,
        None => cdds_chem::report::write_report(&records, std::io::stdout().lock())?,
    }
    Ok((records.iter().filter(|r| r.is_ok()).count(), records.len()))
}

/// Writes a planted-motif dataset and a default `config.ini` next to it.
pub fn cmd_gen_synthetic(dir: &Path, spec: &SyntheticSpec) -> Result<PathBuf> {
    let set = generate(spec)?;
    set.write(dir)?;
    let cfg = RunConfig {
        data: DataPaths {
            drugs: "drugs.csv".into(),
            cells: "cells.csv".into(),
            samples: "samples.csv".into(),
            genes: "genes.txt".into(),
        },
        split: SplitConfig { seed: spec.seed, ..SplitConfig::default() },
        hp: Default::default(),
        train: cdds_core::train::TrainConfig { seed: spec.seed, ..Default::default() },
        output_dir: "run".into(),
        explain_threshold: DEFAULT_EXPLAIN_THRESHOLD,
    };
    let path = dir.join("config.ini");
    fs::write(&path, cfg.to_text())?;
    Ok(path)
}
