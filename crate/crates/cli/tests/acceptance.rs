//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line (written to the raw stderr handle so it
//! shows even when test output is captured).

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cdds_chem::features::{check_one_hot, ATOM_ONE_HOT_BLOCKS, BOND_ONE_HOT_BLOCKS};
use cdds_chem::{MolecularGraph, ATOM_FEATURE_DIM, BOND_FEATURE_DIM};
use cdds_cli::artifacts::{load_model, save_checkpoint};
use cdds_cli::commands::*;
use cdds_cli::config::RunConfig;
use cdds_compute::gradcheck::{primitive_suite, random_matrix};
use cdds_compute::{rng, Adam, Graph, ParameterStore, Tensor, Var};
use cdds_core::data::{binarize, make_folds, Drug, Normalizer, Protocol, Sample, GENE_COUNT};
use cdds_core::infer::predict;
use cdds_core::metrics::{classification_metrics, regression_metrics, EvalReport};
use cdds_core::model::*;
use cdds_core::synthetic::{generate, importance_auroc, mean_importances, read_motifs, SyntheticSpec};
use cdds_core::train::{train, train_step, TrainConfig};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn report(n: usize, title: &str, outcome: Outcome) {
    let line = match &outcome {
        Ok(d) => format!("criterion {n:2}: PASS  {title} — {d}\n"),
        Err(d) => format!("criterion {n:2}: FAIL  {title} — {d}\n"),
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus() -> Vec<(String, Result<MolecularGraph, String>)> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../chem/data/drugs30.smi");
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let smiles = l.split_whitespace().next().unwrap();
            (l.to_string(), cdds_chem::parse_smiles(smiles).map_err(|e| e.to_string()))
        })
        .collect()
}

fn molecules() -> Vec<MolecularGraph> {
    corpus().into_iter().filter_map(|(_, g)| g.ok()).collect()
}

fn unit_norm() -> Normalizer {
    Normalizer { mean: vec![0.0; GENE_COUNT], std: vec![1.0; GENE_COUNT] }
}

fn random_cells(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "cells");
    (0..n).map(|_| (0..GENE_COUNT).map(|_| r.random_range(0.0..8.0)).collect()).collect()
}

fn random_order(n: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

/// CPU time consumed by the calling thread.
fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0);
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[test]
fn criterion_01_gradient_correctness() {
    let outcome = (|| -> Outcome {
        let t = Instant::now();
        let (mut worst_p, mut worst_b) = (0.0f64, 0.0f64);
        let mut n_p = 0;
        let mut n_b = 0;
        for seed in 0..3 {
            for (name, e) in primitive_suite(seed).map_err(|e| e.to_string())? {
                ensure(e < 1e-6, || format!("primitive {name} (seed {seed}): {e:e}"))?;
                worst_p = worst_p.max(e);
                n_p += 1;
            }
            for (name, e) in check::block_suite(seed).map_err(|e| e.to_string())? {
                ensure(e < 1e-4, || format!("block {name} (seed {seed}): {e:e}"))?;
                worst_b = worst_b.max(e);
                n_b += 1;
            }
        }
        let secs = t.elapsed().as_secs_f64();
        ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
        Ok(format!("{n_p} primitive checks max {worst_p:.1e}, {n_b} block checks max {worst_b:.1e}, {secs:.1}s"))
    })();
    report(1, "gradient correctness", outcome);
}

#[test]
fn criterion_02_reconstruction() {
    let outcome = (|| -> Outcome {
        let mols = molecules();
        let hp = Hyperparams { eval_noise: NoiseMode::Zero, ..Hyperparams::default() };
        let store: ParameterStore<f64> = init_params(&hp, 7, &unit_norm()).cast();
        let mut r = rng::stream(2, "reconstruction");
        let drawn: Vec<MolecularGraph> = (0..100)
            .map(|_| {
                let m = &mols[r.random_range(0..mols.len())];
                m.permuted(&random_order(m.num_atoms(), &mut r))
            })
            .collect();
        let cells = random_cells(50, 2);
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (k, chunk) in drawn.chunks(10).enumerate() {
            let refs: Vec<&MolecularGraph> = chunk.iter().collect();
            let pairs: Vec<(usize, usize)> = (0..refs.len() / 2).map(|i| (2 * i, 2 * i + 1)).collect();
            let batch = PairBatch {
                drugs: refs,
                pairs: pairs.clone(),
                cells: pairs.iter().enumerate().map(|(i, _)| cells[5 * k + i].as_slice()).collect(),
                targets: vec![0.0; pairs.len()],
            };
            let mut g = Graph::<f64>::new();
            let f = forward(&mut g, &store, &hp, &batch, Mode::Eval).map_err(|e| e.to_string())?;
            let (h, c, s) = (g.value(f.h), g.value(f.c), g.value(f.spurious.ok_or("no spurious part")?));
            for i in 0..h.len() {
                worst = worst.max((c.data()[i] + s.data()[i] - h.data()[i]).abs());
            }
            checked += h.len();
        }
        ensure(worst <= 1e-6, || format!("max |C+S−H| = {worst:e}"))?;
        Ok(format!("100 molecules, {checked} entries, max |C+S−H| = {worst:.1e}"))
    })();
    report(2, "reconstruction invariant", outcome);
}

#[test]
fn criterion_03_symmetry() {
    let outcome = (|| -> Outcome {
        let mols = molecules();
        let hp = Hyperparams::default();
        let store = init_params(&hp, 3, &unit_norm());
        let mut r = rng::stream(3, "symmetry");

        // Interaction map transpose identity, bit for bit.
        for i in 0..mols.len() {
            let j = (i * 7 + 3) % mols.len();
            let mut g = Graph::<f32>::new();
            let gb = GraphBatch::new(&[&mols[i], &mols[j]]);
            let h = encode(&mut g, &store, hp.gin_layers, &gb).map_err(|e| e.to_string())?;
            let x1 = g.slice_rows(h, 0, gb.sizes[0]).unwrap();
            let x2 = g.slice_rows(h, gb.offsets[1], gb.offsets[1] + gb.sizes[1]).unwrap();
            let (i12, _, _) = interaction(&mut g, x1, x2).unwrap();
            let (i21, _, _) = interaction(&mut g, x2, x1).unwrap();
            let (a, b) = (g.value(i12), g.value(i21));
            for p in 0..a.rows() {
                for q in 0..a.cols() {
                    ensure(a.get(p, q).to_bits() == b.get(q, p).to_bits(), || format!("I12ᵀ ≠ I21 for pair {i},{j}"))?;
                }
            }
        }

        // Readouts under row permutation.
        let mut pool = 0.0f64;
        for trial in 0..20 {
            let n = 3 + trial;
            let seg: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let m = random_matrix(n, 2 * hp.d, 0.0, &mut r).cast::<f32>();
            let perm = random_order(n, &mut r);
            let pseg: Vec<usize> = perm.iter().map(|&i| seg[i]).collect();
            let mut g = Graph::<f32>::new();
            let mv = g.constant(m).unwrap();
            let pm = g.gather_rows(mv, &perm).unwrap();
            let outs = [
                (set2set(&mut g, &store, "s2s_c", mv, &seg, 3, hp.set2set_steps), set2set(&mut g, &store, "s2s_c", pm, &pseg, 3, hp.set2set_steps)),
                (g.segment_mean(mv, &seg, 3), g.segment_mean(pm, &pseg, 3)),
            ];
            for (x, y) in outs {
                let (x, y) = (x.map_err(|e| e.to_string())?, y.map_err(|e| e.to_string())?);
                for (u, v) in g.value(x).data().iter().zip(g.value(y).data()) {
                    pool = pool.max((u - v).abs() as f64);
                }
            }
        }
        ensure(pool <= 1e-6, || format!("readout permutation error {pool:e}"))?;

        // End-to-end evaluation under atom reordering.
        let cells = random_cells(15, 3);
        let mut e2e = 0.0f64;
        for sym in [false, true] {
            let hp = Hyperparams { symmetrize: sym, ..hp.clone() };
            let picks: Vec<&MolecularGraph> = (0..30).map(|i| &mols[(i * 11) % mols.len()]).collect();
            let shuffled: Vec<MolecularGraph> = picks.iter().map(|m| m.permuted(&random_order(m.num_atoms(), &mut r))).collect();
            let pairs: Vec<(usize, usize)> = (0..15).map(|i| (2 * i, 2 * i + 1)).collect();
            fn make<'a>(d: Vec<&'a MolecularGraph>, pairs: &[(usize, usize)], cells: &'a [Vec<f64>]) -> PairBatch<'a> {
                PairBatch { drugs: d, pairs: pairs.to_vec(), cells: cells.iter().map(Vec::as_slice).collect(), targets: vec![0.0; pairs.len()] }
            }
            let a = cdds_core::infer::predict_batch(&store, &hp, &make(picks.clone(), &pairs, &cells)).map_err(|e| e.to_string())?;
            let b = cdds_core::infer::predict_batch(&store, &hp, &make(shuffled.iter().collect(), &pairs, &cells)).map_err(|e| e.to_string())?;
            for (x, y) in a.iter().zip(&b) {
                e2e = e2e.max((x - y).abs());
            }
        }
        ensure(e2e <= 1e-5, || format!("prediction changes by {e2e:e} under atom reordering"))?;
        Ok(format!("transpose exact on {} pairs; readout max {pool:.1e}; end-to-end max {e2e:.1e}", mols.len()))
    })();
    report(3, "symmetry suite", outcome);
}

#[test]
fn criterion_04_featurization() {
    let outcome = (|| -> Outcome {
        let entries = corpus();
        let total = entries.len();
        let mut ok = 0;
        for (line, g) in &entries {
            let Ok(g) = g else { continue };
            ok += 1;
            ensure(g.atom_features.cols == ATOM_FEATURE_DIM && g.atom_features.rows == g.num_atoms(), || format!("{line}: atom matrix"))?;
            ensure(g.bond_features.cols == BOND_FEATURE_DIM && g.bond_features.rows == g.num_bonds(), || format!("{line}: bond matrix"))?;
            check_one_hot(&g.atom_features, ATOM_FEATURE_DIM, &ATOM_ONE_HOT_BLOCKS).map_err(|e| format!("{line}: {e}"))?;
            check_one_hot(&g.bond_features, BOND_FEATURE_DIM, &BOND_ONE_HOT_BLOCKS).map_err(|e| format!("{line}: {e}"))?;
        }
        let rate = ok as f64 / total as f64;
        ensure(total == 30, || format!("corpus has {total} entries"))?;
        ensure(rate >= 0.95, || format!("parsed {ok}/{total}"))?;
        Ok(format!("parsed {ok}/{total} ({:.0}%), 133/14 columns, unit one-hot blocks", 100.0 * rate))
    })();
    report(4, "featurization contract", outcome);
}

#[test]
fn criterion_05_metrics_oracle() {
    let outcome = (|| -> Outcome {
        let close = |name: &str, got: f64, want: f64| ensure((got - want).abs() <= 1e-9, || format!("{name}: {got} vs {want}"));
        let cls = |s: &[f64], l: &[u8]| -> Result<Vec<f64>, String> {
            Ok(classification_metrics(s, l, 0.5).map_err(|e| e.to_string())?.metrics().iter().map(|m| m.1).collect())
        };
        let reg = |p: &[f64], t: &[f64]| -> Result<Vec<f64>, String> {
            Ok(regression_metrics(p, t).map_err(|e| e.to_string())?.metrics().iter().map(|m| m.1).collect())
        };
        let m = cls(&[0.9, 0.1], &[1, 0])?;
        for (n, v) in ["auc", "aupr", "kappa", "f1"].iter().zip(m) {
            close(n, v, 1.0)?;
        }
        close("tied auc", cls(&[0.5, 0.5], &[1, 0])?[0], 0.5)?;
        // TP = FP = FN = TN = 1.
        let m = cls(&[0.9, 0.8, 0.2, 0.1], &[1, 0, 1, 0])?;
        close("balanced kappa", m[2], 0.0)?;
        close("balanced f1", m[3], 0.5)?;
        close("balanced auc", m[0], 0.75)?;
        // Hand AP: ranks 1,3 positive → (1 + 2/3) / 2.
        close("aupr", m[1], (1.0 + 2.0 / 3.0) / 2.0)?;
        let m = reg(&[1.5, -2.0, 3.25], &[1.5, -2.0, 3.25])?;
        for (n, (v, w)) in ["rmse", "mae", "pcc", "r2"].iter().zip(m.iter().zip([0.0, 0.0, 1.0, 1.0])) {
            close(n, *v, w)?;
        }
        close("r2 of mean", reg(&[4.0, 4.0, 4.0], &[2.0, 4.0, 6.0])?[3], 0.0)?;
        let m = reg(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])?;
        close("pcc", m[2], 1.0)?;
        close("rmse", m[0], (14.0f64 / 3.0).sqrt())?;
        close("mae", m[1], 2.0)?;
        Ok("hand fixtures match to 1e-9 (incl. tied AUC 0.5 and balanced kappa 0)".into())
    })();
    report(5, "metrics oracle", outcome);
}

#[test]
fn criterion_06_split_soundness() {
    let outcome = (|| -> Outcome {
        let set = generate(&SyntheticSpec { n_drugs: 40, n_pairs: 1, seed: 6, ..Default::default() }).map_err(|e| e.to_string())?;
        let drugs: Vec<Drug> = set
            .drugs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut drug = Drug::new(&d.id, &d.smiles).unwrap();
                drug.group_label = Some(format!("G{}", i % 8));
                drug
            })
            .collect();
        let mut r = rng::stream(6, "world");
        let samples: Vec<Sample> = (0..1000)
            .map(|_| {
                let score = r.random_range(-30.0..30.0);
                Sample { a: r.random_range(0..40), b: r.random_range(0..40), cell: r.random_range(0..12), score, label: binarize(score), group_label: None }
            })
            .collect();
        let mut summary = Vec::new();
        for p in Protocol::ALL {
            let plan = make_folds(&samples, &drugs, p, 5, 6).map_err(|e| format!("{p}: {e}"))?;
            let mut tested = vec![0usize; samples.len()];
            for f in 0..plan.k {
                let (tr, te, dr) = (plan.train_indices(f), plan.test_indices(f), plan.dropped_indices(f));
                let mut all: Vec<usize> = tr.iter().chain(&te).chain(&dr).copied().collect();
                all.sort_unstable();
                ensure(all == (0..samples.len()).collect::<Vec<_>>(), || format!("{p} fold {f}: not a partition"))?;
                te.iter().for_each(|&i| tested[i] += 1);
                if p != Protocol::Warm {
                    ensure(plan.key_set(&tr).is_disjoint(&plan.key_set(&te)), || format!("{p} fold {f}: train/test key overlap"))?;
                }
            }
            ensure(tested.iter().all(|&t| t <= 1), || format!("{p}: sample tested twice"))?;
            let once = tested.iter().filter(|&&t| t == 1).count();
            if matches!(p, Protocol::Warm | Protocol::UnseenPair | Protocol::UnseenCell) {
                ensure(once == samples.len(), || format!("{p}: test folds cover {once} samples"))?;
            }
            summary.push(format!("{p} {once}"));
        }
        Ok(format!("6 protocols × 5 folds sound; samples tested once: {}", summary.join(", ")))
    })();
    report(6, "split soundness", outcome);
}

#[test]
fn criterion_07_planted_motif_benchmark() {
    let outcome = (|| -> Outcome {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let runs: Vec<Result<(f64, f64, f64, f64, f64, f64), String>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..3u64)
                .map(|seed| {
                    let dir = root.path().join(format!("seed{seed}"));
                    s.spawn(move || -> Result<_, String> {
                        let path = cmd_gen_synthetic(&dir, &SyntheticSpec { seed, ..Default::default() }).map_err(|e| e.to_string())?;
                        let cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
                        let n = load_dataset(&cfg).map_err(|e| e.to_string())?.samples.len();
                        ensure((450..=550).contains(&n), || format!("{n} pairs generated"))?;
                        let cpu = thread_cpu_seconds();
                        cmd_train(&cfg).map_err(|e| e.to_string())?;
                        let cpu = thread_cpu_seconds() - cpu;
                        let ckpt = cfg.output_dir.join("last.ckpt");
                        let auc = |train_side| -> Result<f64, String> {
                            let r = cmd_evaluate_checkpoint(&cfg, &ckpt, &EvalTarget::Fold { fold: cfg.split.fold, train_side }, false)
                                .map_err(|e| e.to_string())?;
                            Ok(r.metrics()[0].1)
                        };
                        let (train_auc, test_auc) = (auc(true)?, auc(false)?);
                        let store = load_model(&cfg, &ckpt, false).map_err(|e| e.to_string())?;
                        let ds = load_dataset(&cfg).map_err(|e| e.to_string())?;
                        let motifs = read_motifs(&dir.join("motifs.csv")).map_err(|e| e.to_string())?;
                        let all: Vec<usize> = (0..ds.samples.len()).collect();
                        let imp = importance_auroc(&store, &cfg.hp, &ds, &all, &motifs, 128).map_err(|e| e.to_string())?;
                        // Mean importance of motif vs other atoms.
                        let (mut on, mut off) = ((0.0, 0usize), (0.0, 0usize));
                        for (d, p) in mean_importances(&store, &cfg.hp, &ds, &all, 128).map_err(|e| e.to_string())? {
                            let m = &motifs[&ds.drugs[d].id];
                            for (k, v) in p.iter().enumerate() {
                                let acc = if m.contains(&k) { &mut on } else { &mut off };
                                acc.0 += v;
                                acc.1 += 1;
                            }
                        }
                        Ok((cpu, train_auc, test_auc, imp, on.0 / on.1 as f64, off.0 / off.1 as f64))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".into()))).collect()
        });
        let mut lines = Vec::new();
        let mut failures = Vec::new();
        for (seed, run) in runs.into_iter().enumerate() {
            let (cpu, tr, te, imp, on, off) = run.map_err(|e| format!("seed {seed}: {e}"))?;
            lines.push(format!("seed {seed}: {cpu:.0} CPU-s, train AUC {tr:.3}, held-out AUC {te:.3}, importance AUROC {imp:.3}"));
            for (ok, what) in [
                (cpu <= 300.0, "over 5 CPU-minutes"),
                (tr >= 0.95, "train AUC < 0.95"),
                (te >= 0.85, "held-out AUC < 0.85"),
                (imp >= 0.75, "importance AUROC < 0.75"),
                (tr >= te, "held-out AUC above train AUC"),
                (on > off, "motif atoms not more important on average"),
            ] {
                if !ok {
                    failures.push(format!("seed {seed}: {what}"));
                }
            }
        }
        ensure(failures.is_empty(), || format!("{}; {}", failures.join(", "), lines.join("; ")))?;
        Ok(lines.join("; "))
    })();
    report(7, "planted-motif synthetic benchmark", outcome);
}

/// 50-step block means must fall strictly until they drop below the
/// convergence floor and must not rise above it afterwards.
const BLOCK: usize = 50;
const FLOOR: f64 = 1e-3;

fn monotone_to_floor(losses: &[f64]) -> Result<Vec<f64>, String> {
    let means: Vec<f64> = losses.chunks(BLOCK).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    for w in 1..means.len() {
        let (prev, cur) = (means[w - 1], means[w]);
        if prev >= FLOOR {
            ensure(cur < prev, || format!("block {w} rises: {prev:.3e} → {cur:.3e}"))?;
        } else {
            ensure(cur < FLOOR, || format!("block {w} rebounds above the floor: {cur:.3e}"))?;
        }
    }
    Ok(means)
}

#[test]
fn criterion_08_overfit_sanity() {
    let outcome = (|| -> Outcome {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = cmd_gen_synthetic(root.path(), &SyntheticSpec::default()).map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
        let ds = load_dataset(&cfg).map_err(|e| e.to_string())?;
        let hp = cfg.hp.clone();
        let results: Vec<Result<String, String>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..3u64)
                .map(|k| {
                    let (ds, hp) = (&ds, &hp);
                    s.spawn(move || -> Result<String, String> {
                        let mut idx: Vec<usize> = (0..ds.samples.len()).collect();
                        idx.shuffle(&mut rng::stream(k, "subset"));
                        let sub = &idx[..64];
                        let norm = Normalizer::fit(ds, sub).map_err(|e| e.to_string())?;
                        let store = init_params(hp, k, &norm);
                        let tc = TrainConfig { epochs: 500, batch_size: 64, seed: k, eval_every: 0, ..TrainConfig::default() };
                        let out = train(ds, sub, &[], hp, &tc, store, |_| ()).map_err(|e| e.to_string())?;
                        ensure(out.steps.len() == 500, || format!("{} steps", out.steps.len()))?;
                        let tol: Vec<f64> = out.steps.iter().map(|s| s.l_tol).collect();
                        let means = monotone_to_floor(&tol).map_err(|e| format!("subset {k}: {e}"))?;
                        let p = predict(&out.last, hp, ds, sub, 64).map_err(|e| e.to_string())?;
                        let bce = sub
                            .iter()
                            .zip(&p)
                            .map(|(&i, &q)| {
                                let y = ds.samples[i].label as f64;
                                let q = q.clamp(1e-12, 1.0 - 1e-12);
                                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
                            })
                            .sum::<f64>()
                            / 64.0;
                        ensure(bce < 0.1, || format!("subset {k}: final BCE {bce:.4}"))?;
                        Ok(format!("subset {k}: loss {:.2} → {:.1e}, BCE {bce:.1e}", means[0], means[means.len() - 1]))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".into()))).collect()
        });
        let lines = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(lines.join("; "))
    })();
    report(8, "overfit sanity", outcome);
}

fn loss_graph(hp: &Hyperparams, store: &ParameterStore<f32>, b: &PairBatch, step: u64) -> Result<(Graph<f32>, Losses), String> {
    let mut g = Graph::<f32>::new();
    let mut f = forward(&mut g, store, hp, b, Mode::Train { step }).map_err(|e| e.to_string())?;
    let l = losses(&mut g, store, hp, b, &mut f, step).map_err(|e| e.to_string())?;
    Ok((g, l))
}

#[test]
fn criterion_09_ablation_fidelity() {
    let outcome = (|| -> Outcome {
        let mols = molecules();
        let cells = random_cells(8, 9);
        let picks: Vec<&MolecularGraph> = (0..8).map(|i| &mols[(3 * i + 1) % mols.len()]).collect();
        let batch = PairBatch {
            drugs: picks,
            pairs: (0..8).map(|i| (i, (i + 3) % 8)).collect(),
            cells: cells.iter().map(Vec::as_slice).collect(),
            targets: (0..8).map(|i| (i % 2) as f64).collect(),
        };
        let base = Hyperparams { permutations: 2, ..Hyperparams::default() };
        let store = init_params(&base, 9, &unit_norm());
        let step = 5;
        let mut worst = 0.0f64;
        type Keep = fn(&Losses) -> Vec<Option<Var>>;
        let cases: [(&str, Toggles, Keep, usize); 3] = [
            ("intervention", Toggles { intervention: false, ..Toggles::default() }, |l| vec![l.suf, l.ind], 3),
            ("independence", Toggles { independence: false, ..Toggles::default() }, |l| vec![l.suf, l.inter], 2),
            ("sufficiency", Toggles { sufficiency: false, ..Toggles::default() }, |l| vec![l.ind, l.inter], 1),
        ];
        for (name, toggles, keep, column) in cases {
            let hp = Hyperparams { toggles, ..base.clone() };
            let (g_off, l_off) = loss_graph(&hp, &store, &batch, step)?;
            let vals = l_off.values(&g_off);
            let cols = [vals.0, vals.1, vals.2, vals.3];
            ensure(cols[column] == 0.0, || format!("{name}: loss column is {}", cols[column]))?;
            ensure(cols.iter().enumerate().all(|(i, &v)| i == column || v > 0.0), || format!("{name}: another column vanished"))?;
            let grad_off = g_off.backward(l_off.total).map_err(|e| e.to_string())?.for_store(&store);

            // Reference: the full model, differentiating only the kept terms.
            let (mut g_ref, l_ref) = loss_graph(&base, &store, &batch, step)?;
            let kept: Vec<Var> = keep(&l_ref).into_iter().map(|v| v.ok_or("missing term")).collect::<Result<_, _>>()?;
            let sum = g_ref.add(kept[0], kept[1]).map_err(|e| e.to_string())?;
            let grad_ref = g_ref.backward(sum).map_err(|e| e.to_string())?.for_store(&store);

            let (mut s_off, mut s_ref) = (store.clone(), store.clone());
            Adam::default().step(&mut s_off, &grad_off).map_err(|e| e.to_string())?;
            Adam::default().step(&mut s_ref, &grad_ref).map_err(|e| e.to_string())?;
            for ((n, a, _), (_, b, _)) in s_off.iter().zip(s_ref.iter()) {
                let before = store.get(n).unwrap();
                for ((x, y), z) in a.data().iter().zip(b.data()).zip(before.data()) {
                    let diff = ((x - z) - (y - z)).abs() as f64;
                    worst = worst.max(diff);
                    ensure(diff <= 1e-7, || format!("{name}: delta of {n} differs by {diff:e}"))?;
                }
            }
        }

        // The same through the CLI: the logged column is zero at every step.
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = SyntheticSpec { n_drugs: 20, n_pairs: 100, n_cells: 4, ..Default::default() };
        let path = cmd_gen_synthetic(root.path(), &spec).map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
        cfg.hp = Hyperparams { d: 16, cell_width: 16, pred_hidden1: 32, pred_hidden2: 16, head_hidden: 16, ..cfg.hp };
        cfg.train.epochs = 2;
        cfg.train.batch_size = 16;
        for (name, col) in [("intervention", 6), ("independence", 5), ("sufficiency", 4)] {
            let mut c = cfg.clone();
            match name {
                "intervention" => c.hp.toggles.intervention = false,
                "independence" => c.hp.toggles.independence = false,
                _ => c.hp.toggles.sufficiency = false,
            }
            c.output_dir = root.path().join(name);
            cmd_train(&c).map_err(|e| e.to_string())?;
            let steps = fs::read_to_string(c.output_dir.join("steps.csv")).map_err(|e| e.to_string())?;
            for line in steps.lines().skip(1) {
                let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
                ensure(v == 0.0, || format!("{name}: logged column {col} = {v}"))?;
            }
        }
        Ok(format!("each toggle zeroes its column; kept-term Adam deltas agree to {worst:.1e}"))
    })();
    report(9, "ablation fidelity", outcome);
}

#[test]
fn criterion_10_round_trip_and_determinism() {
    let outcome = (|| -> Outcome {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = SyntheticSpec { n_drugs: 24, n_pairs: 120, n_cells: 4, seed: 10, ..Default::default() };
        let path = cmd_gen_synthetic(root.path(), &spec).map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::load(&path).map_err(|e| e.to_string())?;
        cfg.hp = Hyperparams { d: 16, cell_width: 16, pred_hidden1: 32, pred_hidden2: 16, head_hidden: 16, ..cfg.hp };
        cfg.train.epochs = 3;
        cfg.train.batch_size = 32;

        // Checkpoint round trip.
        let ds = load_dataset(&cfg).map_err(|e| e.to_string())?;
        let store = init_params(&cfg.hp, 10, &Normalizer::fit(&ds, &[0, 1, 2, 3]).map_err(|e| e.to_string())?);
        let mut trained = store.clone();
        let batch = PairBatch::from_samples(&ds, &[0, 1, 2, 3, 4, 5], cfg.hp.task);
        train_step(&mut trained, &Adam::default(), &cfg.hp, &batch).map_err(|e| e.to_string())?;
        let ck = root.path().join("rt.ckpt");
        save_checkpoint(&ck, &cfg, &trained).map_err(|e| e.to_string())?;
        let loaded = load_model(&cfg, &ck, false).map_err(|e| e.to_string())?;
        ensure(loaded.len() == trained.len(), || "parameter count differs".into())?;
        for (n, t, _) in trained.iter() {
            let bits = |x: &Tensor<f32>| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ensure(bits(t) == bits(loaded.get(n).unwrap()), || format!("{n} not bit-exact"))?;
        }
        let info = cmd_inspect(&ck, Some(&cfg)).map_err(|e| e.to_string())?;
        ensure(info.contains("round_trip = ok") && info.contains("matches_config = true"), || info.clone())?;

        // Two training runs and two explanation exports.
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let c = RunConfig { output_dir: root.path().join(run), ..cfg.clone() };
            cmd_train(&c).map_err(|e| e.to_string())?;
            let pairs = root.path().join("pairs.csv");
            fs::write(&pairs, "drug_a_id,drug_b_id,cell_id\nSYN000,SYN001,CELL00\nSYN005,SYN002,CELL03\n").map_err(|e| e.to_string())?;
            let files = cmd_explain(&c, &c.output_dir.join("best.ckpt"), &pairs, &c.output_dir.join("explain"), false).map_err(|e| e.to_string())?;
            outputs.push((c, files));
        }
        let (a, b) = (&outputs[0], &outputs[1]);
        for f in ["steps.csv", "epochs.csv", "metrics.csv"] {
            ensure(fs::read(a.0.output_dir.join(f)).ok() == fs::read(b.0.output_dir.join(f)).ok(), || format!("{f} differs between runs"))?;
        }
        let svgs: Vec<_> = a.1.iter().zip(&b.1).filter(|(p, _)| p.extension().is_some_and(|e| e == "svg")).collect();
        ensure(svgs.len() == 4, || format!("{} SVGs", svgs.len()))?;
        for (p, q) in &svgs {
            ensure(fs::read(p).ok() == fs::read(q).ok(), || format!("{} differs", p.display()))?;
        }

        // Identity substitution.
        let smiles: Vec<String> = fs::read_to_string(root.path().join("drugs.csv"))
            .map_err(|e| e.to_string())?
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect();
        let subs = root.path().join("subs.csv");
        fs::write(&subs, format!("old_drug_id,new_drug_id,new_smiles\nSYN000,SYN000,{}\nSYN002,SYN002,{}\n", smiles[0], smiles[2])).map_err(|e| e.to_string())?;
        let pairs = root.path().join("pairs.csv");
        let out = cmd_predict(&a.0, &a.0.output_dir.join("best.ckpt"), &pairs, Some(&subs), false).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<&str>> = out.lines().skip(1).map(|l| l.split(',').collect()).collect();
        ensure(rows.len() == 2, || format!("{} prediction rows", rows.len()))?;
        for r in &rows {
            ensure(r[6] == "0" && r[3] == r[5], || format!("identity substitution delta {}", r[6]))?;
        }
        Ok(format!("{} parameters bit-exact; identity delta exactly 0; logs and {} SVGs byte-identical", trained.len(), svgs.len()))
    })();
    report(10, "round trip, identity substitution, determinism", outcome);
}

#[allow(dead_code)]
fn _report_type_check(r: &EvalReport) -> usize {
    r.n()
}
