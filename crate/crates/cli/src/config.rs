//! Run configuration: a sectioned `key = value` file with a canonical
//! serialization. Relative paths resolve against the file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cdds_core::data::Protocol;
use cdds_core::model::{Hyperparams, NoiseMode, Toggles};
use cdds_core::train::TrainConfig;
use ini::Ini;

use crate::error::{CliError, Result};

/// The only environment override: replaces `[train] seed`.
pub const SEED_ENV: &str = "CDDS_SEED";

pub const DEFAULT_EXPLAIN_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub drugs: PathBuf,
    pub cells: PathBuf,
    pub samples: PathBuf,
    pub genes: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub protocol: Protocol,
    pub k: usize,
    pub seed: u64,
    /// Held-out fold for `train` and checkpoint evaluation.
    pub fold: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { protocol: Protocol::Warm, k: 5, seed: 0, fold: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataPaths,
    pub split: SplitConfig,
    pub hp: Hyperparams,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    /// Importance at or above which an atom is reported as causal.
    pub explain_threshold: f64,
}

const KEYS: &[(&str, &[&str])] = &[
    ("data", &["drugs", "cells", "samples", "genes"]),
    ("split", &["protocol", "k", "seed", "fold"]),
    (
        "model",
        &[
            "task",
            "d",
            "gin_layers",
            "temperature",
            "set2set_steps",
            "dropout",
            "cell_width",
            "pred_hidden1",
            "pred_hidden2",
            "head_hidden",
            "eval_noise",
            "symmetrize",
        ],
    ),
    ("loss", &["disentangle", "sufficiency", "independence", "intervention", "permutations"]),
    ("train", &["epochs", "batch_size", "lr", "seed", "threshold", "eval_every"]),
    ("output", &["dir"]),
    ("explain", &["threshold"]),
];

struct Fields<'a> {
    ini: &'a Ini,
}

impl Fields<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key))
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::Config(format!("[{section}] {key} = {v:?}: {e}"))),
        }
    }

    fn path(&self, section: &str, key: &str, base: &Path) -> Result<PathBuf> {
        let v = self.raw(section, key).ok_or_else(|| CliError::Config(format!("missing [{section}] {key}")))?;
        Ok(base.join(v))
    }
}

impl RunConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(CliError::Config(format!("key {k:?} outside any section")));
                }
                continue;
            };
            let known = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| CliError::Config(format!("unknown section [{section}]")))?;
            if let Some((k, _)) = props.iter().find(|(k, _)| !known.1.contains(k)) {
                return Err(CliError::Config(format!("unknown key [{section}] {k}")));
            }
        }
        let f = Fields { ini: &ini };
        let d = Hyperparams::default();
        let t = TrainConfig::default();
        let s = SplitConfig::default();
        let tg = Toggles::default();
        let hp = Hyperparams {
            task: f.get("model", "task", d.task)?,
            d: f.get("model", "d", d.d)?,
            gin_layers: f.get("model", "gin_layers", d.gin_layers)?,
            temperature: f.get("model", "temperature", d.temperature)?,
            set2set_steps: f.get("model", "set2set_steps", d.set2set_steps)?,
            dropout: f.get("model", "dropout", d.dropout)?,
            permutations: f.get("loss", "permutations", d.permutations)?,
            cell_width: f.get("model", "cell_width", d.cell_width)?,
            pred_hidden1: f.get("model", "pred_hidden1", d.pred_hidden1)?,
            pred_hidden2: f.get("model", "pred_hidden2", d.pred_hidden2)?,
            head_hidden: f.get("model", "head_hidden", d.head_hidden)?,
            eval_noise: f.get::<NoiseMode>("model", "eval_noise", d.eval_noise)?,
            symmetrize: f.get("model", "symmetrize", d.symmetrize)?,
            toggles: Toggles {
                disentangle: f.get("loss", "disentangle", tg.disentangle)?,
                sufficiency: f.get("loss", "sufficiency", tg.sufficiency)?,
                independence: f.get("loss", "independence", tg.independence)?,
                intervention: f.get("loss", "intervention", tg.intervention)?,
            },
        };
        hp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let train = TrainConfig {
            epochs: f.get("train", "epochs", t.epochs)?,
            batch_size: f.get("train", "batch_size", t.batch_size)?,
            lr: f.get("train", "lr", t.lr)?,
            seed: f.get("train", "seed", t.seed)?,
            threshold: f.get("train", "threshold", t.threshold)?,
            eval_every: f.get("train", "eval_every", t.eval_every)?,
        };
        if train.batch_size == 0 || !(train.lr > 0.0) {
            return Err(CliError::Config("batch_size and lr must be positive".into()));
        }
        let split = SplitConfig {
            protocol: f.get("split", "protocol", s.protocol)?,
            k: f.get("split", "k", s.k)?,
            seed: f.get("split", "seed", s.seed)?,
            fold: f.get("split", "fold", s.fold)?,
        };
        if split.k < 2 || split.fold >= split.k {
            return Err(CliError::Config(format!("need k >= 2 and fold < k (k = {}, fold = {})", split.k, split.fold)));
        }
        let explain_threshold = f.get("explain", "threshold", DEFAULT_EXPLAIN_THRESHOLD)?;
        if !(0.0..=1.0).contains(&explain_threshold) {
            return Err(CliError::Config("[explain] threshold must lie in [0, 1]".into()));
        }
        Ok(RunConfig {
            data: DataPaths {
                drugs: f.path("data", "drugs", base)?,
                cells: f.path("data", "cells", base)?,
                samples: f.path("data", "samples", base)?,
                genes: f.path("data", "genes", base)?,
            },
            split,
            hp,
            train,
            output_dir: base.join(f.raw("output", "dir").unwrap_or("run")),
            explain_threshold,
        })
    }

    /// Reads a config file and applies the seed override, if set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.train.seed = v.parse().map_err(|_| CliError::Config(format!("{SEED_ENV}={v:?} is not a seed")))?;
        }
        Ok(cfg)
    }

    /// Canonical text: every key, fixed order, paths as stored.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let t = &self.train;
        let p = |p: &PathBuf| p.display().to_string();
        let mut s = String::new();
        let mut section = |name: &str, kv: &[(&str, String)]| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in kv {
                let _ = writeln!(s, "{k} = {v}");
            }
            s.push('\n');
        };
        section(
            "data",
            &[
                ("drugs", p(&self.data.drugs)),
                ("cells", p(&self.data.cells)),
                ("samples", p(&self.data.samples)),
                ("genes", p(&self.data.genes)),
            ],
        );
        section(
            "split",
            &[
                ("protocol", self.split.protocol.to_string()),
                ("k", self.split.k.to_string()),
                ("seed", self.split.seed.to_string()),
                ("fold", self.split.fold.to_string()),
            ],
        );
        section(
            "model",
            &[
                ("task", hp.task.to_string()),
                ("d", hp.d.to_string()),
                ("gin_layers", hp.gin_layers.to_string()),
                ("temperature", hp.temperature.to_string()),
                ("set2set_steps", hp.set2set_steps.to_string()),
                ("dropout", hp.dropout.to_string()),
                ("cell_width", hp.cell_width.to_string()),
                ("pred_hidden1", hp.pred_hidden1.to_string()),
                ("pred_hidden2", hp.pred_hidden2.to_string()),
                ("head_hidden", hp.head_hidden.to_string()),
                ("eval_noise", hp.eval_noise.to_string()),
                ("symmetrize", hp.symmetrize.to_string()),
            ],
        );
        section(
            "loss",
            &[
                ("disentangle", hp.toggles.disentangle.to_string()),
                ("sufficiency", hp.toggles.sufficiency.to_string()),
                ("independence", hp.toggles.independence.to_string()),
                ("intervention", hp.toggles.intervention.to_string()),
                ("permutations", hp.permutations.to_string()),
            ],
        );
        section(
            "train",
            &[
                ("epochs", t.epochs.to_string()),
                ("batch_size", t.batch_size.to_string()),
                ("lr", t.lr.to_string()),
                ("seed", t.seed.to_string()),
                ("threshold", t.threshold.to_string()),
                ("eval_every", t.eval_every.to_string()),
            ],
        );
        section("output", &[("dir", p(&self.output_dir))]);
        section("explain", &[("threshold", self.explain_threshold.to_string())]);
        s.pop();
        s
    }
}
