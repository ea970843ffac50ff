use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::metrics::Task;

/// Replacement for the noise term in evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `ε = 0`, so `C + S = H` exactly.
    Zero,
    /// `ε = μ_H`, the per-graph feature mean.
    Mean,
}

impl FromStr for NoiseMode {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(NoiseMode::Zero),
            "mean" => Ok(NoiseMode::Mean),
            _ => Err(CoreError::Invalid(format!("unknown noise mode {s:?}"))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseMode::Zero => "zero",
            NoiseMode::Mean => "mean",
        })
    }
}

impl FromStr for Task {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            _ => Err(CoreError::Invalid(format!("unknown task {s:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        })
    }
}

/// Ablation switches. With `disentangle` off every atom is causal
/// (`λ = 1`), no spurious part exists, and the independence and
/// intervention terms are off regardless of their own flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub disentangle: bool,
    pub sufficiency: bool,
    pub independence: bool,
    pub intervention: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles { disentangle: true, sufficiency: true, independence: true, intervention: true }
    }
}

impl Toggles {
    pub fn use_independence(&self) -> bool {
        self.disentangle && self.independence
    }

    pub fn use_intervention(&self) -> bool {
        self.disentangle && self.intervention
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub task: Task,
    pub d: usize,
    pub gin_layers: usize,
    pub temperature: f64,
    pub set2set_steps: usize,
    pub dropout: f64,
    /// Intervention permutations per step.
    pub permutations: usize,
    pub cell_width: usize,
    pub pred_hidden1: usize,
    pub pred_hidden2: usize,
    /// Hidden width of the independence and intervention heads.
    pub head_hidden: usize,
    pub eval_noise: NoiseMode,
    /// Average both drug orders in evaluation; train on both orders.
    pub symmetrize: bool,
    pub toggles: Toggles,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            task: Task::Classification,
            d: 64,
            gin_layers: 3,
            temperature: 1.0,
            set2set_steps: 3,
            dropout: 0.2,
            permutations: 1,
            cell_width: 128,
            pred_hidden1: 512,
            pred_hidden2: 128,
            head_hidden: 128,
            eval_noise: NoiseMode::Mean,
            symmetrize: false,
            toggles: Toggles::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Invalid(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.gin_layers == 0 || self.d == 0 || self.set2set_steps == 0 {
            return bad("d, gin_layers and set2set_steps must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.cell_width == 0 || self.pred_hidden1 == 0 || self.pred_hidden2 == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    /// Output width of the independence head.
    pub fn ind_outputs(&self) -> usize {
        match self.task {
            Task::Classification => 2,
            Task::Regression => 1,
        }
    }

    /// Keys that determine parameter shapes, as `key = value` lines.
    pub fn architecture_record(&self) -> String {
        format!(
            "task = {}\nd = {}\ngin_layers = {}\nset2set_steps = {}\ncell_width = {}\npred_hidden1 = {}\npred_hidden2 = {}\nhead_hidden = {}\n",
            self.task,
            self.d,
            self.gin_layers,
            self.set2set_steps,
            self.cell_width,
            self.pred_hidden1,
            self.pred_hidden2,
            self.head_hidden
        )
    }
}
