//! Run-directory metadata and checkpoint loading.

use std::path::Path;

use cdds_chem::FEATURE_LAYOUT_VERSION;
use cdds_compute::{Checkpoint, ParameterStore};
use cdds_core::data::{Normalizer, GENE_COUNT};
use cdds_core::model::{init_params, Hyperparams};
use sha1::{Digest, Sha1};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash as `git hash-object` computes it.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Hash of the shape-determining hyperparameters.
pub fn config_hash(hp: &Hyperparams) -> String {
    hex(&Sha1::digest(hp.architecture_record().as_bytes()))
}

/// `key = value` lines describing a run.
pub fn run_record(cfg: &RunConfig, n_train: usize, n_valid: usize) -> Result<String> {
    let genes = std::fs::read(&cfg.data.genes)?;
    Ok(format!(
        "seed = {}\nsplit_seed = {}\nprotocol = {}\nfold = {}\nn_train = {}\nn_valid = {}\nconfig_hash = {}\ngene_list_hash = {}\nfeature_layout_version = {}\ncheckpoint_version = {}\n",
        cfg.train.seed,
        cfg.split.seed,
        cfg.split.protocol,
        cfg.split.fold,
        n_train,
        n_valid,
        config_hash(&cfg.hp),
        git_blob_hash(&genes),
        FEATURE_LAYOUT_VERSION,
        cdds_compute::checkpoint::VERSION,
    ))
}

pub fn save_checkpoint(path: &Path, cfg: &RunConfig, store: &ParameterStore<f32>) -> Result<()> {
    Checkpoint::from_store(&cfg.to_text(), store).save(path)?;
    Ok(())
}

/// Architecture hash recorded inside a checkpoint (`None` if its embedded
/// config does not parse).
pub fn checkpoint_hash(ckpt: &Checkpoint) -> Option<String> {
    RunConfig::parse(&ckpt.config, Path::new("/")).ok().map(|c| config_hash(&c.hp))
}

/// Loads a checkpoint into a store shaped by `cfg`. An architecture-hash
/// mismatch is an error unless `force`, in which case shapes decide.
pub fn load_model(cfg: &RunConfig, path: &Path, force: bool) -> Result<ParameterStore<f32>> {
    let ckpt = Checkpoint::load(path)?;
    let expected = config_hash(&cfg.hp);
    let found = checkpoint_hash(&ckpt).unwrap_or_else(|| "unknown".into());
    if found != expected {
        if !force {
            return Err(CliError::ConfigHashMismatch { expected, found });
        }
        log::warn!("loading {} despite config hash mismatch ({found} vs {expected})", path.display());
    }
    let placeholder = Normalizer { mean: vec![0.0; GENE_COUNT], std: vec![1.0; GENE_COUNT] };
    let mut store = init_params(&cfg.hp, cfg.train.seed, &placeholder);
    ckpt.apply_to(&mut store)?;
    Ok(store)
}
