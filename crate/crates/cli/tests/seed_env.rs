//! Kept in its own binary: it mutates the process environment.

use cdds_cli::config::{RunConfig, SEED_ENV};
use cdds_cli::CliError;

#[test]
fn seed_override_applies_only_to_train_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ini");
    std::fs::write(&path, "[data]\ndrugs = d.csv\ncells = c.csv\nsamples = s.csv\ngenes = g.txt\n\n[train]\nseed = 4\n\n[split]\nseed = 9\n").unwrap();
    std::env::remove_var(SEED_ENV);
    assert_eq!(RunConfig::load(&path).unwrap().train.seed, 4);
    std::env::set_var(SEED_ENV, "17");
    let c = RunConfig::load(&path).unwrap();
    assert_eq!((c.train.seed, c.split.seed), (17, 9));
    assert_eq!(c.data.drugs, dir.path().join("d.csv"));
    assert!(c.to_text().contains("[train]\nepochs = 40\nbatch_size = 128\nlr = 0.001\nseed = 17\n"));
    std::env::set_var(SEED_ENV, "seventeen");
    assert!(matches!(RunConfig::load(&path), Err(CliError::Config(_))));
    std::env::remove_var(SEED_ENV);
}
