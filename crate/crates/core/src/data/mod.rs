//! Dataset ingestion, expression normalization, split protocols and batching.

mod batches;
mod dataset;
mod folds;

pub use batches::{batches, Role};
pub use dataset::{
    binarize, read_gene_list, CellLine, Dataset, Drug, Normalizer, Sample, GENE_COUNT, SYNERGY_THRESHOLD,
};
pub use folds::{make_folds, rank_hash, FoldPlan, Protocol};
