use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Compute(#[from] cdds_compute::ComputeError),
    #[error("drug {drug_id}: {source}")]
    Parse { drug_id: String, source: cdds_chem::ChemError },
    #[error("unresolved {kind} id {id}")]
    UnresolvedId { kind: &'static str, id: String },
    #[error("cell line {cell} lacks gene {gene}")]
    MissingGene { cell: String, gene: String },
    #[error("gene list must hold {expected} distinct symbols, found {found}")]
    GeneList { expected: usize, found: usize },
    #[error("{protocol} split needs at least {k} distinct keys, found {found}")]
    InsufficientGroups { protocol: &'static str, k: usize, found: usize },
    #[error("missing {what}")]
    MissingKey { what: String },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("targets have zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty selection")]
    EmptySelection,
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::NonFiniteLoss { .. } | CoreError::Compute(cdds_compute::ComputeError::NonFinite { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
