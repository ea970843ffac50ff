use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChemError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("unsupported token {token:?} at position {position}")]
    UnsupportedToken { token: String, position: usize },
    #[error("ring-bond digit {0} is never closed")]
    UnclosedRing(u32),
    #[error("valence violation at atom {atom}: {detail}")]
    ValenceViolation { atom: usize, detail: String },
    #[error("fingerprint length mismatch: {0} vs {1} bits")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, ChemError>;
