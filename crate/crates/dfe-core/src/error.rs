//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DfeError {
    #[error("qubit count {0} outside supported range 1..={max}", max = crate::pauli::MAX_QUBITS)]
    QubitCountOutOfRange(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state vector is not normalized: |psi|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    #[error("invalid Pauli string {input:?}: {reason}")]
    ParsePauli { input: String, reason: String },

    #[error("coefficient table is empty")]
    EmptyTable,

    #[error("group members do not all commute pairwise under {mode}")]
    NonCommutingGroup { mode: crate::pauli::Commutativity },

    #[error("no common eigenbasis resolved after {attempts} random weight draws")]
    DegenerateBasis { attempts: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid sampling weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalue table has {got} rows but the group has {expected} members")]
    EigenTableMismatch { expected: usize, got: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DfeError>;

impl DfeError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DfeError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
