//! Direct fidelity estimation (DFE) for n-qubit states at desk scale.
//!
//! Estimates the fidelity between a pure target state and its
//! depolarized preparation by importance-sampling Pauli observables, in
//! two flavors:
//!
//! * the original protocol, which samples individual Pauli strings with
//!   probability proportional to their squared target coefficient, and
//! * a grouped protocol, which first partitions the strings into
//!   commuting families by sorted insertion (qubit-wise or fully
//!   commuting) and samples whole families, measuring each in a common
//!   eigenbasis.
//!
//! Grouping spends fewer state copies for the same accuracy guarantee and
//! shrinks the estimator variance. The [`experiments`] module reproduces
//! those effects over seeded batches and writes CSV/JSON results; all
//! randomness is derived from explicit seeds, so every run is exactly
//! reproducible.

pub mod error;
pub mod experiments;
pub mod grouping;
pub mod measurement;
pub mod pauli;
pub mod protocol;
mod rng;
pub mod states;
pub mod verify;

pub use error::{DfeError, Result};
pub use experiments::{
    parse_results_csv, read_results, run_batch, variance_comparison, write_results, BatchConfig,
    ExperimentStats, ResultRow, RunRecord, VarianceReport,
};
pub use grouping::{singletons, sorted_insertion, Grouping, PauliGroup};
pub use measurement::{
    common_eigenbasis, sample_outcomes, BasisKind, MeasurementBasis, OutcomeSample,
};
pub use pauli::{expectation, Commutativity, PauliLetter, PauliString, MAX_QUBITS};
pub use protocol::{
    copies_grouped, copies_original, default_ell, estimate_x_grouped, expected_copy_bound,
    importance_sample, run_dfe, run_dfe_on_grouping, DfeConfig, DfeMode, DfeResult,
    MeasurementModel, Round,
};
pub use rng::{mix, stream_rng};
pub use states::{
    make_state, noisy_coefficient, pauli_coefficients, CoefficientTable, NoisyState, StateKind,
    StateVector, COEFFICIENT_THRESHOLD,
};
pub use verify::{run_invariant_suite, CheckResult};
