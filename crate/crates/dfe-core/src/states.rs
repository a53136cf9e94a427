//! Target states, their Pauli coefficient tables, and the depolarizing
//! noise model.
//!
//! The noisy state is never materialized as a density matrix. It stays in
//! the factored form `(1-p)|psi><psi| + p/d`, which makes outcome
//! probabilities and Pauli coefficients exact and O(d).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DfeError, Result};
use crate::measurement::MeasurementBasis;
use crate::pauli::{PauliString, MAX_QUBITS};
use crate::rng::stream_rng;

/// Default cutoff below which a Pauli coefficient is treated as zero.
pub const COEFFICIENT_THRESHOLD: f64 = 1e-12;

/// A pure n-qubit state as 2^n complex amplitudes, qubit j on bit j.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Validated constructor: length 2^n and unit norm within 1e-10.
    pub fn new(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        if amps.len() != 1 << n {
            return Err(DfeError::DimensionMismatch {
                expected: 1 << n,
                got: amps.len(),
            });
        }
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-10 {
            return Err(DfeError::NotNormalized { norm_sq });
        }
        Ok(StateVector { n, amps })
    }

    /// Internal constructor for amplitudes that are normalized by
    /// construction.
    pub(crate) fn from_parts(n: usize, amps: Vec<Complex64>) -> Self {
        StateVector { n, amps }
    }

    /// Computational basis state |index>.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let d = 1 << n;
        if index >= d {
            return Err(DfeError::InvalidParameter(format!(
                "basis index {index} out of range for dimension {d}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    /// (|0...0> + |1...1>)/sqrt(2).
    pub fn ghz(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let d = 1 << n;
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amps[0] = a;
        amps[d - 1] = a;
        Ok(StateVector { n, amps })
    }

    /// Equal superposition of the weight-1 computational basis states.
    pub fn w(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let d = 1 << n;
        let mut amps = vec![Complex64::new(0.0, 0.0); d];
        let a = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        for j in 0..n {
            amps[1 << j] = a;
        }
        Ok(StateVector { n, amps })
    }

    /// Haar-random state: i.i.d. standard complex Gaussian amplitudes,
    /// normalized. Bit-identical for equal `(n, seed)`.
    pub fn haar_random(n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let mut rng = stream_rng(seed, 0);
        let d = 1 << n;
        let mut amps = Vec::with_capacity(d);
        for _ in 0..d {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            amps.push(Complex64::new(re, im));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// <self|other>.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dimension() != other.dimension() {
            return Err(DfeError::DimensionMismatch {
                expected: self.dimension(),
                got: other.dimension(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// Families of target states used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Haar,
    W,
    Ghz,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateKind::Haar => write!(f, "haar"),
            StateKind::W => write!(f, "w"),
            StateKind::Ghz => write!(f, "ghz"),
        }
    }
}

impl FromStr for StateKind {
    type Err = DfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(StateKind::Haar),
            "w" => Ok(StateKind::W),
            "ghz" => Ok(StateKind::Ghz),
            other => Err(DfeError::InvalidParameter(format!(
                "unknown state kind {other:?} (expected haar|w|ghz)"
            ))),
        }
    }
}

/// Construct a target state. W and GHZ ignore the seed; Haar states are
/// deterministic given it.
pub fn make_state(kind: StateKind, n: usize, seed: u64) -> Result<StateVector> {
    match kind {
        StateKind::Haar => StateVector::haar_random(n, seed),
        StateKind::W => StateVector::w(n),
        StateKind::Ghz => StateVector::ghz(n),
    }
}

/// Depolarized target: `sigma = (1-p)|psi><psi| + p/d`, kept factored.
#[derive(Debug, Clone)]
pub struct NoisyState {
    target: StateVector,
    p: f64,
}

impl NoisyState {
    pub fn new(target: StateVector, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(DfeError::InvalidParameter(format!(
                "depolarizing probability {p} outside [0, 1]"
            )));
        }
        Ok(NoisyState { target, p })
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.target.n()
    }

    pub fn dimension(&self) -> usize {
        self.target.dimension()
    }

    /// Fidelity against the ideal target: `(1-p) + p/d`, exact.
    pub fn true_fidelity(&self) -> f64 {
        let d = self.dimension() as f64;
        (1.0 - self.p) + self.p / d
    }

    /// Probability of each outcome when measuring in `basis`:
    /// `(1-p)|<r|psi>|^2 + p/d`.
    pub fn outcome_probabilities(&self, basis: &MeasurementBasis) -> Result<Vec<f64>> {
        if basis.n() != self.n() {
            return Err(DfeError::DimensionMismatch {
                expected: self.dimension(),
                got: basis.dimension(),
            });
        }
        let d = self.dimension() as f64;
        let overlaps = basis.state_overlaps(&self.target)?;
        Ok(overlaps
            .iter()
            .map(|o| (1.0 - self.p) * o.norm_sqr() + self.p / d)
            .collect())
    }
}

/// Coefficient of a Pauli string in the noisy state given its coefficient
/// `b` in the pure target. The identity picks up the maximally mixed part.
pub fn noisy_coefficient(b: f64, is_identity: bool, p: f64, d: usize) -> f64 {
    if is_identity {
        1.0 / (d as f64).sqrt()
    } else {
        (1.0 - p) * b
    }
}

/// Map from Pauli strings to target-state coefficients
/// `b_k = <psi|P_k|psi> / sqrt(d)`, in canonical string order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    n: usize,
    entries: Vec<(PauliString, f64)>,
}

impl CoefficientTable {
    pub fn from_entries(n: usize, entries: Vec<(PauliString, f64)>) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        for (p, _) in &entries {
            if p.n() != n {
                return Err(DfeError::DimensionMismatch {
                    expected: n,
                    got: p.n(),
                });
            }
        }
        Ok(CoefficientTable { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        1 << self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(PauliString, f64)] {
        &self.entries
    }

    pub fn get(&self, p: &PauliString) -> Option<f64> {
        // Entries produced by enumeration are already in canonical order.
        match self.entries.binary_search_by(|(q, _)| q.cmp(p)) {
            Ok(i) => Some(self.entries[i].1),
            Err(_) => self.entries.iter().find(|(q, _)| q == p).map(|(_, b)| *b),
        }
    }

    pub fn identity_coefficient(&self) -> Option<f64> {
        let id = PauliString::identity(self.n).ok()?;
        self.get(&id)
    }

    /// Sum of squared coefficients; 1 for a complete table of a pure state.
    pub fn sum_sq(&self) -> f64 {
        self.entries.iter().map(|(_, b)| b * b).sum()
    }

    /// Write as CSV with columns `pauli,coefficient`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for (p, b) in &self.entries {
            out.serialize(CoefficientRow {
                pauli: p.to_string(),
                coefficient: *b,
            })
            .map_err(|e| DfeError::Malformed(e.to_string()))?;
        }
        out.flush()
            .map_err(|e| DfeError::Malformed(e.to_string()))?;
        Ok(())
    }

    /// Parse the CSV produced by [`CoefficientTable::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let mut entries: Vec<(PauliString, f64)> = Vec::new();
        let mut n = None;
        for row in input.deserialize::<CoefficientRow>() {
            let row = row.map_err(|e| DfeError::Malformed(e.to_string()))?;
            let p: PauliString = row.pauli.parse()?;
            if !row.coefficient.is_finite() {
                return Err(DfeError::Malformed(format!(
                    "non-finite coefficient for {}",
                    row.pauli
                )));
            }
            match n {
                None => n = Some(p.n()),
                Some(n) if n != p.n() => {
                    return Err(DfeError::Malformed(
                        "mixed qubit counts in coefficient table".to_string(),
                    ))
                }
                _ => {}
            }
            entries.push((p, row.coefficient));
        }
        let n = n.ok_or(DfeError::EmptyTable)?;
        let mut seen = std::collections::HashSet::new();
        for (p, _) in &entries {
            if !seen.insert(*p) {
                return Err(DfeError::Malformed(format!("duplicate entry for {p}")));
            }
        }
        CoefficientTable::from_entries(n, entries)
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_csv(bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientRow {
    pauli: String,
    coefficient: f64,
}

/// Enumerate all 4^n Pauli coefficients of a pure state, keeping entries
/// with `|b| > threshold`. O(8^n): one O(d) pass per string.
pub fn pauli_coefficients(psi: &StateVector, threshold: f64) -> Result<CoefficientTable> {
    if threshold < 0.0 {
        return Err(DfeError::InvalidParameter(format!(
            "negative threshold {threshold}"
        )));
    }
    let norm_sq = psi.norm_sq();
    if (norm_sq - 1.0).abs() > 1e-8 {
        return Err(DfeError::NotNormalized { norm_sq });
    }
    let n = psi.n();
    let sqrt_d = (psi.dimension() as f64).sqrt();
    let all: Vec<PauliString> = PauliString::enumerate_all(n)?.collect();
    // Deterministic merge order: chunks of the canonical enumeration.
    let entries: Vec<(PauliString, f64)> = all
        .par_chunks(1 << n)
        .flat_map_iter(|chunk| {
            let mut kept = Vec::new();
            for p in chunk {
                let b = p.expectation_of_amplitudes(psi.amplitudes()) / sqrt_d;
                if b.abs() > threshold {
                    kept.push((*p, b));
                }
            }
            kept
        })
        .collect();
    CoefficientTable::from_entries(n, entries)
}
