//! Common eigenbases of commuting families and simulated measurement.
//!
//! Qubit-wise commuting groups get a tensor-product eigenbasis read off
//! letter by letter. General fully commuting groups are diagonalized
//! through a random generic linear combination of the members; the
//! resulting eigenvector table is verified and the weights are redrawn if
//! a degenerate draw mixed eigenspaces.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::Distribution;

use crate::error::{DfeError, Result};
use crate::grouping::PauliGroup;
use crate::pauli::{Commutativity, PauliLetter, PauliString};
use crate::rng::stream_rng;
use crate::states::StateVector;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const MAX_WEIGHT_DRAWS: usize = 5;

/// Whether a basis factorizes over qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Product,
    Entangled,
}

#[derive(Debug, Clone)]
enum BasisRepr {
    /// Tensor product of single-qubit eigenbases, one letter per qubit.
    Product(Vec<PauliLetter>),
    /// Explicit orthonormal columns.
    Dense(DMatrix<Complex64>),
}

/// Orthonormal basis diagonalizing every member of a group, with the
/// member eigenvalue for each outcome.
#[derive(Debug, Clone)]
pub struct MeasurementBasis {
    n: usize,
    kind: BasisKind,
    repr: BasisRepr,
    /// `eigen_table[l][r]` is the eigenvalue (+1 or -1) of member `l` on
    /// basis state `r`.
    eigen_table: Vec<Vec<i8>>,
}

impl MeasurementBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        1 << self.n
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn num_members(&self) -> usize {
        self.eigen_table.len()
    }

    pub fn eigen_row(&self, member: usize) -> &[i8] {
        &self.eigen_table[member]
    }

    pub fn eigenvalue(&self, member: usize, outcome: usize) -> i8 {
        self.eigen_table[member][outcome]
    }

    /// `<r|psi>` for every outcome `r`.
    pub fn state_overlaps(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        if psi.n() != self.n {
            return Err(DfeError::DimensionMismatch {
                expected: self.dimension(),
                got: psi.dimension(),
            });
        }
        match &self.repr {
            BasisRepr::Product(letters) => {
                let mut amps = psi.amplitudes().to_vec();
                for (qubit, letter) in letters.iter().enumerate() {
                    apply_single_qubit_adjoint(&mut amps, qubit, *letter);
                }
                Ok(amps)
            }
            BasisRepr::Dense(columns) => {
                let d = self.dimension();
                let amps = psi.amplitudes();
                let mut out = Vec::with_capacity(d);
                for r in 0..d {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for s in 0..d {
                        acc += columns[(s, r)].conj() * amps[s];
                    }
                    out.push(acc);
                }
                Ok(out)
            }
        }
    }

    /// Basis state |r> as amplitudes. Intended for diagnostics and tests.
    pub fn column(&self, r: usize) -> Vec<Complex64> {
        let d = self.dimension();
        assert!(r < d);
        match &self.repr {
            BasisRepr::Product(letters) => {
                let mut out = vec![Complex64::new(1.0, 0.0); d];
                for (s, amp) in out.iter_mut().enumerate() {
                    for (qubit, letter) in letters.iter().enumerate() {
                        let row = s >> qubit & 1;
                        let col = r >> qubit & 1;
                        *amp *= single_qubit_eigenvector_entry(*letter, row, col);
                    }
                }
                out
            }
            BasisRepr::Dense(columns) => (0..d).map(|s| columns[(s, r)]).collect(),
        }
    }
}

/// Entry `(row, col)` of the 2x2 matrix whose columns are the +1 and -1
/// eigenvectors of the letter (Z for the identity).
fn single_qubit_eigenvector_entry(letter: PauliLetter, row: usize, col: usize) -> Complex64 {
    let r = FRAC_1_SQRT_2;
    match letter {
        PauliLetter::I | PauliLetter::Z => {
            if row == col {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }
        PauliLetter::X => {
            if row == 0 || col == 0 {
                Complex64::new(r, 0.0)
            } else {
                Complex64::new(-r, 0.0)
            }
        }
        PauliLetter::Y => match (row, col) {
            (0, _) => Complex64::new(r, 0.0),
            (1, 0) => Complex64::new(0.0, r),
            _ => Complex64::new(0.0, -r),
        },
    }
}

/// In-place `u^dag` on one qubit, where `u` columns are the letter's
/// eigenvectors.
fn apply_single_qubit_adjoint(amps: &mut [Complex64], qubit: usize, letter: PauliLetter) {
    if matches!(letter, PauliLetter::I | PauliLetter::Z) {
        return;
    }
    let stride = 1 << qubit;
    let d = amps.len();
    let mut base = 0;
    while base < d {
        for offset in base..base + stride {
            let a = amps[offset];
            let b = amps[offset + stride];
            let (lo, hi) = match letter {
                PauliLetter::X => ((a + b) * FRAC_1_SQRT_2, (a - b) * FRAC_1_SQRT_2),
                PauliLetter::Y => (
                    (a - Complex64::new(0.0, 1.0) * b) * FRAC_1_SQRT_2,
                    (a + Complex64::new(0.0, 1.0) * b) * FRAC_1_SQRT_2,
                ),
                _ => unreachable!(),
            };
            amps[offset] = lo;
            amps[offset + stride] = hi;
        }
        base += 2 * stride;
    }
}

/// Construct the common eigenbasis of a pairwise commuting group.
///
/// Under qubit-wise commutativity the basis is the tensor product of
/// single-qubit eigenbases and eigenvalues are outcome-bit parities. Under
/// full commutativity the basis comes from diagonalizing a random generic
/// combination of the members, retried on degenerate draws; the basis is
/// still labeled `Product` when the group happens to be qubit-wise
/// commuting.
pub fn common_eigenbasis(
    group: &PauliGroup,
    mode: Commutativity,
    seed: u64,
) -> Result<MeasurementBasis> {
    if group.is_empty() {
        return Err(DfeError::InvalidParameter("empty group".to_string()));
    }
    let n = group.members()[0].0.n();
    for (p, _) in group.members() {
        if p.n() != n {
            return Err(DfeError::DimensionMismatch {
                expected: n,
                got: p.n(),
            });
        }
    }
    if !group.is_pairwise_commuting(mode)? {
        return Err(DfeError::NonCommutingGroup { mode });
    }
    match mode {
        Commutativity::QubitWise => product_basis(group, n),
        Commutativity::Full => {
            if group.is_pairwise_commuting(Commutativity::QubitWise)? {
                // A qubit-wise commuting family already has a product
                // eigenbasis; no diagonalization needed.
                product_basis(group, n)
            } else {
                dense_basis(group, n, seed)
            }
        }
    }
}

fn product_basis(group: &PauliGroup, n: usize) -> Result<MeasurementBasis> {
    let mut letters = vec![PauliLetter::I; n];
    for (p, _) in group.members() {
        for (j, letter) in p.letters().enumerate() {
            if letter == PauliLetter::I {
                continue;
            }
            if letters[j] == PauliLetter::I {
                letters[j] = letter;
            } else if letters[j] != letter {
                return Err(DfeError::NonCommutingGroup {
                    mode: Commutativity::QubitWise,
                });
            }
        }
    }
    // Unconstrained qubits default to the computational basis.
    for letter in &mut letters {
        if *letter == PauliLetter::I {
            *letter = PauliLetter::Z;
        }
    }

    let d = 1usize << n;
    let eigen_table = group
        .members()
        .iter()
        .map(|(p, _)| {
            let mask = p.support_mask() as usize;
            (0..d)
                .map(|r| {
                    if (r & mask).count_ones().is_multiple_of(2) {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect();

    Ok(MeasurementBasis {
        n,
        kind: BasisKind::Product,
        repr: BasisRepr::Product(letters),
        eigen_table,
    })
}

fn dense_basis(group: &PauliGroup, n: usize, seed: u64) -> Result<MeasurementBasis> {
    let d = 1usize << n;
    let non_identity: Vec<&PauliString> = group
        .members()
        .iter()
        .map(|(p, _)| p)
        .filter(|p| !p.is_identity())
        .collect();
    debug_assert!(!non_identity.is_empty(), "qubit-wise path handles these");

    for attempt in 0..MAX_WEIGHT_DRAWS {
        let mut rng = stream_rng(seed, attempt as u64);
        let mut combined = DMatrix::<Complex64>::zeros(d, d);
        for p in &non_identity {
            let w: f64 = rng.gen_range(1.0..2.0);
            accumulate_pauli(&mut combined, p, w);
        }
        let eig = combined.symmetric_eigen();

        if let Some(columns) = snap_to_joint_eigenbasis(&non_identity, &eig.eigenvectors, d) {
            if let Some(eigen_table) = verify_eigenvectors(group, &columns, d) {
                return Ok(MeasurementBasis {
                    n,
                    kind: BasisKind::Entangled,
                    repr: BasisRepr::Dense(columns),
                    eigen_table,
                });
            }
        }
    }
    Err(DfeError::DegenerateBasis {
        attempts: MAX_WEIGHT_DRAWS,
    })
}

/// Polish the numerical eigenvectors into exact joint eigenvectors.
///
/// For each column, read the eigenvalue sign of every member from the
/// Rayleigh quotient and project onto that member's eigenspace with
/// `(1 + c P)/2`, which is exact for involutions. Columns that end up in
/// the same sign pattern span a genuinely degenerate subspace and are
/// re-orthonormalized among themselves; distinct patterns are orthogonal
/// by construction. Returns None when a column cannot be attributed to a
/// single pattern (a degenerate weight draw mixed eigenspaces).
fn snap_to_joint_eigenbasis(
    non_identity: &[&PauliString],
    approx: &DMatrix<Complex64>,
    d: usize,
) -> Option<DMatrix<Complex64>> {
    let mut columns: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let mut patterns: Vec<Vec<i8>> = Vec::with_capacity(d);
    for r in 0..d {
        let mut v: Vec<Complex64> = (0..d).map(|s| approx[(s, r)]).collect();
        let mut pattern = Vec::with_capacity(non_identity.len());
        for p in non_identity {
            let image = p.apply_to_amplitudes(&v);
            let rayleigh: Complex64 = v.iter().zip(&image).map(|(a, b)| a.conj() * b).sum();
            // A clean near-eigenvector has a Rayleigh quotient near +1
            // or -1; anything in between means eigenspace mixing.
            if rayleigh.re.abs() < 0.5 || rayleigh.im.abs() > 0.25 {
                return None;
            }
            let c = if rayleigh.re >= 0.0 { 1.0 } else { -1.0 };
            for (a, b) in v.iter_mut().zip(&image) {
                *a = (*a + c * b) * 0.5;
            }
            pattern.push(c as i8);
        }
        if !normalize(&mut v) {
            return None;
        }
        columns.push(v);
        patterns.push(pattern);
    }

    // Modified Gram-Schmidt inside each sign-pattern class.
    for r in 0..d {
        for q in 0..r {
            if patterns[q] != patterns[r] {
                continue;
            }
            let overlap: Complex64 = columns[q]
                .iter()
                .zip(&columns[r])
                .map(|(a, b)| a.conj() * b)
                .sum();
            let (prev, cur) = columns.split_at_mut(r);
            for (a, b) in prev[q].iter().zip(cur[0].iter_mut()) {
                *b -= overlap * a;
            }
        }
        if !normalize(&mut columns[r]) {
            return None;
        }
    }

    Some(DMatrix::from_fn(d, d, |s, r| columns[r][s]))
}

/// Scale to unit norm; false when the vector lost most of its mass.
fn normalize(v: &mut [Complex64]) -> bool {
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm < 0.5 {
        return false;
    }
    for a in v.iter_mut() {
        *a /= norm;
    }
    true
}

/// `m += w * P` using the sparse one-entry-per-column structure of a Pauli
/// string.
fn accumulate_pauli(m: &mut DMatrix<Complex64>, p: &PauliString, w: f64) {
    let d = p.dimension();
    let x = p.x_bits() as usize;
    for s in 0..d {
        m[(s ^ x, s)] += w * p.phase_on(s);
    }
}

/// Check that every column is an eigenvector of every member with
/// eigenvalue +1 or -1; returns the eigenvalue table on success.
fn verify_eigenvectors(
    group: &PauliGroup,
    columns: &DMatrix<Complex64>,
    d: usize,
) -> Option<Vec<Vec<i8>>> {
    let mut table = Vec::with_capacity(group.len());
    let mut column = vec![Complex64::new(0.0, 0.0); d];
    for (p, _) in group.members() {
        if p.is_identity() {
            table.push(vec![1i8; d]);
            continue;
        }
        let mut row = Vec::with_capacity(d);
        for r in 0..d {
            for (s, c) in column.iter_mut().enumerate() {
                *c = columns[(s, r)];
            }
            let image = p.apply_to_amplitudes(&column);
            let raw: Complex64 = column.iter().zip(&image).map(|(v, pv)| v.conj() * pv).sum();
            let c = if raw.re >= 0.0 { 1.0 } else { -1.0 };
            if (raw.re - c).abs() > 1e-8 || raw.im.abs() > 1e-8 {
                return None;
            }
            let residual: f64 = column
                .iter()
                .zip(&image)
                .map(|(v, pv)| (pv - c * v).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if residual > 1e-8 {
                return None;
            }
            row.push(c as i8);
        }
        table.push(row);
    }
    Some(table)
}

/// Aggregated counts of `total` measurement shots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSample {
    counts: Vec<u64>,
    total: u64,
}

impl OutcomeSample {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn dimension(&self) -> usize {
        self.counts.len()
    }
}

/// Draw `shots` i.i.d. outcomes from a categorical distribution and
/// aggregate them into counts.
///
/// Sampling is done bucket by bucket with conditional binomials, so the
/// cost is O(d) regardless of the shot count. Deterministic given the rng
/// state.
pub fn sample_outcomes<R: Rng>(probs: &[f64], shots: u64, rng: &mut R) -> Result<OutcomeSample> {
    if probs.is_empty() {
        return Err(DfeError::InvalidProbabilities("empty vector".to_string()));
    }
    if shots == 0 {
        return Err(DfeError::InvalidParameter(
            "shot count must be at least 1".to_string(),
        ));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !p.is_finite() || p < -1e-12 {
            return Err(DfeError::InvalidProbabilities(format!(
                "entry {p} is negative or non-finite"
            )));
        }
        sum += p.max(0.0);
    }
    if (sum - 1.0).abs() > 1e-8 {
        return Err(DfeError::InvalidProbabilities(format!(
            "entries sum to {sum}, expected 1"
        )));
    }

    let d = probs.len();
    let mut counts = vec![0u64; d];
    let mut remaining_shots = shots;
    let mut remaining_mass = sum;
    for r in 0..d {
        if remaining_shots == 0 {
            break;
        }
        if r == d - 1 {
            counts[r] = remaining_shots;
            break;
        }
        let p = probs[r].max(0.0);
        let conditional = if remaining_mass > 0.0 {
            (p / remaining_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = rand_distr::Binomial::new(remaining_shots, conditional)
            .expect("conditional probability is clamped to [0, 1]")
            .sample(rng);
        counts[r] = draw;
        remaining_shots -= draw;
        remaining_mass = (remaining_mass - p).max(0.0);
    }
    Ok(OutcomeSample {
        counts,
        total: shots,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::pauli::dense;
    use crate::states::{
        make_state, noisy_coefficient, pauli_coefficients, NoisyState, StateKind,
        COEFFICIENT_THRESHOLD,
    };
    use crate::{grouping, pauli::expectation};

    fn group_of(strings: &[(&str, f64)]) -> PauliGroup {
        PauliGroup::new(
            0,
            strings
                .iter()
                .map(|(s, b)| (s.parse().unwrap(), *b))
                .collect(),
        )
    }

    fn assert_orthonormal(basis: &MeasurementBasis) {
        let d = basis.dimension();
        for r in 0..d {
            let vr = basis.column(r);
            for s in r..d {
                let vs = basis.column(s);
                let dot: Complex64 = vr.iter().zip(&vs).map(|(a, b)| a.conj() * b).sum();
                let expected = if r == s { 1.0 } else { 0.0 };
                assert!(
                    (dot - Complex64::new(expected, 0.0)).norm() < 1e-9,
                    "columns {r},{s}: {dot}"
                );
            }
        }
    }

    /// Every eigen table entry must match the Rayleigh quotient of the
    /// dense matrix, and the column must be an actual eigenvector.
    fn assert_eigen_table_valid(basis: &MeasurementBasis, group: &PauliGroup) {
        let d = basis.dimension();
        for (l, (p, _)) in group.members().iter().enumerate() {
            let m = dense::pauli_matrix(p);
            let mut eigenvalue_sum = 0i64;
            for r in 0..d {
                let v = basis.column(r);
                let pv = dense::matvec(&m, &v);
                let c = basis.eigenvalue(l, r) as f64;
                let rayleigh: Complex64 = v.iter().zip(&pv).map(|(a, b)| a.conj() * b).sum();
                assert!(
                    (rayleigh - Complex64::new(c, 0.0)).norm() <= 1e-8,
                    "{p} outcome {r}: rayleigh {rayleigh} vs {c}"
                );
                let residual: f64 = pv
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - c * b).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(residual <= 1e-8, "{p} outcome {r}: residual {residual}");
                eigenvalue_sum += basis.eigenvalue(l, r) as i64;
            }
            if p.is_identity() {
                assert_eq!(eigenvalue_sum, d as i64);
            } else {
                assert_eq!(eigenvalue_sum, 0, "{p} eigenvalues must balance");
            }
        }
    }

    #[test]
    fn qwc_product_basis_example() {
        let group = group_of(&[("XI", 0.8), ("IZ", 0.6)]);
        let basis = common_eigenbasis(&group, Commutativity::QubitWise, 0).unwrap();
        assert_eq!(basis.kind(), BasisKind::Product);

        // |+0> is outcome 0, |-1> is outcome 3.
        assert_eq!(basis.eigenvalue(0, 0), 1);
        assert_eq!(basis.eigenvalue(1, 3), -1);

        let plus_zero = basis.column(0);
        let r = FRAC_1_SQRT_2;
        assert!((plus_zero[0] - Complex64::new(r, 0.0)).norm() < 1e-12);
        assert!((plus_zero[1] - Complex64::new(r, 0.0)).norm() < 1e-12);
        assert!(plus_zero[2].norm() < 1e-12);

        assert_orthonormal(&basis);
        assert_eigen_table_valid(&basis, &group);
    }

    #[test]
    fn all_z_singleton_gets_computational_basis() {
        let group = group_of(&[("ZZZ", 0.5)]);
        let basis = common_eigenbasis(&group, Commutativity::QubitWise, 0).unwrap();
        for r in 0..8 {
            let expected = if (r as u32).count_ones().is_multiple_of(2) {
                1
            } else {
                -1
            };
            assert_eq!(basis.eigenvalue(0, r), expected);
            let col = basis.column(r);
            assert!((col[r] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn bell_group_diagonalizes_to_bell_states() {
        let group = group_of(&[("II", 0.5), ("ZZ", 0.5), ("XX", 0.5), ("YY", -0.5)]);
        let basis = common_eigenbasis(&group, Commutativity::Full, 3).unwrap();
        assert_eq!(basis.kind(), BasisKind::Entangled);
        assert_orthonormal(&basis);
        assert_eigen_table_valid(&basis, &group);

        // One outcome must be |Phi+> with (II, ZZ, XX, YY) -> (+1, +1, +1, -1).
        let phi_plus = StateVector::ghz(2).unwrap();
        let mut found = false;
        for r in 0..4 {
            let col = basis.column(r);
            let overlap: Complex64 = phi_plus
                .amplitudes()
                .iter()
                .zip(&col)
                .map(|(a, b)| a.conj() * b)
                .sum();
            if (overlap.norm() - 1.0).abs() < 1e-9 {
                assert_eq!(basis.eigen_row(0)[r], 1, "II");
                assert_eq!(basis.eigen_row(1)[r], 1, "ZZ");
                assert_eq!(basis.eigen_row(2)[r], 1, "XX");
                assert_eq!(basis.eigen_row(3)[r], -1, "YY");
                found = true;
            }
        }
        assert!(found, "no basis column matched |Phi+>");
    }

    #[test]
    fn non_commuting_group_is_rejected() {
        let group = group_of(&[("XX", 0.5), ("ZZ", 0.5)]);
        assert!(matches!(
            common_eigenbasis(&group, Commutativity::QubitWise, 0),
            Err(DfeError::NonCommutingGroup { .. })
        ));
        let group = group_of(&[("XI", 0.5), ("ZI", 0.5)]);
        assert!(matches!(
            common_eigenbasis(&group, Commutativity::Full, 0),
            Err(DfeError::NonCommutingGroup { .. })
        ));
    }

    #[test]
    fn total_expectation_recovers_noisy_pauli_coefficients() {
        // sum_r p(r) c_l^(r) must equal Tr(sigma P_l) = sqrt(d) a_l.
        let psi = make_state(StateKind::Haar, 3, 17).unwrap();
        let sigma = NoisyState::new(psi.clone(), 0.1).unwrap();
        let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).unwrap();
        let d = 8usize;
        for mode in [Commutativity::QubitWise, Commutativity::Full] {
            let grouping = grouping::sorted_insertion(&table, mode).unwrap();
            for group in grouping.groups().iter().take(6) {
                let basis = common_eigenbasis(group, mode, 5).unwrap();
                let probs = sigma.outcome_probabilities(&basis).unwrap();
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                for (l, (p, b)) in group.members().iter().enumerate() {
                    let via_basis: f64 = probs
                        .iter()
                        .enumerate()
                        .map(|(r, pr)| pr * basis.eigenvalue(l, r) as f64)
                        .sum();
                    let a = noisy_coefficient(*b, p.is_identity(), sigma.p(), d);
                    assert!(
                        (via_basis - (d as f64).sqrt() * a).abs() < 1e-8,
                        "{p}: {via_basis} vs {}",
                        (d as f64).sqrt() * a
                    );
                }
            }
        }
    }

    #[test]
    fn qwc_and_fc_paths_agree_on_qwc_groups() {
        let psi = make_state(StateKind::Haar, 3, 23).unwrap();
        let sigma = NoisyState::new(psi.clone(), 0.2).unwrap();
        let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).unwrap();
        let grouping = grouping::sorted_insertion(&table, Commutativity::QubitWise).unwrap();
        for group in grouping.groups().iter().take(4) {
            let qwc = common_eigenbasis(group, Commutativity::QubitWise, 9).unwrap();
            let fc = common_eigenbasis(group, Commutativity::Full, 9).unwrap();
            assert_eq!(fc.kind(), BasisKind::Product);

            let mut pq = sigma.outcome_probabilities(&qwc).unwrap();
            let mut pf = sigma.outcome_probabilities(&fc).unwrap();
            pq.sort_by(f64::total_cmp);
            pf.sort_by(f64::total_cmp);
            for (a, b) in pq.iter().zip(&pf) {
                assert!((a - b).abs() < 1e-9);
            }

            let probs_q = sigma.outcome_probabilities(&qwc).unwrap();
            let probs_f = sigma.outcome_probabilities(&fc).unwrap();
            for l in 0..group.len() {
                let eq: f64 = probs_q
                    .iter()
                    .enumerate()
                    .map(|(r, p)| p * qwc.eigenvalue(l, r) as f64)
                    .sum();
                let ef: f64 = probs_f
                    .iter()
                    .enumerate()
                    .map(|(r, p)| p * fc.eigenvalue(l, r) as f64)
                    .sum();
                assert!((eq - ef).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn overlaps_match_explicit_columns() {
        let psi = make_state(StateKind::Haar, 3, 4).unwrap();
        let group = group_of(&[("XYZ", 0.4), ("YXZ", 0.3)]);
        assert!(group.is_pairwise_commuting(Commutativity::Full).unwrap());
        let basis = common_eigenbasis(&group, Commutativity::Full, 1).unwrap();
        let overlaps = basis.state_overlaps(&psi).unwrap();
        for r in 0..8 {
            let col = basis.column(r);
            let direct: Complex64 = col
                .iter()
                .zip(psi.amplitudes())
                .map(|(c, a)| c.conj() * a)
                .sum();
            assert!((overlaps[r] - direct).norm() < 1e-10);
        }
        // Unitarity: squared overlaps form a distribution.
        let total: f64 = overlaps.iter().map(|o| o.norm_sqr()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn product_overlaps_match_expectation() {
        // <psi|P|psi> reconstructed from the product basis of P's letters.
        let psi = make_state(StateKind::Haar, 4, 31).unwrap();
        for s in ["XYZX", "IYXI", "ZZXY"] {
            let p: PauliString = s.parse().unwrap();
            let group = PauliGroup::new(0, vec![(p, 1.0)]);
            let basis = common_eigenbasis(&group, Commutativity::QubitWise, 0).unwrap();
            let overlaps = basis.state_overlaps(&psi).unwrap();
            let via_basis: f64 = overlaps
                .iter()
                .enumerate()
                .map(|(r, o)| o.norm_sqr() * basis.eigenvalue(0, r) as f64)
                .sum();
            assert!(
                (via_basis - expectation(&psi, &p).unwrap()).abs() < 1e-10,
                "{s}"
            );
        }
    }

    #[test]
    fn bell_basis_outcome_probabilities() {
        let bell = StateVector::ghz(2).unwrap();
        let sigma = NoisyState::new(bell, 0.1).unwrap();
        let group = group_of(&[("II", 0.5), ("ZZ", 0.5), ("XX", 0.5), ("YY", -0.5)]);
        let basis = common_eigenbasis(&group, Commutativity::Full, 3).unwrap();
        let mut probs = sigma.outcome_probabilities(&basis).unwrap();
        probs.sort_by(f64::total_cmp);
        let expected = [0.025, 0.025, 0.025, 0.925];
        for (got, want) in probs.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn sample_outcomes_deterministic_point_mass() {
        let mut rng = stream_rng(1, 0);
        let sample = sample_outcomes(&[1.0, 0.0, 0.0, 0.0], 10, &mut rng).unwrap();
        assert_eq!(sample.counts(), &[10, 0, 0, 0]);
        assert_eq!(sample.total(), 10);
    }

    #[test]
    fn sample_outcomes_uniform_concentration() {
        let mut rng = stream_rng(2, 0);
        let sample = sample_outcomes(&[0.25; 4], 4000, &mut rng).unwrap();
        assert_eq!(sample.counts().iter().sum::<u64>(), 4000);
        // 5 sigma for Binomial(4000, 1/4).
        let sigma = (4000.0f64 * 0.25 * 0.75).sqrt();
        for &c in sample.counts() {
            assert!((c as f64 - 1000.0).abs() < 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn sample_outcomes_skewed_concentration() {
        let mut rng = stream_rng(3, 0);
        let probs = [0.925, 0.025, 0.025, 0.025];
        let m = 100_000u64;
        let sample = sample_outcomes(&probs, m, &mut rng).unwrap();
        let freq = sample.counts()[0] as f64 / m as f64;
        assert!((freq - 0.925).abs() < 0.005, "frequency {freq}");
    }

    #[test]
    fn sample_outcomes_is_reproducible() {
        let probs = [0.5, 0.3, 0.2];
        let a = sample_outcomes(&probs, 5000, &mut stream_rng(9, 4)).unwrap();
        let b = sample_outcomes(&probs, 5000, &mut stream_rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_outcomes_rejects_bad_inputs() {
        let mut rng = stream_rng(0, 0);
        assert!(sample_outcomes(&[], 5, &mut rng).is_err());
        assert!(sample_outcomes(&[0.5, 0.5], 0, &mut rng).is_err());
        assert!(sample_outcomes(&[0.9, -0.1, 0.2], 5, &mut rng).is_err());
        assert!(sample_outcomes(&[0.4, 0.4], 5, &mut rng).is_err());
        // Tiny negative values within tolerance are clamped.
        assert!(sample_outcomes(&[1.0, -1e-13], 5, &mut rng).is_ok());
    }
}
