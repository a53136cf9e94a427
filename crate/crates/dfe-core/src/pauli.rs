//! Bit-packed n-qubit Pauli strings.
//!
//! A Pauli string is stored as two bit masks over qubits: `x_bits` and
//! `z_bits`. Qubit `j` carries the letter I/X/Z/Y for `(x_j, z_j)` =
//! (0,0)/(1,0)/(0,1)/(1,1). The symplectic form makes the full-commutativity
//! check a popcount parity, and the phase of the state-vector action is
//! `i` per Y factor.
//!
//! Text format: one character per qubit over the alphabet {I,X,Y,Z}, with
//! the leftmost character acting on qubit 0. Qubit `j` maps to bit `j` of a
//! computational-basis index.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{DfeError, Result};
use crate::states::StateVector;

/// Largest supported qubit count (dense state vectors up to 2^12).
pub const MAX_QUBITS: usize = 12;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => PauliLetter::I,
            (true, false) => PauliLetter::X,
            (false, true) => PauliLetter::Z,
            (true, true) => PauliLetter::Y,
        }
    }

    fn to_char(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }
}

/// Which commutation relation qualifies two strings for the same group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Commutativity {
    /// Commuting letter-by-letter on every qubit (equal or identity).
    #[serde(rename = "qwc")]
    QubitWise,
    /// Commuting as whole operators.
    #[serde(rename = "fc")]
    Full,
}

impl fmt::Display for Commutativity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Commutativity::QubitWise => write!(f, "qwc"),
            Commutativity::Full => write!(f, "fc"),
        }
    }
}

impl FromStr for Commutativity {
    type Err = DfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qwc" => Ok(Commutativity::QubitWise),
            "fc" => Ok(Commutativity::Full),
            other => Err(DfeError::InvalidParameter(format!(
                "unknown commutativity {other:?} (expected qwc|fc)"
            ))),
        }
    }
}

/// An n-qubit Pauli string in symplectic (x, z) bit-mask form.
///
/// Equality and ordering are canonical on `(n, x_bits, z_bits)`; the derived
/// `Ord` gives the lexicographic order used for deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n: u8,
    x_bits: u16,
    z_bits: u16,
}

impl PauliString {
    /// Build from raw masks. Masks must fit in `n` bits.
    pub fn from_bits(n: usize, x_bits: u16, z_bits: u16) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let mask = ((1u32 << n) - 1) as u16;
        if x_bits & !mask != 0 || z_bits & !mask != 0 {
            return Err(DfeError::InvalidParameter(format!(
                "pauli masks exceed {n} qubits"
            )));
        }
        Ok(PauliString {
            n: n as u8,
            x_bits,
            z_bits,
        })
    }

    /// The identity string on `n` qubits.
    pub fn identity(n: usize) -> Result<Self> {
        Self::from_bits(n, 0, 0)
    }

    pub fn from_letters(letters: &[PauliLetter]) -> Result<Self> {
        if letters.is_empty() || letters.len() > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(letters.len()));
        }
        let mut x = 0u16;
        let mut z = 0u16;
        for (j, letter) in letters.iter().enumerate() {
            let (xb, zb) = match letter {
                PauliLetter::I => (0, 0),
                PauliLetter::X => (1, 0),
                PauliLetter::Z => (0, 1),
                PauliLetter::Y => (1, 1),
            };
            x |= xb << j;
            z |= zb << j;
        }
        Self::from_bits(letters.len(), x, z)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// Hilbert-space dimension 2^n.
    pub fn dimension(&self) -> usize {
        1 << self.n
    }

    pub fn x_bits(&self) -> u16 {
        self.x_bits
    }

    pub fn z_bits(&self) -> u16 {
        self.z_bits
    }

    pub fn is_identity(&self) -> bool {
        self.x_bits == 0 && self.z_bits == 0
    }

    /// Mask of qubits where the letter is not the identity.
    pub fn support_mask(&self) -> u16 {
        self.x_bits | self.z_bits
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> u32 {
        self.support_mask().count_ones()
    }

    pub fn letter(&self, qubit: usize) -> PauliLetter {
        debug_assert!(qubit < self.n());
        PauliLetter::from_bits(self.x_bits >> qubit & 1 == 1, self.z_bits >> qubit & 1 == 1)
    }

    pub fn letters(&self) -> impl Iterator<Item = PauliLetter> + '_ {
        (0..self.n()).map(|j| self.letter(j))
    }

    /// All 4^n strings on `n` qubits in canonical `(x_bits, z_bits)` order.
    pub fn enumerate_all(n: usize) -> Result<impl Iterator<Item = PauliString>> {
        if n == 0 || n > MAX_QUBITS {
            return Err(DfeError::QubitCountOutOfRange(n));
        }
        let d = 1u32 << n;
        Ok((0..d).flat_map(move |x| {
            (0..d).map(move |z| PauliString {
                n: n as u8,
                x_bits: x as u16,
                z_bits: z as u16,
            })
        }))
    }

    /// Commutation predicate under the chosen framework.
    ///
    /// Qubit-wise commutation implies full commutation, never the reverse.
    pub fn commutes(&self, other: &PauliString, mode: Commutativity) -> Result<bool> {
        if self.n != other.n {
            return Err(DfeError::DimensionMismatch {
                expected: self.n(),
                got: other.n(),
            });
        }
        Ok(match mode {
            Commutativity::Full => {
                let anti = (self.x_bits & other.z_bits).count_ones()
                    + (self.z_bits & other.x_bits).count_ones();
                anti.is_multiple_of(2)
            }
            Commutativity::QubitWise => {
                // Conflict on qubit j: both letters non-identity and different.
                let both = self.support_mask() & other.support_mask();
                let differ = (self.x_bits ^ other.x_bits) | (self.z_bits ^ other.z_bits);
                both & differ == 0
            }
        })
    }

    /// Phase of `P|s>` for a computational basis state `s`:
    /// `P|s> = i^{#Y} (-1)^{popcount(s & z)} |s XOR x>`.
    pub(crate) fn phase_on(&self, s: usize) -> Complex64 {
        let y_count = (self.x_bits & self.z_bits).count_ones();
        let sign_z = (s as u16 & self.z_bits).count_ones() & 1;
        let mut quarter = y_count % 4;
        if sign_z == 1 {
            quarter = (quarter + 2) % 4;
        }
        match quarter {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    pub(crate) fn apply_to_amplitudes(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let d = self.dimension();
        debug_assert_eq!(amps.len(), d);
        let x = self.x_bits as usize;
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for (s, &a) in amps.iter().enumerate() {
            out[s ^ x] = self.phase_on(s) * a;
        }
        out
    }

    /// Apply the string to a state vector, tracking the Y phases exactly.
    ///
    /// Applying the same string twice returns the input (Paulis are
    /// involutions) up to floating round-off.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dimension() != self.dimension() {
            return Err(DfeError::DimensionMismatch {
                expected: self.dimension(),
                got: psi.dimension(),
            });
        }
        Ok(StateVector::from_parts(
            self.n(),
            self.apply_to_amplitudes(psi.amplitudes()),
        ))
    }

    pub(crate) fn expectation_of_amplitudes(&self, amps: &[Complex64]) -> f64 {
        let x = self.x_bits as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, &a) in amps.iter().enumerate() {
            acc += amps[s ^ x].conj() * self.phase_on(s) * a;
        }
        // Hermitian observable: the imaginary parts cancel pairwise.
        assert!(
            acc.im.abs() <= 1e-10,
            "expectation of a Pauli string must be real, got imag {}",
            acc.im
        );
        acc.re.clamp(-1.0, 1.0)
    }
}

/// `<psi|P|psi>` for a normalized state. Always in [-1, 1].
pub fn expectation(psi: &StateVector, p: &PauliString) -> Result<f64> {
    if psi.dimension() != p.dimension() {
        return Err(DfeError::DimensionMismatch {
            expected: p.dimension(),
            got: psi.dimension(),
        });
    }
    let norm_sq = psi.norm_sq();
    if (norm_sq - 1.0).abs() > 1e-8 {
        return Err(DfeError::NotNormalized { norm_sq });
    }
    Ok(p.expectation_of_amplitudes(psi.amplitudes()))
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for letter in self.letters() {
            write!(f, "{}", letter.to_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = DfeError;

    fn from_str(s: &str) -> Result<Self> {
        let parse_err = |reason: &str| DfeError::ParsePauli {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        if s.is_empty() {
            return Err(parse_err("empty string"));
        }
        if s.len() > MAX_QUBITS {
            return Err(parse_err("more than 12 qubits"));
        }
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars() {
            letters.push(match c {
                'I' => PauliLetter::I,
                'X' => PauliLetter::X,
                'Y' => PauliLetter::Y,
                'Z' => PauliLetter::Z,
                _ => return Err(parse_err(&format!("invalid character {c:?}"))),
            });
        }
        PauliString::from_letters(&letters)
    }
}

#[cfg(test)]
pub(crate) mod dense {
    //! Dense-matrix oracle used only in tests. Built from the 2x2 letter
    //! matrices by Kronecker products, independently of the symplectic code.

    use super::*;

    pub type Matrix = Vec<Vec<Complex64>>;

    fn letter_matrix(letter: PauliLetter) -> Matrix {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match letter {
            PauliLetter::I => vec![vec![one, z], vec![z, one]],
            PauliLetter::X => vec![vec![z, one], vec![one, z]],
            PauliLetter::Y => vec![vec![z, -i], vec![i, z]],
            PauliLetter::Z => vec![vec![one, z], vec![z, -one]],
        }
    }

    fn kron(a: &Matrix, b: &Matrix) -> Matrix {
        let (ra, ca) = (a.len(), a[0].len());
        let (rb, cb) = (b.len(), b[0].len());
        let mut out = vec![vec![Complex64::new(0.0, 0.0); ca * cb]; ra * rb];
        for ia in 0..ra {
            for ja in 0..ca {
                for ib in 0..rb {
                    for jb in 0..cb {
                        out[ia * rb + ib][ja * cb + jb] = a[ia][ja] * b[ib][jb];
                    }
                }
            }
        }
        out
    }

    /// Dense matrix of a Pauli string with qubit j on bit j of the index.
    pub fn pauli_matrix(p: &PauliString) -> Matrix {
        let mut m = vec![vec![Complex64::new(1.0, 0.0)]];
        for letter in p.letters() {
            // Higher qubits occupy higher-significance index bits.
            m = kron(&letter_matrix(letter), &m);
        }
        m
    }

    pub fn matvec(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
        m.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.len();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for k in 0..n {
                let aik = a[i][k];
                for j in 0..n {
                    out[i][j] += aik * b[k][j];
                }
            }
        }
        out
    }

    pub fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
        let mut acc = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                acc += (x - y).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_print_are_inverse() {
        for s in ["I", "XIZY", "ZZZZZZZZZZZZ", "YXZI"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert!("".parse::<PauliString>().is_err());
        assert!("XQ".parse::<PauliString>().is_err());
        assert!("X".repeat(13).parse::<PauliString>().is_err());
    }

    #[test]
    fn leftmost_character_is_qubit_zero() {
        let q = p("XI");
        assert_eq!(q.letter(0), PauliLetter::X);
        assert_eq!(q.letter(1), PauliLetter::I);
        assert_eq!(q.x_bits(), 0b01);
    }

    #[test]
    fn commutes_examples() {
        assert!(p("XX").commutes(&p("ZZ"), Commutativity::Full).unwrap());
        assert!(!p("XX")
            .commutes(&p("ZZ"), Commutativity::QubitWise)
            .unwrap());
        assert!(p("XI")
            .commutes(&p("IZ"), Commutativity::QubitWise)
            .unwrap());
        assert!(!p("XI").commutes(&p("ZI"), Commutativity::Full).unwrap());
        assert!(matches!(
            p("XI").commutes(&p("X"), Commutativity::Full),
            Err(DfeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn apply_examples() {
        let x = p("X");
        let zero = StateVector::basis_state(1, 0).unwrap();
        let one = x.apply(&zero).unwrap();
        assert_eq!(one.amplitudes()[1], Complex64::new(1.0, 0.0));
        assert_eq!(one.amplitudes()[0], Complex64::new(0.0, 0.0));

        let y = p("Y");
        let iy = y.apply(&zero).unwrap();
        assert_eq!(iy.amplitudes()[1], Complex64::new(0.0, 1.0));

        let bell = StateVector::ghz(2).unwrap();
        let back = p("ZZ").apply(&bell).unwrap();
        for (a, b) in bell.amplitudes().iter().zip(back.amplitudes()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn expectation_examples() {
        let zero = StateVector::basis_state(1, 0).unwrap();
        assert_eq!(expectation(&zero, &p("Z")).unwrap(), 1.0);

        let bell = StateVector::ghz(2).unwrap();
        assert!((expectation(&bell, &p("XX")).unwrap() - 1.0).abs() < 1e-12);

        // (|01> + |10>)/sqrt(2): derived via the dense 4x4 oracle below.
        let psi_minus = StateVector::new(
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let zz = p("ZZ");
        let via_dense = {
            let m = dense::pauli_matrix(&zz);
            let pv = dense::matvec(&m, psi_minus.amplitudes());
            psi_minus
                .amplitudes()
                .iter()
                .zip(&pv)
                .map(|(a, b)| a.conj() * b)
                .sum::<Complex64>()
        };
        assert!((via_dense.re - -1.0).abs() < 1e-12);
        assert!((expectation(&psi_minus, &zz).unwrap() - -1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_rejects_unnormalized() {
        let stretched =
            StateVector::from_parts(1, vec![Complex64::new(1.1, 0.0), Complex64::new(0.0, 0.0)]);
        assert!(matches!(
            expectation(&stretched, &p("Z")),
            Err(DfeError::NotNormalized { .. })
        ));
    }

    #[test]
    fn apply_matches_dense_oracle() {
        let mut rng = crate::rng::stream_rng(11, 0);
        for n in 1..=4usize {
            let psi = StateVector::haar_random(n, rng.gen()).unwrap();
            for q in PauliString::enumerate_all(n).unwrap() {
                let fast = q.apply(&psi).unwrap();
                let slow = dense::matvec(&dense::pauli_matrix(&q), psi.amplitudes());
                for (a, b) in fast.amplitudes().iter().zip(&slow) {
                    assert!((a - b).norm() < 1e-12, "mismatch for {q}");
                }
            }
        }
    }

    #[test]
    fn full_commutativity_matches_dense_commutator() {
        let n = 3;
        let all: Vec<PauliString> = PauliString::enumerate_all(n).unwrap().collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i..] {
                let ma = dense::pauli_matrix(a);
                let mb = dense::pauli_matrix(b);
                let ab = dense::matmul(&ma, &mb);
                let ba = dense::matmul(&mb, &ma);
                let commutes_dense = dense::frobenius_diff(&ab, &ba) < 1e-10;
                assert_eq!(
                    a.commutes(b, Commutativity::Full).unwrap(),
                    commutes_dense,
                    "{a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn pauli_matrices_are_hermitian_unitary_traceless() {
        for q in PauliString::enumerate_all(2).unwrap() {
            let m = dense::pauli_matrix(&q);
            let d = m.len();
            for i in 0..d {
                for j in 0..d {
                    assert!((m[i][j] - m[j][i].conj()).norm() < 1e-14);
                }
            }
            let sq = dense::matmul(&m, &m);
            for i in 0..d {
                for j in 0..d {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((sq[i][j] - Complex64::new(expected, 0.0)).norm() < 1e-12);
                }
            }
            let trace: Complex64 = (0..d).map(|i| m[i][i]).sum();
            if q.is_identity() {
                assert!((trace.re - d as f64).abs() < 1e-12);
            } else {
                assert!(trace.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn expectation_of_identity_is_one() {
        for n in 1..=4 {
            let psi = StateVector::haar_random(n, 5 + n as u64).unwrap();
            let id = PauliString::identity(n).unwrap();
            assert!((expectation(&psi, &id).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    fn arb_pauli(n: usize) -> impl Strategy<Value = PauliString> {
        let mask = (1u32 << n) - 1;
        (0..=mask, 0..=mask)
            .prop_map(move |(x, z)| PauliString::from_bits(n, x as u16, z as u16).unwrap())
    }

    proptest! {
        #[test]
        fn commutes_is_symmetric_and_qwc_implies_fc(
            (a, b) in (1usize..=6).prop_flat_map(|n| (arb_pauli(n), arb_pauli(n)))
        ) {
            for mode in [Commutativity::QubitWise, Commutativity::Full] {
                prop_assert_eq!(
                    a.commutes(&b, mode).unwrap(),
                    b.commutes(&a, mode).unwrap()
                );
            }
            if a.commutes(&b, Commutativity::QubitWise).unwrap() {
                prop_assert!(a.commutes(&b, Commutativity::Full).unwrap());
            }
        }

        #[test]
        fn apply_twice_is_identity(
            (q, seed) in (1usize..=5).prop_flat_map(|n| (arb_pauli(n), any::<u64>()))
        ) {
            let psi = StateVector::haar_random(q.n(), seed).unwrap();
            let twice = q.apply(&q.apply(&psi).unwrap()).unwrap();
            for (a, b) in psi.amplitudes().iter().zip(twice.amplitudes()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
        }

        #[test]
        fn display_parse_roundtrip(q in (1usize..=12).prop_flat_map(arb_pauli)) {
            let text = q.to_string();
            prop_assert_eq!(text.parse::<PauliString>().unwrap(), q);
        }
    }
}
