//! Runtime invariant suite behind `dfe verify`.
//!
//! Each check exercises one contract of the library at small sizes and
//! reports pass/fail with a reason. The suite is deterministic given the
//! seed and finishes in seconds.

use num_complex::Complex64;
use rand::Rng;

use crate::error::Result;
use crate::grouping::{singletons, sorted_insertion};
use crate::measurement::common_eigenbasis;
use crate::pauli::{expectation, Commutativity, PauliString};
use crate::protocol::{
    copies_grouped, copies_original, run_dfe, run_dfe_on_grouping, DfeConfig, DfeMode,
};
use crate::rng::stream_rng;
use crate::states::{
    make_state, noisy_coefficient, pauli_coefficients, NoisyState, StateKind, StateVector,
    COEFFICIENT_THRESHOLD,
};

/// Outcome of one named invariant check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = (&'static str, fn(u64) -> std::result::Result<(), String>);

fn err<T>(msg: String) -> std::result::Result<T, String> {
    Err(msg)
}

fn random_pauli<R: Rng>(n: usize, rng: &mut R) -> PauliString {
    let mask = (1u32 << n) - 1;
    PauliString::from_bits(
        n,
        (rng.gen::<u32>() & mask) as u16,
        (rng.gen::<u32>() & mask) as u16,
    )
    .expect("masks fit")
}

fn commutation_properties(seed: u64) -> std::result::Result<(), String> {
    let mut rng = stream_rng(seed, 1);
    for _ in 0..500 {
        let n = rng.gen_range(1..=6);
        let a = random_pauli(n, &mut rng);
        let b = random_pauli(n, &mut rng);
        for mode in [Commutativity::QubitWise, Commutativity::Full] {
            let ab = a.commutes(&b, mode).map_err(|e| e.to_string())?;
            let ba = b.commutes(&a, mode).map_err(|e| e.to_string())?;
            if ab != ba {
                return err(format!("asymmetry for {a} vs {b} under {mode}"));
            }
        }
        if a.commutes(&b, Commutativity::QubitWise).unwrap()
            && !a.commutes(&b, Commutativity::Full).unwrap()
        {
            return err(format!("{a}, {b}: qubit-wise but not fully commuting"));
        }
    }
    Ok(())
}

fn pauli_involution(seed: u64) -> std::result::Result<(), String> {
    let mut rng = stream_rng(seed, 2);
    for _ in 0..50 {
        let n = rng.gen_range(1..=5);
        let p = random_pauli(n, &mut rng);
        let psi = StateVector::haar_random(n, rng.gen()).map_err(|e| e.to_string())?;
        let twice = p
            .apply(&p.apply(&psi).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let diff: f64 = psi
            .amplitudes()
            .iter()
            .zip(twice.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if diff > 1e-12 {
            return err(format!("{p} applied twice drifts by {diff}"));
        }
        let id = PauliString::identity(n).unwrap();
        let one = expectation(&psi, &id).map_err(|e| e.to_string())?;
        if (one - 1.0).abs() > 1e-12 {
            return err(format!("identity expectation {one}"));
        }
    }
    Ok(())
}

fn coefficient_normalization(seed: u64) -> std::result::Result<(), String> {
    for (kind, n) in [
        (StateKind::Haar, 3),
        (StateKind::Haar, 4),
        (StateKind::W, 4),
        (StateKind::Ghz, 4),
    ] {
        let psi = make_state(kind, n, seed).map_err(|e| e.to_string())?;
        let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
        let total = table.sum_sq();
        if (total - 1.0).abs() > 1e-8 {
            return err(format!("{kind} n={n}: coefficient squares sum to {total}"));
        }
        let d = 1usize << n;
        let id = table
            .identity_coefficient()
            .ok_or_else(|| "missing identity entry".to_string())?;
        if (id - 1.0 / (d as f64).sqrt()).abs() > 1e-12 {
            return err(format!("identity coefficient {id}"));
        }
    }
    Ok(())
}

fn fidelity_cross_check(seed: u64) -> std::result::Result<(), String> {
    for p in [0.0, 0.1, 0.5] {
        let n = 3;
        let psi = make_state(StateKind::Haar, n, seed + 13).map_err(|e| e.to_string())?;
        let sigma = NoisyState::new(psi.clone(), p).map_err(|e| e.to_string())?;
        let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
        let d = 1usize << n;
        let dot: f64 = table
            .entries()
            .iter()
            .map(|(q, b)| noisy_coefficient(*b, q.is_identity(), p, d) * b)
            .sum();
        if (dot - sigma.true_fidelity()).abs() > 1e-8 {
            return err(format!(
                "p={p}: coefficient fidelity {dot} vs {}",
                sigma.true_fidelity()
            ));
        }
    }
    Ok(())
}

fn grouping_invariants(seed: u64) -> std::result::Result<(), String> {
    let psi = make_state(StateKind::Haar, 3, seed + 29).map_err(|e| e.to_string())?;
    let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
    for mode in [Commutativity::QubitWise, Commutativity::Full] {
        let grouping = sorted_insertion(&table, mode).map_err(|e| e.to_string())?;
        grouping.check_invariants().map_err(|e| e.to_string())?;
        let members: usize = grouping.groups().iter().map(|g| g.len()).sum();
        if members != table.len() {
            return err(format!(
                "{mode}: {members} members from {} entries",
                table.len()
            ));
        }
    }
    let qwc = sorted_insertion(&table, Commutativity::QubitWise).map_err(|e| e.to_string())?;
    let fc = sorted_insertion(&table, Commutativity::Full).map_err(|e| e.to_string())?;
    if fc.num_groups() > qwc.num_groups() {
        return err(format!(
            "fc needs {} groups, qwc {}",
            fc.num_groups(),
            qwc.num_groups()
        ));
    }
    if qwc.num_groups() != 3usize.pow(3) + 1 {
        return err(format!(
            "full-table qwc count {} != 3^3 + 1",
            qwc.num_groups()
        ));
    }
    Ok(())
}

fn eigenbasis_invariants(seed: u64) -> std::result::Result<(), String> {
    let psi = make_state(StateKind::Haar, 3, seed + 31).map_err(|e| e.to_string())?;
    let sigma = NoisyState::new(psi.clone(), 0.1).map_err(|e| e.to_string())?;
    let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
    let d = 8usize;
    for mode in [Commutativity::QubitWise, Commutativity::Full] {
        let grouping = sorted_insertion(&table, mode).map_err(|e| e.to_string())?;
        for group in grouping.groups().iter().take(4) {
            let basis = common_eigenbasis(group, mode, seed + group.index() as u64)
                .map_err(|e| e.to_string())?;
            // Orthonormal columns.
            for r in 0..d {
                let vr = basis.column(r);
                for s in r..d {
                    let vs = basis.column(s);
                    let dot: Complex64 = vr.iter().zip(&vs).map(|(a, b)| a.conj() * b).sum();
                    let want = if r == s { 1.0 } else { 0.0 };
                    if (dot - Complex64::new(want, 0.0)).norm() > 1e-9 {
                        return err(format!("columns {r},{s} not orthonormal: {dot}"));
                    }
                }
            }
            // Eigenvalue sums and the law of total expectation.
            let probs = sigma
                .outcome_probabilities(&basis)
                .map_err(|e| e.to_string())?;
            if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return err("probabilities do not sum to 1".to_string());
            }
            for (l, (q, b)) in group.members().iter().enumerate() {
                let sum: i64 = basis.eigen_row(l).iter().map(|&c| c as i64).sum();
                let want = if q.is_identity() { d as i64 } else { 0 };
                if sum != want {
                    return err(format!("{q}: eigenvalue sum {sum}"));
                }
                let via_basis: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(r, pr)| pr * basis.eigenvalue(l, r) as f64)
                    .sum();
                let a = noisy_coefficient(*b, q.is_identity(), sigma.p(), d);
                if (via_basis - (d as f64).sqrt() * a).abs() > 1e-8 {
                    return err(format!("{q}: total expectation {via_basis}"));
                }
            }
        }
    }
    Ok(())
}

fn estimator_identities(seed: u64) -> std::result::Result<(), String> {
    // Perfect Bell state through the fully commuting path: exactly 1.
    let bell = StateVector::ghz(2).map_err(|e| e.to_string())?;
    let sigma = NoisyState::new(bell, 0.0).map_err(|e| e.to_string())?;
    let cfg = DfeConfig::new(0.05, 0.05, DfeMode::GroupedFc, seed)
        .and_then(|c| c.with_ell(100))
        .map_err(|e| e.to_string())?;
    let result = run_dfe(&cfg, &sigma).map_err(|e| e.to_string())?;
    if result.estimate != 1.0 {
        return err(format!("bell estimate {}", result.estimate));
    }

    // The original mode is the grouped engine on singletons.
    let psi = make_state(StateKind::Haar, 2, seed + 5).map_err(|e| e.to_string())?;
    let sigma = NoisyState::new(psi.clone(), 0.1).map_err(|e| e.to_string())?;
    let cfg = DfeConfig::new(0.05, 0.05, DfeMode::Original, seed + 6)
        .and_then(|c| c.with_ell(200))
        .map_err(|e| e.to_string())?;
    let via_mode = run_dfe(&cfg, &sigma).map_err(|e| e.to_string())?;
    let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
    let trivial = singletons(&table).map_err(|e| e.to_string())?;
    let via_grouping = run_dfe_on_grouping(&cfg, &sigma, &trivial).map_err(|e| e.to_string())?;
    if via_mode.rounds != via_grouping.rounds {
        return err("singleton grouping deviates from original mode".to_string());
    }

    // Copy formula identity on singletons.
    for b in [0.05, 0.125, 0.4] {
        let grouped = copies_grouped(b, b * b, 16, &cfg).map_err(|e| e.to_string())?;
        let original = copies_original(b * b, 16, &cfg).map_err(|e| e.to_string())?;
        if grouped != original {
            return err(format!("copy formulas disagree at b={b}"));
        }
    }
    Ok(())
}

fn coverage_smoke(seed: u64) -> std::result::Result<(), String> {
    let ghz = StateVector::ghz(2).map_err(|e| e.to_string())?;
    let sigma = NoisyState::new(ghz, 0.1).map_err(|e| e.to_string())?;
    for mode in DfeMode::ALL {
        let cfg = DfeConfig::new(0.05, 0.05, mode, seed + 77).map_err(|e| e.to_string())?;
        let result = run_dfe(&cfg, &sigma).map_err(|e| e.to_string())?;
        let error = (result.estimate - result.true_fidelity).abs();
        if error > 2.0 * cfg.epsilon {
            return err(format!("{mode}: error {error} above 2 epsilon"));
        }
    }
    Ok(())
}

const CHECKS: &[Check] = &[
    ("pauli-commutation-properties", commutation_properties),
    ("pauli-involution-and-identity", pauli_involution),
    ("coefficient-normalization", coefficient_normalization),
    ("fidelity-cross-check", fidelity_cross_check),
    ("grouping-invariants", grouping_invariants),
    ("eigenbasis-invariants", eigenbasis_invariants),
    ("estimator-identities", estimator_identities),
    ("coverage-smoke", coverage_smoke),
];

/// Run every invariant check. Does not early-exit on failure.
pub fn run_invariant_suite(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(CHECKS
        .iter()
        .map(|(name, check)| match check(seed) {
            Ok(()) => CheckResult {
                name,
                passed: true,
                detail: String::new(),
            },
            Err(detail) => CheckResult {
                name,
                passed: false,
                detail,
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let results = run_invariant_suite(2024).unwrap();
        assert_eq!(results.len(), CHECKS.len());
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
