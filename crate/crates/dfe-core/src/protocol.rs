//! The fidelity estimation protocols.
//!
//! Both the original per-string protocol and the grouped variant run
//! through one engine: importance-sample units (single strings or
//! commuting families) by their squared coefficient weight, measure each
//! sampled unit in its eigenbasis for a computed number of copies, and
//! average the per-round estimates. The original protocol is exactly the
//! grouped protocol on singleton groups: on singletons the copy formula
//! and the estimator reduce to the ungrouped ones term by term.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distributions::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DfeError, Result};
use crate::grouping::{singletons, sorted_insertion, Grouping, PauliGroup};
use crate::measurement::{common_eigenbasis, sample_outcomes, MeasurementBasis, OutcomeSample};
use crate::pauli::Commutativity;
use crate::rng::{mix, stream_rng, STREAM_BASIS_BASE, STREAM_ROUND_BASE, STREAM_SAMPLER};
use crate::states::{pauli_coefficients, NoisyState, COEFFICIENT_THRESHOLD};

/// Protocol variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DfeMode {
    /// Per-string sampling, each string measured in its own product basis.
    #[serde(rename = "original")]
    Original,
    /// Sampling over qubit-wise commuting families.
    #[serde(rename = "qwc")]
    GroupedQwc,
    /// Sampling over fully commuting families.
    #[serde(rename = "fc")]
    GroupedFc,
}

impl DfeMode {
    pub const ALL: [DfeMode; 3] = [DfeMode::Original, DfeMode::GroupedQwc, DfeMode::GroupedFc];

    pub fn is_grouped(&self) -> bool {
        !matches!(self, DfeMode::Original)
    }
}

impl fmt::Display for DfeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DfeMode::Original => write!(f, "original"),
            DfeMode::GroupedQwc => write!(f, "qwc"),
            DfeMode::GroupedFc => write!(f, "fc"),
        }
    }
}

impl FromStr for DfeMode {
    type Err = DfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(DfeMode::Original),
            "qwc" => Ok(DfeMode::GroupedQwc),
            "fc" => Ok(DfeMode::GroupedFc),
            other => Err(DfeError::InvalidParameter(format!(
                "unknown mode {other:?} (expected original|qwc|fc)"
            ))),
        }
    }
}

/// How measurement outcomes of a sampled group are simulated.
///
/// Both models consume the same `m` copies per round and produce the same
/// per-member expectations; they differ in whether members of a group see
/// correlated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementModel {
    /// Each member's +1/-1 outcomes are drawn independently from its own
    /// marginal distribution, as if every observable were estimated from
    /// its own shots. The default.
    #[serde(rename = "per-member")]
    PerMember,
    /// One outcome per shot, drawn from the group's common eigenbasis
    /// distribution; all members are evaluated on the same outcome, so
    /// co-measured members have correlated readings.
    #[serde(rename = "joint")]
    Joint,
}

impl fmt::Display for MeasurementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementModel::PerMember => write!(f, "per-member"),
            MeasurementModel::Joint => write!(f, "joint"),
        }
    }
}

impl FromStr for MeasurementModel {
    type Err = DfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-member" => Ok(MeasurementModel::PerMember),
            "joint" => Ok(MeasurementModel::Joint),
            other => Err(DfeError::InvalidParameter(format!(
                "unknown measurement model {other:?} (expected per-member|joint)"
            ))),
        }
    }
}

/// Number of sampling rounds needed for additive error `epsilon` and
/// failure probability `delta`: ceil(1 / (epsilon^2 delta)).
pub fn default_ell(epsilon: f64, delta: f64) -> u64 {
    (1.0 / (epsilon * epsilon * delta)).ceil() as u64
}

/// Protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfeConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub ell: u64,
    pub mode: DfeMode,
    pub seed: u64,
    pub measurement: MeasurementModel,
}

impl DfeConfig {
    /// Config with the default round count `ceil(1/(epsilon^2 delta))`
    /// and per-member readout.
    pub fn new(epsilon: f64, delta: f64, mode: DfeMode, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(DfeError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DfeError::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(DfeConfig {
            epsilon,
            delta,
            ell: default_ell(epsilon, delta),
            mode,
            seed,
            measurement: MeasurementModel::PerMember,
        })
    }

    pub fn with_ell(mut self, ell: u64) -> Result<Self> {
        if ell == 0 {
            return Err(DfeError::InvalidParameter(
                "round count must be at least 1".to_string(),
            ));
        }
        self.ell = ell;
        Ok(self)
    }

    pub fn with_measurement(mut self, measurement: MeasurementModel) -> Self {
        self.measurement = measurement;
        self
    }

    fn ln_two_over_delta(&self) -> f64 {
        (2.0 / self.delta).ln()
    }
}

/// Draw `ell` i.i.d. indices from the categorical distribution `weights`.
pub fn importance_sample<R: Rng>(weights: &[f64], ell: u64, rng: &mut R) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(DfeError::InvalidWeights("empty weight vector".to_string()));
    }
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < -1e-12 {
            return Err(DfeError::InvalidWeights(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        sum += w.max(0.0);
    }
    if (sum - 1.0).abs() > 1e-8 {
        return Err(DfeError::InvalidWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    let clamped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    let dist = rand::distributions::WeightedIndex::new(&clamped)
        .map_err(|e| DfeError::InvalidWeights(e.to_string()))?;
    Ok((0..ell).map(|_| dist.sample(rng)).collect())
}

/// Copies allotted to a sampled string in the original protocol:
/// `ceil( 2 ln(2/delta) / (b^2 d ell epsilon^2) )`.
pub fn copies_original(b_sq: f64, d: usize, config: &DfeConfig) -> Result<u64> {
    if b_sq.is_nan() || b_sq <= 0.0 {
        return Err(DfeError::InvalidParameter(format!(
            "squared coefficient must be positive, got {b_sq}"
        )));
    }
    let raw = 2.0 / (b_sq * d as f64 * config.ell as f64 * config.epsilon * config.epsilon)
        * config.ln_two_over_delta();
    Ok(raw.ceil().max(1.0) as u64)
}

/// Copies allotted to a sampled group:
/// `ceil( 2 ||b||_1^2 ln(2/delta) / (||b||^4 d ell epsilon^2) )`.
///
/// On a singleton group this equals [`copies_original`].
pub fn copies_grouped(norm_l1: f64, norm_sq: f64, d: usize, config: &DfeConfig) -> Result<u64> {
    if norm_sq.is_nan() || norm_sq <= 0.0 {
        return Err(DfeError::InvalidParameter(format!(
            "squared norm must be positive, got {norm_sq}"
        )));
    }
    if norm_l1 < norm_sq.sqrt() - 1e-12 {
        return Err(DfeError::InvalidParameter(format!(
            "l1 norm {norm_l1} below euclidean norm {}",
            norm_sq.sqrt()
        )));
    }
    let raw = 2.0 * norm_l1 * norm_l1
        / (norm_sq * norm_sq * d as f64 * config.ell as f64 * config.epsilon * config.epsilon)
        * config.ln_two_over_delta();
    Ok(raw.ceil().max(1.0) as u64)
}

/// Closed-form bound on the expected total number of copies:
/// `1 + 1/(epsilon^2 delta) + (2d/epsilon^2) ln(2/delta)`.
pub fn expected_copy_bound(config: &DfeConfig, d: usize) -> f64 {
    1.0 + 1.0 / (config.epsilon * config.epsilon * config.delta)
        + 2.0 * d as f64 / (config.epsilon * config.epsilon) * config.ln_two_over_delta()
}

/// Signed sums `C_r = sum_l c_l^(r) b_l` for every outcome `r`.
fn weighted_eigen_sums(group: &PauliGroup, basis: &MeasurementBasis) -> Result<Vec<f64>> {
    if basis.num_members() != group.len() {
        return Err(DfeError::EigenTableMismatch {
            expected: group.len(),
            got: basis.num_members(),
        });
    }
    let d = basis.dimension();
    let mut sums = vec![0.0; d];
    for (l, (_, b)) in group.members().iter().enumerate() {
        let row = basis.eigen_row(l);
        for (r, sum) in sums.iter_mut().enumerate() {
            *sum += row[r] as f64 * b;
        }
    }
    Ok(sums)
}

fn x_from_counts(counts: &[u64], sums: &[f64], shots: u64, norm_sq: f64, d: usize) -> f64 {
    let mut acc = 0.0;
    for (count, c) in counts.iter().zip(sums) {
        if *count > 0 {
            acc += *count as f64 * c;
        }
    }
    acc / (shots as f64 * norm_sq * (d as f64).sqrt())
}

/// Per-round estimate `X = sum_j C_{r_j} / (m ||b||^2 sqrt(d))` from
/// aggregated outcome counts.
///
/// Bounded by `||b||_1 / (||b||^2 sqrt(d))` in absolute value.
pub fn estimate_x_grouped(
    group: &PauliGroup,
    sample: &OutcomeSample,
    basis: &MeasurementBasis,
) -> Result<f64> {
    if sample.dimension() != basis.dimension() {
        return Err(DfeError::DimensionMismatch {
            expected: basis.dimension(),
            got: sample.dimension(),
        });
    }
    if sample.total() == 0 {
        return Err(DfeError::InvalidParameter(
            "outcome sample has no shots".to_string(),
        ));
    }
    let sums = weighted_eigen_sums(group, basis)?;
    let x = x_from_counts(
        sample.counts(),
        &sums,
        sample.total(),
        group.norm_sq(),
        basis.dimension(),
    );
    debug_assert!(
        x.abs() <= group.norm_l1() / (group.norm_sq() * (basis.dimension() as f64).sqrt()) + 1e-9
    );
    Ok(x)
}

/// One sampled round: which unit was drawn, how many copies it consumed,
/// and its estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub group_index: usize,
    pub copies: u64,
    pub x: f64,
}

/// Outcome of a full protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfeResult {
    pub mode: DfeMode,
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub ell: u64,
    pub seed: u64,
    pub measurement: MeasurementModel,
    /// Mean of the per-round estimates.
    pub estimate: f64,
    /// Fidelity of the depolarizing model, for residuals.
    pub true_fidelity: f64,
    /// Total copies of the state consumed across rounds.
    pub total_copies: u64,
    pub num_groups: usize,
    #[serde(skip)]
    pub rounds: Vec<Round>,
}

impl DfeResult {
    /// JSON summary (round records are omitted).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serialization cannot fail")
    }

    /// Mean of the squared per-round estimates.
    pub fn round_second_moment(&self) -> f64 {
        if self.rounds.is_empty() {
            return 0.0;
        }
        self.rounds.iter().map(|r| r.x * r.x).sum::<f64>() / self.rounds.len() as f64
    }
}

/// Run the protocol end to end: build the coefficient table of the target,
/// group it according to the mode, and estimate the fidelity of `sigma`.
pub fn run_dfe(config: &DfeConfig, sigma: &NoisyState) -> Result<DfeResult> {
    let table = pauli_coefficients(sigma.target(), COEFFICIENT_THRESHOLD)?;
    let grouping = match config.mode {
        DfeMode::Original => singletons(&table)?,
        DfeMode::GroupedQwc => sorted_insertion(&table, Commutativity::QubitWise)?,
        DfeMode::GroupedFc => sorted_insertion(&table, Commutativity::Full)?,
    };
    run_dfe_on_grouping(config, sigma, &grouping)
}

enum GroupCache {
    /// Per-member readout: coefficient and marginal expectation
    /// `sqrt(d) a_l` of each member.
    PerMember {
        copies: u64,
        members: Vec<(f64, f64)>,
        norm_sq: f64,
    },
    /// Shared-basis readout: outcome distribution and weighted
    /// eigenvalue sums over the common eigenbasis.
    Joint {
        copies: u64,
        probs: Vec<f64>,
        sums: Vec<f64>,
        norm_sq: f64,
    },
}

impl GroupCache {
    fn copies(&self) -> u64 {
        match self {
            GroupCache::PerMember { copies, .. } | GroupCache::Joint { copies, .. } => *copies,
        }
    }

    fn sample_x<R: Rng>(&self, d: usize, rng: &mut R) -> Result<f64> {
        match self {
            GroupCache::PerMember {
                copies,
                members,
                norm_sq,
            } => {
                let shots = *copies as f64;
                let mut acc = 0.0;
                for &(b, expectation) in members {
                    let p_plus = (0.5 * (1.0 + expectation)).clamp(0.0, 1.0);
                    let plus = rand_distr::Binomial::new(*copies, p_plus)
                        .expect("probability is clamped to [0, 1]")
                        .sample(rng);
                    let mean = (2.0 * plus as f64 - shots) / shots;
                    acc += b * mean;
                }
                Ok(acc / (norm_sq * (d as f64).sqrt()))
            }
            GroupCache::Joint {
                copies,
                probs,
                sums,
                norm_sq,
            } => {
                let sample = sample_outcomes(probs, *copies, rng)?;
                Ok(x_from_counts(sample.counts(), sums, *copies, *norm_sq, d))
            }
        }
    }
}

/// Run the sampling engine on an explicit grouping.
///
/// Each round `i` draws from its own seed substream, so results are
/// independent of evaluation order. Repeated draws of the same group are
/// measured independently with fresh copies; only the group's readout
/// distribution is reused, deterministic given the seed.
pub fn run_dfe_on_grouping(
    config: &DfeConfig,
    sigma: &NoisyState,
    grouping: &Grouping,
) -> Result<DfeResult> {
    if grouping.n() != sigma.n() {
        return Err(DfeError::DimensionMismatch {
            expected: sigma.dimension(),
            got: grouping.dimension(),
        });
    }
    let d = sigma.dimension();
    let weights = grouping.weights();
    let mut sampler = stream_rng(config.seed, STREAM_SAMPLER);
    let draws = importance_sample(&weights, config.ell, &mut sampler)?;

    let distinct: BTreeSet<usize> = draws.iter().copied().collect();
    let mut caches: Vec<Option<GroupCache>> = Vec::new();
    caches.resize_with(grouping.num_groups(), || None);
    for &k in &distinct {
        let group = &grouping.groups()[k];
        let copies = copies_grouped(group.norm_l1(), group.norm_sq(), d, config)?;
        let cache = match config.measurement {
            MeasurementModel::PerMember => {
                // Marginal expectations are analytic in the depolarizing
                // model: sqrt(d) a_l, verified against the eigenbasis
                // route by the law-of-total-expectation tests.
                let table = pauli_coefficients_of_group(group, sigma, d);
                GroupCache::PerMember {
                    copies,
                    members: table,
                    norm_sq: group.norm_sq(),
                }
            }
            MeasurementModel::Joint => {
                let basis = common_eigenbasis(
                    group,
                    grouping.mode(),
                    mix(config.seed, STREAM_BASIS_BASE + k as u64),
                )?;
                let probs = sigma.outcome_probabilities(&basis)?;
                let sums = weighted_eigen_sums(group, &basis)?;
                GroupCache::Joint {
                    copies,
                    probs,
                    sums,
                    norm_sq: group.norm_sq(),
                }
            }
        };
        caches[k] = Some(cache);
    }

    let mut rounds = Vec::with_capacity(draws.len());
    let mut total_copies: u64 = 0;
    let mut x_sum = 0.0;
    for (i, &k) in draws.iter().enumerate() {
        let cache = caches[k].as_ref().expect("cache built for every draw");
        let mut rng = stream_rng(config.seed, STREAM_ROUND_BASE + i as u64);
        let x = cache.sample_x(d, &mut rng)?;
        rounds.push(Round {
            group_index: k,
            copies: cache.copies(),
            x,
        });
        total_copies += cache.copies();
        x_sum += x;
    }

    Ok(DfeResult {
        mode: config.mode,
        n: sigma.n(),
        p: sigma.p(),
        epsilon: config.epsilon,
        delta: config.delta,
        ell: config.ell,
        seed: config.seed,
        measurement: config.measurement,
        estimate: x_sum / draws.len() as f64,
        true_fidelity: sigma.true_fidelity(),
        total_copies,
        num_groups: grouping.num_groups(),
        rounds,
    })
}

fn pauli_coefficients_of_group(
    group: &PauliGroup,
    sigma: &NoisyState,
    d: usize,
) -> Vec<(f64, f64)> {
    let sqrt_d = (d as f64).sqrt();
    group
        .members()
        .iter()
        .map(|(p, b)| {
            let a = crate::states::noisy_coefficient(*b, p.is_identity(), sigma.p(), d);
            (*b, sqrt_d * a)
        })
        .collect()
}
