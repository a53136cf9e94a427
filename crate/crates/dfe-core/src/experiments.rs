//! Batch experiments: repeated protocol runs over sampled states,
//! residual statistics, variance comparison between protocols, and
//! reproducible CSV/JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DfeError, Result};
use crate::grouping::{singletons, sorted_insertion, Grouping};
use crate::pauli::Commutativity;
use crate::protocol::{default_ell, run_dfe_on_grouping, DfeConfig, DfeMode, MeasurementModel};
use crate::rng::{mix, stream_rng};
use crate::states::{make_state, pauli_coefficients, NoisyState, StateKind, COEFFICIENT_THRESHOLD};

const SAMPLE_SALT: u64 = 0x5341_4D50_4C45_0000;
const STATE_SALT: u64 = 0x5354_4154_4500_0000;
const MODE_SALT: u64 = 0x4D4F_4445_0000_0000;
const BOOTSTRAP_SALT: u64 = 0x424F_4F54_0000_0000;
const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Parameters of a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub state: StateKind,
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Rounds per run; defaults to `ceil(1/(epsilon^2 delta))`.
    pub ell: Option<u64>,
    pub modes: Vec<DfeMode>,
    pub num_samples: usize,
    pub master_seed: u64,
    #[serde(default = "default_measurement")]
    pub measurement: MeasurementModel,
}

fn default_measurement() -> MeasurementModel {
    MeasurementModel::PerMember
}

impl BatchConfig {
    fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(DfeError::InvalidParameter(
                "num_samples must be at least 1".to_string(),
            ));
        }
        if self.modes.is_empty() {
            return Err(DfeError::InvalidParameter(
                "at least one mode is required".to_string(),
            ));
        }
        Ok(())
    }

    fn effective_ell(&self) -> u64 {
        self.ell
            .unwrap_or_else(|| default_ell(self.epsilon, self.delta))
    }
}

fn mode_id(mode: DfeMode) -> u64 {
    match mode {
        DfeMode::Original => 0,
        DfeMode::GroupedQwc => 1,
        DfeMode::GroupedFc => 2,
    }
}

/// One run's row in the results CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: u64,
    pub seed: u64,
    pub estimate: f64,
    pub total_copies: u64,
    pub num_groups: usize,
}

/// Per-mode statistics over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub mode: DfeMode,
    pub state: StateKind,
    pub n: usize,
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub ell: u64,
    pub master_seed: u64,
    #[serde(default = "default_measurement")]
    pub measurement: MeasurementModel,
    pub true_fidelity: f64,
    pub num_samples: usize,
    /// Unbiased sample variance of the residuals (estimate - fidelity).
    pub variance_of_estimate: f64,
    pub mean_copies: f64,
    pub copies_min: u64,
    pub copies_median: f64,
    pub copies_max: u64,
    pub group_count_min: usize,
    pub group_count_max: usize,
    /// `min_k ||b_k||_1^2 / ||b_k||^4` over all groups of all samples.
    /// When this is large, every sampled unit needs many copies and the
    /// grouped estimator's variance is provably below the original one.
    pub min_group_ratio: f64,
    /// Per-run mean of the squared round estimates X^2.
    pub x_second_moments: Vec<f64>,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

impl ExperimentStats {
    pub fn residuals(&self) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| r.estimate - self.true_fidelity)
            .collect()
    }

    /// Pooled mean of X^2 over every round of every run.
    pub fn round_second_moment(&self) -> f64 {
        if self.x_second_moments.is_empty() {
            return 0.0;
        }
        self.x_second_moments.iter().sum::<f64>() / self.x_second_moments.len() as f64
    }

    fn same_experiment(&self, other: &ExperimentStats) -> bool {
        self.state == other.state
            && self.n == other.n
            && self.p == other.p
            && self.epsilon == other.epsilon
            && self.delta == other.delta
            && self.ell == other.ell
            && self.num_samples == other.num_samples
            && self.measurement == other.measurement
    }
}

fn unbiased_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn median_of_sorted(sorted: &[u64]) -> f64 {
    let len = sorted.len();
    if len % 2 == 1 {
        sorted[len / 2] as f64
    } else {
        (sorted[len / 2 - 1] as f64 + sorted[len / 2] as f64) / 2.0
    }
}

fn min_group_ratio(grouping: &Grouping) -> f64 {
    grouping
        .groups()
        .iter()
        .map(|g| {
            let l1 = g.norm_l1();
            let sq = g.norm_sq();
            l1 * l1 / (sq * sq)
        })
        .fold(f64::INFINITY, f64::min)
}

fn build_grouping(table: &crate::states::CoefficientTable, mode: DfeMode) -> Result<Grouping> {
    match mode {
        DfeMode::Original => singletons(table),
        DfeMode::GroupedQwc => sorted_insertion(table, Commutativity::QubitWise),
        DfeMode::GroupedFc => sorted_insertion(table, Commutativity::Full),
    }
}

struct ModeOutput {
    record: RunRecord,
    x_second_moment: f64,
    group_ratio: f64,
}

/// Run every requested mode on `num_samples` independently drawn states.
///
/// Haar targets are redrawn per sample; W and GHZ targets are fixed, with
/// fresh measurement randomness per sample. Fully reproducible from the
/// master seed, including under parallel execution.
pub fn run_batch(cfg: &BatchConfig) -> Result<Vec<ExperimentStats>> {
    cfg.validate()?;
    let ell = cfg.effective_ell();

    let per_sample: Vec<Vec<ModeOutput>> = (0..cfg.num_samples)
        .into_par_iter()
        .map(|s| -> Result<Vec<ModeOutput>> {
            let sample_master = mix(cfg.master_seed, SAMPLE_SALT + s as u64);
            let psi = make_state(cfg.state, cfg.n, mix(sample_master, STATE_SALT))?;
            let sigma = NoisyState::new(psi, cfg.p)?;
            let table = pauli_coefficients(sigma.target(), COEFFICIENT_THRESHOLD)?;
            let mut outputs = Vec::with_capacity(cfg.modes.len());
            for &mode in &cfg.modes {
                let grouping = build_grouping(&table, mode)?;
                let seed = mix(sample_master, MODE_SALT + mode_id(mode));
                let dfe_cfg = DfeConfig::new(cfg.epsilon, cfg.delta, mode, seed)?
                    .with_ell(ell)?
                    .with_measurement(cfg.measurement);
                let result = run_dfe_on_grouping(&dfe_cfg, &sigma, &grouping)?;
                outputs.push(ModeOutput {
                    record: RunRecord {
                        sample_id: s as u64,
                        seed,
                        estimate: result.estimate,
                        total_copies: result.total_copies,
                        num_groups: result.num_groups,
                    },
                    x_second_moment: result.round_second_moment(),
                    group_ratio: min_group_ratio(&grouping),
                });
            }
            Ok(outputs)
        })
        .collect::<Result<_>>()?;

    let d = 1usize << cfg.n;
    let true_fidelity = (1.0 - cfg.p) + cfg.p / d as f64;
    let mut stats = Vec::with_capacity(cfg.modes.len());
    for (m, &mode) in cfg.modes.iter().enumerate() {
        let runs: Vec<RunRecord> = per_sample.iter().map(|s| s[m].record).collect();
        let x_second_moments: Vec<f64> = per_sample.iter().map(|s| s[m].x_second_moment).collect();
        let ratio = per_sample
            .iter()
            .map(|s| s[m].group_ratio)
            .fold(f64::INFINITY, f64::min);
        stats.push(summarize(
            mode,
            cfg,
            ell,
            true_fidelity,
            runs,
            x_second_moments,
            ratio,
        ));
    }
    Ok(stats)
}

fn summarize(
    mode: DfeMode,
    cfg: &BatchConfig,
    ell: u64,
    true_fidelity: f64,
    runs: Vec<RunRecord>,
    x_second_moments: Vec<f64>,
    min_group_ratio: f64,
) -> ExperimentStats {
    let residuals: Vec<f64> = runs.iter().map(|r| r.estimate - true_fidelity).collect();
    let mut copies: Vec<u64> = runs.iter().map(|r| r.total_copies).collect();
    copies.sort_unstable();
    ExperimentStats {
        mode,
        state: cfg.state,
        n: cfg.n,
        p: cfg.p,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        ell,
        master_seed: cfg.master_seed,
        measurement: cfg.measurement,
        true_fidelity,
        num_samples: runs.len(),
        variance_of_estimate: unbiased_variance(&residuals),
        mean_copies: copies.iter().map(|&c| c as f64).sum::<f64>() / copies.len() as f64,
        copies_min: copies[0],
        copies_median: median_of_sorted(&copies),
        copies_max: copies[copies.len() - 1],
        group_count_min: runs.iter().map(|r| r.num_groups).min().unwrap_or(0),
        group_count_max: runs.iter().map(|r| r.num_groups).max().unwrap_or(0),
        min_group_ratio,
        x_second_moments,
        runs,
    }
}

/// Standard error of a statistic by bootstrap resampling.
fn bootstrap_se<F: Fn(&[f64]) -> f64>(values: &[f64], stat: F, seed: u64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut rng = stream_rng(seed, 0);
    let mut resampled = Vec::with_capacity(values.len());
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        resampled.clear();
        for _ in 0..values.len() {
            resampled.push(values[rng.gen_range(0..values.len())]);
        }
        stats.push(stat(&resampled));
    }
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / stats.len() as f64).sqrt()
}

/// Comparison of a grouped batch against the ungrouped baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub variance_grouped: f64,
    pub variance_original: f64,
    pub variance_ratio: f64,
    /// `1 - variance_ratio`; 0.92 means a 92% reduction.
    pub variance_reduction: f64,
    pub copies_ratio: f64,
    /// True when `min ||b||_1^2/||b||^4 >= 10`, the regime where the
    /// grouped variance is provably below the original.
    pub variance_bound_applies: bool,
    pub variance_se_grouped: f64,
    pub variance_se_original: f64,
    /// In-regime check `Var(grouped) <= Var(original) + 3 se`; None when
    /// the regime condition fails.
    pub variance_ordered: Option<bool>,
    pub second_moment_grouped: f64,
    pub second_moment_original: f64,
    pub second_moment_se_grouped: f64,
    pub second_moment_se_original: f64,
    /// In-regime check `E[X_grouped^2] <= E[X_original^2] + 3 se`.
    pub second_moment_ordered: Option<bool>,
}

/// Compare per-batch variance, copy counts, and round second moments of a
/// grouped protocol against the original protocol on the same experiment.
pub fn variance_comparison(
    grouped: &ExperimentStats,
    original: &ExperimentStats,
) -> Result<VarianceReport> {
    if !grouped.same_experiment(original) {
        return Err(DfeError::InvalidParameter(
            "experiments differ in state, size, noise, or protocol parameters".to_string(),
        ));
    }
    let variance_grouped = grouped.variance_of_estimate;
    let variance_original = original.variance_of_estimate;
    let variance_ratio = if variance_original == 0.0 && variance_grouped == 0.0 {
        1.0
    } else {
        variance_grouped / variance_original
    };

    let g_res = grouped.residuals();
    let o_res = original.residuals();
    let variance_se_grouped = bootstrap_se(
        &g_res,
        unbiased_variance,
        mix(grouped.master_seed, BOOTSTRAP_SALT),
    );
    let variance_se_original = bootstrap_se(
        &o_res,
        unbiased_variance,
        mix(original.master_seed, BOOTSTRAP_SALT + 1),
    );

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let second_moment_grouped = grouped.round_second_moment();
    let second_moment_original = original.round_second_moment();
    let second_moment_se_grouped = bootstrap_se(
        &grouped.x_second_moments,
        mean,
        mix(grouped.master_seed, BOOTSTRAP_SALT + 2),
    );
    let second_moment_se_original = bootstrap_se(
        &original.x_second_moments,
        mean,
        mix(original.master_seed, BOOTSTRAP_SALT + 3),
    );

    let variance_bound_applies = grouped.min_group_ratio >= 10.0;
    let (variance_ordered, second_moment_ordered) = if variance_bound_applies {
        let var_slack = 3.0 * variance_se_grouped.hypot(variance_se_original);
        let sm_slack = 3.0 * second_moment_se_grouped.hypot(second_moment_se_original);
        (
            Some(variance_grouped <= variance_original + var_slack),
            Some(second_moment_grouped <= second_moment_original + sm_slack),
        )
    } else {
        (None, None)
    };

    Ok(VarianceReport {
        variance_grouped,
        variance_original,
        variance_ratio,
        variance_reduction: 1.0 - variance_ratio,
        copies_ratio: grouped.mean_copies / original.mean_copies,
        variance_bound_applies,
        variance_se_grouped,
        variance_se_original,
        variance_ordered,
        second_moment_grouped,
        second_moment_original,
        second_moment_se_grouped,
        second_moment_se_original,
        second_moment_ordered,
    })
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sample_id: u64,
    pub mode: DfeMode,
    pub n: usize,
    pub state: StateKind,
    pub p: f64,
    pub estimate: f64,
    pub true_fidelity: f64,
    pub residual: f64,
    pub total_copies: u64,
    pub num_groups: usize,
    pub seed: u64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

/// Write one CSV row per (sample, mode) plus a JSON sidecar with the
/// per-mode summaries. Re-running the same batch reproduces both files
/// byte for byte.
pub fn write_results(stats: &[ExperimentStats], path: &Path) -> Result<()> {
    if stats.is_empty() {
        return Err(DfeError::InvalidParameter("no stats to write".to_string()));
    }
    let num_samples = stats[0].num_samples;
    let mut writer = csv::Writer::from_writer(Vec::new());
    for sample in 0..num_samples {
        for s in stats {
            let run = s.runs.get(sample).ok_or_else(|| {
                DfeError::InvalidParameter("stats have unequal sample counts".to_string())
            })?;
            writer
                .serialize(ResultRow {
                    sample_id: run.sample_id,
                    mode: s.mode,
                    n: s.n,
                    state: s.state,
                    p: s.p,
                    estimate: run.estimate,
                    true_fidelity: s.true_fidelity,
                    residual: run.estimate - s.true_fidelity,
                    total_copies: run.total_copies,
                    num_groups: run.num_groups,
                    seed: run.seed,
                })
                .map_err(|e| DfeError::Malformed(e.to_string()))?;
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| DfeError::Malformed(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| DfeError::io(path, e))?;

    let summary = serde_json::to_string_pretty(stats).expect("stats serialization cannot fail");
    let sidecar = sidecar_path(path);
    fs::write(&sidecar, summary).map_err(|e| DfeError::io(&sidecar, e))?;
    Ok(())
}

const RESULTS_HEADER: [&str; 11] = [
    "sample_id",
    "mode",
    "n",
    "state",
    "p",
    "estimate",
    "true_fidelity",
    "residual",
    "total_copies",
    "num_groups",
    "seed",
];

/// Parse the rows of a results CSV.
pub fn parse_results_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    {
        let headers = reader
            .headers()
            .map_err(|e| DfeError::Malformed(e.to_string()))?;
        if headers.iter().ne(RESULTS_HEADER) {
            return Err(DfeError::Malformed(format!(
                "unexpected header {headers:?}"
            )));
        }
    }
    let mut rows = Vec::new();
    for row in reader.deserialize::<ResultRow>() {
        let row = row.map_err(|e| DfeError::Malformed(e.to_string()))?;
        for v in [row.p, row.estimate, row.true_fidelity, row.residual] {
            if !v.is_finite() {
                return Err(DfeError::Malformed("non-finite value in row".to_string()));
            }
        }
        if row.residual != row.estimate - row.true_fidelity {
            return Err(DfeError::Malformed(format!(
                "residual column inconsistent in sample {}",
                row.sample_id
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Read back what [`write_results`] wrote and verify that the sidecar
/// summary matches a recomputation from the rows.
pub fn read_results(path: &Path) -> Result<Vec<ExperimentStats>> {
    let csv_bytes = fs::read(path).map_err(|e| DfeError::io(path, e))?;
    let sidecar = sidecar_path(path);
    let summary_bytes = fs::read(&sidecar).map_err(|e| DfeError::io(&sidecar, e))?;
    let mut stats: Vec<ExperimentStats> =
        serde_json::from_slice(&summary_bytes).map_err(|e| DfeError::Malformed(e.to_string()))?;

    let rows = parse_results_csv(&csv_bytes)?;
    for s in &mut stats {
        let mode_rows: Vec<&ResultRow> = rows.iter().filter(|r| r.mode == s.mode).collect();
        for row in &mode_rows {
            if row.n != s.n
                || row.state != s.state
                || row.p != s.p
                || row.true_fidelity != s.true_fidelity
            {
                return Err(DfeError::Malformed(format!(
                    "row metadata for mode {} disagrees with the summary",
                    s.mode
                )));
            }
        }
        s.runs = mode_rows
            .iter()
            .map(|row| RunRecord {
                sample_id: row.sample_id,
                seed: row.seed,
                estimate: row.estimate,
                total_copies: row.total_copies,
                num_groups: row.num_groups,
            })
            .collect();
        if s.runs.len() != s.num_samples {
            return Err(DfeError::Malformed(format!(
                "mode {} has {} rows, summary says {}",
                s.mode,
                s.runs.len(),
                s.num_samples
            )));
        }
        // The summary must be exactly what the rows imply.
        let recomputed = summarize(
            s.mode,
            &BatchConfig {
                state: s.state,
                n: s.n,
                p: s.p,
                epsilon: s.epsilon,
                delta: s.delta,
                ell: Some(s.ell),
                modes: vec![s.mode],
                num_samples: s.num_samples,
                master_seed: s.master_seed,
                measurement: s.measurement,
            },
            s.ell,
            s.true_fidelity,
            s.runs.clone(),
            s.x_second_moments.clone(),
            s.min_group_ratio,
        );
        if recomputed != *s {
            return Err(DfeError::Malformed(format!(
                "summary for mode {} does not match its rows",
                s.mode
            )));
        }
    }
    Ok(stats)
}
