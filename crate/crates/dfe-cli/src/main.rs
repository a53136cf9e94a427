//! `dfe`: fidelity estimation experiments from the command line.
//!
//! Exit codes: 0 on success, 1 on invariant failure or runtime error,
//! 2 on usage errors. `DFE_THREADS` caps worker threads.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dfe_core::{
    pauli_coefficients, run_batch, run_invariant_suite, sorted_insertion, variance_comparison,
    write_results, BatchConfig, Commutativity, DfeMode, MeasurementModel, StateKind,
    COEFFICIENT_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "dfe", version, about = "Direct fidelity estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run batches of fidelity estimation and write residual statistics.
    Run(RunArgs),
    /// Group a target state's Pauli coefficients and print the norm table.
    Groups(GroupsArgs),
    /// Run the library invariant suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Original,
    Qwc,
    Fc,
    All,
}

impl ModeArg {
    fn modes(self) -> Vec<DfeMode> {
        match self {
            ModeArg::Original => vec![DfeMode::Original],
            ModeArg::Qwc => vec![DfeMode::GroupedQwc],
            ModeArg::Fc => vec![DfeMode::GroupedFc],
            ModeArg::All => DfeMode::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Target state family.
    #[arg(long, default_value = "haar", value_parser = StateKind::from_str)]
    state: StateKind,
    /// Qubit count (desk-scale default 4; 8 with --full).
    #[arg(long)]
    n: Option<usize>,
    /// Depolarizing noise level.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Rounds per run; defaults to ceil(1/(epsilon^2 delta)).
    #[arg(long)]
    ell: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::All)]
    mode: ModeArg,
    /// Runs per mode (desk-scale default 200; 1000 with --full).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Outcome model: per-member marginals or joint shared-basis shots.
    #[arg(long, default_value = "per-member", value_parser = MeasurementModel::from_str)]
    readout: MeasurementModel,
    /// Write per-run rows to this CSV (plus a .summary.json sidecar).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-scale profile: n=8, 1000 samples.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct GroupsArgs {
    #[arg(long, default_value = "haar", value_parser = StateKind::from_str)]
    state: StateKind,
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Commutativity framework for the grouping.
    #[arg(long, default_value = "qwc", value_parser = Commutativity::from_str)]
    mode: Commutativity,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

fn configure_threads() -> Result<(), String> {
    if let Ok(value) = std::env::var("DFE_THREADS") {
        let threads: usize = value
            .parse()
            .map_err(|_| format!("DFE_THREADS={value:?} is not a thread count"))?;
        if threads == 0 {
            return Err("DFE_THREADS must be at least 1".to_string());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let (default_n, default_samples) = if args.full { (8, 1000) } else { (4, 200) };
    let cfg = BatchConfig {
        state: args.state,
        n: args.n.unwrap_or(default_n),
        p: args.p,
        epsilon: args.epsilon,
        delta: args.delta,
        ell: args.ell,
        modes: args.mode.modes(),
        num_samples: args.samples.unwrap_or(default_samples),
        master_seed: args.seed,
        measurement: args.readout,
    };
    let stats = run_batch(&cfg).map_err(|e| e.to_string())?;

    println!(
        "state={} n={} p={} epsilon={} delta={} ell={} samples={} seed={}",
        cfg.state,
        cfg.n,
        cfg.p,
        cfg.epsilon,
        cfg.delta,
        stats[0].ell,
        cfg.num_samples,
        cfg.master_seed,
    );
    println!(
        "{:<9} {:>9} {:>14} {:>12} {:>12} {:>12}",
        "mode", "groups", "mean_estimate", "variance", "mean_copies", "max_copies"
    );
    for s in &stats {
        let mean_estimate = s.runs.iter().map(|r| r.estimate).sum::<f64>() / s.num_samples as f64;
        let groups = if s.group_count_min == s.group_count_max {
            s.group_count_min.to_string()
        } else {
            format!("{}..{}", s.group_count_min, s.group_count_max)
        };
        println!(
            "{:<9} {:>9} {:>14.6} {:>12.3e} {:>12.1} {:>12}",
            s.mode.to_string(),
            groups,
            mean_estimate,
            s.variance_of_estimate,
            s.mean_copies,
            s.copies_max,
        );
    }

    let original = stats.iter().find(|s| s.mode == DfeMode::Original);
    if let Some(original) = original {
        for s in stats.iter().filter(|s| s.mode != DfeMode::Original) {
            let report = variance_comparison(s, original).map_err(|e| e.to_string())?;
            println!(
                "{} vs original: variance ratio {:.3} (reduction {:.1}%), copies ratio {:.3}",
                s.mode,
                report.variance_ratio,
                100.0 * report.variance_reduction,
                report.copies_ratio,
            );
        }
    }

    if let Some(path) = &args.out {
        write_results(&stats, path).map_err(|e| e.to_string())?;
        println!(
            "wrote {} and {}",
            path.display(),
            path.with_extension("summary.json").display()
        );
    }
    Ok(())
}

fn cmd_groups(args: GroupsArgs) -> Result<(), String> {
    let psi = dfe_core::make_state(args.state, args.n, args.seed).map_err(|e| e.to_string())?;
    let table = pauli_coefficients(&psi, COEFFICIENT_THRESHOLD).map_err(|e| e.to_string())?;
    let grouping = sorted_insertion(&table, args.mode).map_err(|e| e.to_string())?;
    println!(
        "state={} n={} mode={} strings={} groups={}",
        args.state,
        args.n,
        args.mode,
        table.len(),
        grouping.num_groups()
    );
    println!(
        "{:<7} {:>5} {:>12} {:>12}  leading",
        "group", "size", "norm_sq", "norm_l1"
    );
    for g in grouping.groups() {
        let (lead, b) = &g.members()[0];
        println!(
            "{:<7} {:>5} {:>12.6} {:>12.6}  {} ({:+.4})",
            g.index(),
            g.len(),
            g.norm_sq(),
            g.norm_l1(),
            lead,
            b,
        );
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool, String> {
    let results = run_invariant_suite(args.seed).map_err(|e| e.to_string())?;
    let mut all_passed = true;
    for r in &results {
        if r.passed {
            println!("ok   {}", r.name);
        } else {
            all_passed = false;
            println!("FAIL {}: {}", r.name, r.detail);
        }
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    // Die quietly when stdout is closed early (e.g. piped into head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Groups(args) => cmd_groups(args),
        Command::Verify(args) => match cmd_verify(args) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("invariant suite failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
