//! Command-line front end for the nonlocal heat equation laboratory.
//!
//! One scenario per invocation: `run` loads a JSON configuration, solves
//! it, evaluates the configured audits, and writes `report.json`,
//! `fields.csv`, and `constants_vs_h.csv` into the output directory.
//! Exit codes separate the failure phases:
//!
//! * `0` — every non-skipped audit passed;
//! * `1` — the run completed but at least one audit failed;
//! * `2` — the configuration was rejected (unreadable, malformed, or
//!   out-of-range parameters), before any numerics ran;
//! * `3` — the solver or an audit broke down at runtime.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlheat::scenario::{load_scenario, run_scenario};

#[derive(Parser)]
#[command(name = "nlheat", version, about = "Nonlocal heat equation solver and inequality audit runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its report artifacts.
    Run {
        /// Scenario configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory for report.json, fields.csv, and constants_vs_h.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override the configuration's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for assembly and audits (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List every audit check id a report can contain.
    ListChecks,
    /// List the kernel, data, scheme, and audit presets a scenario may use.
    ListPresets,
}

const CHECKS: &[(&str, &str)] = &[
    ("order/sign", "nonpositive data keep the solution nonpositive"),
    ("order/comparison", "pointwise-ordered data give pointwise-ordered solutions"),
    ("order/global-bound", "with zero forcing, sup |u| stays within twice sup |g|"),
    ("caccioppoli/above", "energy of (u - level)+ against cutoff and tail terms"),
    ("caccioppoli/below", "energy of (u - level)- against cutoff and tail terms"),
    ("bounded/delta-0.25", "local sup against tail and mean terms, delta = 0.25"),
    ("bounded/delta-0.50", "local sup against tail and mean terms, delta = 0.50"),
    ("bounded/delta-1.00", "local sup against tail and mean terms, delta = 1.00"),
    ("bounded/tail-free", "tail-free local sup bound for nonnegative fields"),
    ("harnack/full", "early-cylinder sup against late-cylinder inf plus tail"),
    ("harnack/tail-free", "tail-free sup/inf bound for globally nonnegative fields"),
    ("harnack/tail-relation", "positive-part tail against local sup and far tail"),
    ("harnack/weak-p0.25", "weak form: p-mean against inf plus tail, p = 0.25"),
    ("harnack/weak-p0.50", "weak form: p-mean against inf plus tail, p = 0.50"),
    ("harnack/weak-p0.75", "weak form: p-mean against inf plus tail, p = 0.75"),
    ("covering/gamma-<g>", "covering dichotomy over seeded random masks at density threshold g"),
];

const PRESETS: &[(&str, &str)] = &[
    ("kernel: fractional", "power kernel of order s with the mass normalization"),
    ("kernel: tabulated", "radial profile from a radius,value CSV inside the admissible envelope"),
    ("data: constant", "fixed value everywhere"),
    ("data: linear-in-t", "base + slope * (t - t_start), spatially uniform"),
    ("data: sine-bump", "product of half-period sines inside the domain, zero outside"),
    ("data: indicator-annulus", "fixed value on inner <= |x - center| < outer, else zero"),
    ("data: eigenmode", "multiple of a discrete Dirichlet eigenmode, constant in time"),
    ("data: csv", "spatially uniform t,value table (exterior and forcing slots only)"),
    ("scheme: galerkin", "spectral Galerkin with modal exponential integration"),
    ("scheme: monotone", "implicit Euler on the monotone matrix scheme"),
    ("scheme: both", "solve both, audit the monotone field, record their sup gap"),
    ("audit: order", "sign, comparison, and global-bound checks against shifted data"),
    ("audit: caccioppoli", "truncation energy estimate on a backward cylinder"),
    ("audit: bounded", "local boundedness with tail and mean terms"),
    ("audit: harnack", "weak and full Harnack suite with tail corrections"),
    ("audit: covering", "covering dichotomy trials on a forward cylinder lattice"),
];

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run(&config, &out, seed, threads),
        Command::ListChecks => {
            for (id, what) in CHECKS {
                println!("{id:22} {what}");
            }
            ExitCode::SUCCESS
        }
        Command::ListPresets => {
            for (id, what) in PRESETS {
                println!("{id:26} {what}");
            }
            ExitCode::SUCCESS
        }
    }
}

fn run(config: &PathBuf, out: &PathBuf, seed: Option<u64>, threads: Option<usize>) -> ExitCode {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("runtime error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    let loaded = match load_scenario(config) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_scenario(&loaded, out, seed) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("runtime error: {e}");
            return ExitCode::from(3);
        }
    };
    let s = &report.summary;
    println!(
        "{} audits: {} passed, {} failed, {} skipped",
        s.audits_total, s.passed, s.failed, s.skipped
    );
    println!("solution range: [{}, {}]", s.min_u, s.max_u);
    println!("artifacts written to {}", out.display());
    if s.failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
