use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairscreen::io::{self, ActiveCap, AnalysisSettings, CovKind, SimulationSettings};
use pairscreen::{Error, Family};

/// Two-stage pairwise interaction testing with FDR control.
#[derive(Parser)]
#[command(name = "pairscreen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Screen variables, test surviving pairs and write a JSON report plus a
    /// CSV of rejected pairs.
    Analyze(AnalyzeArgs),
    /// Run the simulation study and write a metrics CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSON file with any of the settings below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Covariate matrix (CSV with header).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Response (single-column CSV with header).
    #[arg(long)]
    y: Option<PathBuf>,
    /// Adjustment covariates added to every stage-2 model.
    #[arg(long)]
    adjust: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    /// Screening rate; 0 gives the Benjamini-Hochberg procedure over all pairs.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Target FDR level.
    #[arg(long)]
    eta: Option<f64>,
    /// Recode {0,1,2} genotypes as carrier indicators.
    #[arg(long)]
    dominant: bool,
    /// Reject only when |T| > t̂.
    #[arg(long)]
    strict_cutoff: bool,
    /// Include the adjustment covariates in the stage-1 models too.
    #[arg(long)]
    adjust_in_stage1: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Output report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rejected-pairs CSV; defaults to <out stem>_rejected.csv.
    #[arg(long)]
    rejected_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Signal sizes, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    b: Option<Vec<f64>>,
    /// Screening rates, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha1: Option<Vec<f64>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed; replicate r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    misspecified: bool,
    /// Covariate covariance; defaults to ar1 when --misspecified is set.
    #[arg(long, value_enum)]
    cov: Option<CovArg>,
    /// Main-effect candidates per dataset: a count, `sqrt` (default) or `none`.
    #[arg(long)]
    active_cap: Option<ActiveCap>,
    /// Also evaluate alpha1 = 0 (Benjamini-Hochberg) on every replicate.
    #[arg(long)]
    include_bh: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Output metrics CSV; metadata goes to <out>.meta.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CovArg {
    Identity,
    Ar1,
}

fn flag(set: bool) -> Option<bool> {
    set.then_some(true)
}

fn analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let base: AnalysisSettings = match &args.config {
        Some(path) => io::load_json_config(path)?,
        None => AnalysisSettings::default(),
    };
    let flags = AnalysisSettings {
        x: args.x,
        y: args.y,
        adjust: args.adjust,
        family: args.family,
        alpha1: args.alpha1,
        eta: args.eta,
        strict_cutoff: flag(args.strict_cutoff),
        adjust_in_stage1: flag(args.adjust_in_stage1),
        dominant: flag(args.dominant),
        out: args.out,
        rejected_out: args.rejected_out,
        workers: args.workers,
    };
    let config = base.overlay(flags).resolve()?;
    let report = io::analyze(&config)?;
    eprintln!(
        "p1 = {}, M = {}, t_hat = {}, rejected {} of {} tested pairs ({} skipped)",
        report.p1,
        report.m,
        report.t_hat,
        report.rejected_count,
        report.pairs.len(),
        report.skipped_count
    );
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let base: SimulationSettings = match &args.config {
        Some(path) => io::load_json_config(path)?,
        None => SimulationSettings::default(),
    };
    let flags = SimulationSettings {
        family: args.family,
        n: args.n,
        p: args.p,
        b: args.b,
        alpha1: args.alpha1,
        eta: args.eta,
        reps: args.reps,
        seed: args.seed,
        misspecified: flag(args.misspecified),
        cov: args.cov.map(|c| match c {
            CovArg::Identity => CovKind::Identity,
            CovArg::Ar1 => CovKind::Ar1,
        }),
        active_cap: args.active_cap,
        include_bh: flag(args.include_bh),
        out: args.out,
        workers: args.workers,
    };
    let config = base.overlay(flags).resolve()?;
    let table = io::simulate(&config)?;
    let failed: usize = table.aggregates.iter().map(|a| a.replicates_failed).sum();
    if failed > 0 {
        eprintln!("warning: {failed} replicate evaluations failed and were excluded");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
