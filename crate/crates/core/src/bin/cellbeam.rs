use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cellbeam::asymptotic::{optimal_beta, LoadingSettings};
use cellbeam::channel::{sample_channels, SystemConfig};
use cellbeam::downlink::{duality_gap, max_min_sinr, solve_at_gamma, MaxMinSettings};
use cellbeam::dual_uplink::{DualSolution, SchemeId};
use cellbeam::downlink::PrecodingSolution;
use cellbeam::experiments::{
    asymptotic_curve, run_comparison, run_experiment, summarize, write_compare_csv, write_csv, write_curve_csv,
    ExperimentSpec, Method,
};
use cellbeam::Error;

/// Two-cell downlink max-min SINR beamforming.
#[derive(Parser)]
#[command(name = "cellbeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel draw at a fixed SINR target or at the max-min optimum.
    Solve(SolveArgs),
    /// Large-system γ* and rate, optionally swept over β.
    Asymptotic(AsymptoticArgs),
    /// Run a Monte Carlo experiment spec.
    Montecarlo(SpecArgs),
    /// Rate-maximising cell loading.
    OptimalBeta(LoadingArgs),
    /// Run every scheme and baseline on a spec's grid with large-system overlay columns.
    Compare(SpecArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scheme: SchemeId,
    #[arg(long, conflicts_with = "maxmin", required_unless_present = "maxmin")]
    gamma: Option<f64>,
    #[arg(long)]
    maxmin: bool,
    /// Channel draw index.
    #[arg(long, default_value_t = 0)]
    draw: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AsymptoticArgs {
    /// SCP, CBF, MCP or TD_SCP.
    #[arg(long)]
    scheme: Method,
    #[arg(long, required_unless_present = "sweep")]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    /// `beta:lo:hi:step`
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Summary destination; defaults to `<output_path>.summary.json`, or
    /// stderr when the table goes to stdout.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct LoadingArgs {
    #[arg(long)]
    scheme: SchemeId,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
}

#[derive(Serialize)]
struct FixedTargetOutput {
    scheme: SchemeId,
    gamma: f64,
    budget: f64,
    within_budget: bool,
    relative_duality_gap: f64,
    dual: DualSolution,
    solution: PrecodingSolution,
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> cellbeam::Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn parse_sweep(text: &str) -> cellbeam::Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [name, lo, hi, step] = parts[..] else {
        return Err(Error::Config(format!("sweep must be beta:lo:hi:step, got {text:?}")));
    };
    if name != "beta" {
        return Err(Error::Config(format!("only beta sweeps are supported, got {name:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("sweep value {s:?}: {e}")));
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if !(lo > 0.0 && hi >= lo && step > 0.0 && hi.is_finite()) {
        return Err(Error::Config(format!("sweep needs 0 < lo <= hi and step > 0, got {text:?}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn solve(args: &SolveArgs) -> cellbeam::Result<()> {
    let config = SystemConfig::from_path(&args.config)?;
    let channels = sample_channels(&config, args.draw);
    if args.maxmin {
        let result = max_min_sinr(args.scheme, &channels, &config, &MaxMinSettings::default())?;
        return write_json(&result, args.out.as_deref());
    }
    let gamma = args.gamma.expect("clap enforces --gamma or --maxmin");
    let (dual, solution) = solve_at_gamma(args.scheme, &channels, &config, gamma, &MaxMinSettings::default().solver)?;
    let gap = duality_gap(&dual, &solution, &channels, &config)?;
    let within_budget = solution.max_bs_power() <= config.power() * (1.0 + 1e-9);
    let out = FixedTargetOutput {
        scheme: args.scheme,
        gamma,
        budget: config.power(),
        within_budget,
        relative_duality_gap: gap,
        dual,
        solution,
    };
    write_json(&out, args.out.as_deref())?;
    if !within_budget {
        return Err(Error::Infeasible(format!(
            "gamma {gamma} needs per-BS power {} above the budget {}",
            out.solution.max_bs_power(),
            config.power()
        )));
    }
    Ok(())
}

fn asymptotic(args: &AsymptoticArgs) -> cellbeam::Result<()> {
    if matches!(args.scheme, Method::Baseline(b) if b != cellbeam::baselines::BaselineId::TdScp) {
        return Err(Error::Config(format!("{} has no large-system value", args.scheme)));
    }
    let betas = match (&args.sweep, args.beta) {
        (Some(s), _) => parse_sweep(s)?,
        (None, Some(b)) => vec![b],
        (None, None) => return Err(Error::Config("--beta or --sweep is required".into())),
    };
    let rows = asymptotic_curve(args.scheme, &betas, args.epsilon, args.snr_db)?;
    write_curve_csv(&rows, sink(args.out.as_deref())?)
}

fn table_and_summary(args: &SpecArgs, compare: bool) -> cellbeam::Result<()> {
    let spec = ExperimentSpec::from_path(&args.spec)?;
    let rows = if compare { run_comparison(&spec)? } else { run_experiment(&spec)? };
    let output = spec.output_path.as_ref().map(PathBuf::from);
    if compare {
        write_compare_csv(&rows, sink(output.as_deref())?)?;
    } else {
        write_csv(&rows, sink(output.as_deref())?)?;
    }
    let summary = summarize(&rows)?;
    let summary_path = args.summary.clone().or_else(|| {
        output.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".summary.json");
            PathBuf::from(s)
        })
    });
    match summary_path {
        Some(p) => write_json(&summary, Some(&p)),
        None => {
            let mut err = io::stderr().lock();
            serde_json::to_writer_pretty(&mut err, &summary)?;
            writeln!(err)?;
            Ok(())
        }
    }
}

fn loading(args: &LoadingArgs) -> cellbeam::Result<()> {
    let snr = 10f64.powf(args.snr_db / 10.0);
    let result = optimal_beta(args.scheme, snr, args.epsilon, &LoadingSettings::default())?;
    write_json(&result, None)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 3,
        Error::NotConverged { .. } | Error::Dimension(_) | Error::Rank(_) => 4,
        Error::Config(_) | Error::Argument(_) | Error::Range { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Asymptotic(a) => asymptotic(a),
        Command::Montecarlo(a) => table_and_summary(a, false),
        Command::OptimalBeta(a) => loading(a),
        Command::Compare(a) => table_and_summary(a, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

