use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clocksync::harness::FixedParams;
use clocksync::{
    emit_outputs, run_experiment, simulate_cycle, DenoiseConfig, Denoiser, EstimateReport,
    ExperimentConfig, ThresholdPolicy, TimestampMatrix,
};

#[derive(Parser)]
#[command(name = "clocksync", version, about = "Two-way clock synchronization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one exchange cycle and write its timestamps as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of rounds; defaults to the first entry of `n_rounds_grid`.
        #[arg(long)]
        rounds: Option<usize>,
        /// Trial index whose parameters and seed are used.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Estimate skew, offset and fixed delay from a timestamp CSV.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        /// Fixed soft threshold; the universal rule is used when omitted.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Run the Monte Carlo sweep and write results.csv, results.json and curves.svg.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Use `skew,offset,delay` for every trial instead of redrawing.
        #[arg(long, value_parser = parse_fixed_params)]
        fixed_params: Option<FixedParams>,
    },
    /// Print the Cramer-Rao bounds for every N of the config as JSON.
    Crlb {
        #[arg(long)]
        config: PathBuf,
        /// Report the bounds of a single trial instead of the trial average.
        #[arg(long)]
        trial: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Raw,
    Svd,
    Lrma,
}

fn parse_fixed_params(s: &str) -> std::result::Result<FixedParams, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [alpha, beta, d] => Ok(FixedParams { alpha, beta, d }),
        _ => Err(format!("expected three comma-separated values, got {}", parts.len())),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json_file(path).with_context(|| format!("loading config {}", path.display()))
}

fn simulate(config: &Path, out: &Path, rounds: Option<usize>, trial: usize) -> Result<()> {
    let config = load_config(config)?;
    let n = rounds.unwrap_or(config.n_rounds_grid[0]);
    let setup = config.draw_trial(n, trial);
    let log = simulate_cycle(&setup.clock, &setup.delays, &setup.plan, setup.sim_seed)?;
    log.write(out)?;
    println!("{}", out.display());
    Ok(())
}

fn estimate(input: &Path, method: MethodArg, rank: usize, tau: Option<f64>) -> Result<()> {
    let g = TimestampMatrix::read_csv(input)?;
    let denoiser = match method {
        MethodArg::Raw => Denoiser::Raw,
        MethodArg::Svd => Denoiser::svd(rank),
        MethodArg::Lrma => Denoiser::lrma(DenoiseConfig {
            rank_k: rank,
            threshold: tau.map_or(ThresholdPolicy::Universal, ThresholdPolicy::FixedTau),
            eta: None,
        }),
    };
    let report = denoiser.estimate(&g)?;
    if report.alpha_hat <= 0.0 {
        bail!("estimated skew {} is not positive", report.alpha_hat);
    }
    println!("{}", EstimateReport::CSV_HEADER);
    println!("{}", report.to_csv_row());
    Ok(())
}

fn experiment(config: &Path, out_dir: &Path, fixed: Option<FixedParams>) -> Result<()> {
    let mut config = load_config(config)?;
    if fixed.is_some() {
        config.fixed_params = fixed;
        config.validate()?;
    }
    let table = run_experiment(&config)?;
    for path in emit_outputs(&table, out_dir)? {
        println!("{}", path.display());
    }
    for f in &table.failures {
        eprintln!("warning: {} failed trials for {} at N={}", f.failed, f.method, f.n);
    }
    Ok(())
}

#[derive(Serialize)]
struct CrlbRow {
    n: usize,
    crlb_alpha: f64,
    crlb_beta: f64,
}

#[derive(Serialize)]
struct CrlbReport {
    sigma2: f64,
    /// Number of trials averaged; 1 for a single-trial report.
    trials: usize,
    rows: Vec<CrlbRow>,
}

fn crlb(config: &Path, trial: Option<usize>) -> Result<()> {
    let config = load_config(config)?;
    let trials: Vec<usize> = match trial {
        Some(t) => vec![t],
        None => (0..config.trials).collect(),
    };
    let mut rows = Vec::new();
    for &n in &config.n_rounds_grid {
        let (mut a, mut b) = (0.0, 0.0);
        for &t in &trials {
            let setup = config.draw_trial(n, t);
            let (ca, cb) = config
                .nominal_crlb(&setup, config.sigma2)
                .with_context(|| format!("bounds for N={n}, trial {t}"))?;
            a += ca;
            b += cb;
        }
        let m = trials.len() as f64;
        rows.push(CrlbRow {
            n,
            crlb_alpha: a / m,
            crlb_beta: b / m,
        });
    }
    let report = CrlbReport {
        sigma2: config.sigma2,
        trials: trials.len(),
        rows,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            rounds,
            trial,
        } => simulate(&config, &out, rounds, trial),
        Command::Estimate {
            input,
            method,
            rank,
            tau,
        } => estimate(&input, method, rank, tau),
        Command::Experiment {
            config,
            out_dir,
            fixed_params,
        } => experiment(&config, &out_dir, fixed_params),
        Command::Crlb { config, trial } => crlb(&config, trial),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clocksync: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
