//! `mixreg`: regression on mixtures with varying concentrations.
//!
//! Exit codes: 0 success, 1 I/O, 2 bad config or input, 3 too many failed
//! replications, 4 estimation impossible on this data, 5 unsupported dimension.

mod config;
mod csvio;
mod error;
mod estimate;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mixreg::simlab::{gen_sample, replication_rng, run_monte_carlo, McSummary};

use crate::config::SimulateConfig;
use crate::error::{CliError, CliResult};
use crate::estimate::{EstimateOptions, EstimateReport};

#[derive(Debug, Parser)]
#[command(
    name = "mixreg",
    version,
    about = "Regression on mixtures with varying concentrations"
)]
struct Cli {
    /// Worker threads for simulations (default: all logical cores).
    #[arg(long, global = true, env = "MIXREG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo coverage experiment and write summary.{csv,json}.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Write one simulated sample as CSV.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// Replication index whose sample is written.
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Fit a CSV sample (`y,x1..xd,p1..pM`) and write estimates.json.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also fit by EM started from the LS estimates.
        #[arg(long)]
        em: bool,
        /// Also compute the one-step estimator from the LS pilot.
        #[arg(long)]
        one_step: bool,
        /// Divide alpha by this many simultaneous sets.
        #[arg(long, default_value_t = 1)]
        bonferroni: usize,
        /// Also write estimates.csv when set to csv.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Draw the ellipses of an estimates.json (d = 2 only) into ellipses.svg.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            config,
            out,
            format,
        } => simulate(&config, &out, format),
        Command::Generate {
            config,
            out,
            replication,
        } => generate(&config, &out, replication),
        Command::Estimate {
            input,
            out,
            alpha,
            em,
            one_step,
            bonferroni,
            format,
        } => {
            let opts = EstimateOptions {
                alpha,
                em,
                one_step,
                bonferroni,
            };
            run_estimate(&input, &out, &opts, format)
        }
        Command::Plot { input, out } => run_plot(&input, &out),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn simulate(config: &Path, out: &Path, format: Format) -> CliResult<()> {
    let cfg = SimulateConfig::load(config)?.to_experiment()?;
    let summary = run_monte_carlo(&cfg)?;
    create_dir(out)?;
    let path = match format {
        Format::Csv => {
            let path = out.join("summary.csv");
            write_summary_csv(&path, &summary)?;
            path
        }
        Format::Json => {
            let path = out.join("summary.json");
            let text =
                serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&path, &text)?;
            path
        }
    };
    println!("method  component  n  coverage  avg_volume  failures");
    for row in &summary.rows {
        println!(
            "{}  {}  {}  {:.3}  {:.6e}  {}",
            row.method, row.component, row.n, row.coverage, row.avg_volume, row.failures
        );
    }
    println!("wrote {}", path.display());
    if summary.invalid {
        return Err(CliError::TooManyFailures(format!(
            "more than 5% of {} replications failed for some method; {} is flagged invalid",
            summary.replications,
            path.display()
        )));
    }
    Ok(())
}

fn write_summary_csv(path: &Path, summary: &McSummary) -> CliResult<()> {
    let io = |e: csv::Error| CliError::io(path.display(), e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "method",
        "component",
        "n",
        "coverage",
        "avg_volume",
        "failures",
    ])
    .map_err(io)?;
    for row in &summary.rows {
        w.write_record([
            row.method.to_string(),
            row.component.to_string(),
            row.n.to_string(),
            format!("{:.16e}", row.coverage),
            format!("{:.16e}", row.avg_volume),
            row.failures.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

fn generate(config: &Path, out: &Path, replication: u64) -> CliResult<()> {
    let cfg = SimulateConfig::load(config)?.to_experiment()?;
    let mut rng = replication_rng(cfg.base_seed, replication);
    let sample = gen_sample(&cfg, &mut rng);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    csvio::write_sample(out, &sample)
}

fn run_estimate(input: &Path, out: &Path, opts: &EstimateOptions, format: Format) -> CliResult<()> {
    let loaded = csvio::read_sample(input)?;
    if !loaded.renormalized.is_empty() {
        let first = loaded.renormalized[0] + 2;
        eprintln!(
            "warning: {} rows had mixing probabilities not summing to 1 and were rescaled (first at line {first})",
            loaded.renormalized.len()
        );
    }
    let mut report = estimate::estimate(&loaded.sample, opts, |msg| eprintln!("warning: {msg}"))?;
    report.renormalized_rows = loaded.renormalized.len();
    create_dir(out)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out.join("estimates.json"), &text)?;
    if format == Format::Csv {
        estimate::write_csv(&out.join("estimates.csv"), &report)?;
    }
    for method in &report.methods {
        for c in &method.components {
            let coefs: Vec<String> = c.estimate.iter().map(|b| format!("{b:.6}")).collect();
            println!(
                "{} component {}: b = ({})",
                method.method,
                c.component,
                coefs.join(", ")
            );
        }
    }
    Ok(())
}

fn run_plot(input: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(input).map_err(|e| CliError::io(input.display(), e))?;
    let report: EstimateReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let svg = plot::render(&report)?;
    create_dir(out)?;
    let path = out.join("ellipses.svg");
    write_file(&path, &svg)?;
    println!("wrote {}", path.display());
    Ok(())
}
