use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use linbess::bess::ModelKind;
use linbess::cli::{
    emit_region, parse_counts, parse_models, report_curve, run_spt, run_tep, summarize, write_perf_curve,
    write_summary, CliError, ExperimentReport, ProfileSource, RegionSpec, RunConfig,
};
use linbess::solver::SolveConfig;

#[derive(Parser)]
#[command(name = "linbess", version, about = "Linear BESS formulations: experiments and reports")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Set-point tracking experiment.
    RunSpt(RunArgs),
    /// Transmission expansion experiment.
    RunTep(RunArgs),
    /// Feasible-region grid of one battery.
    Region {
        /// TOML with e_min, e_max, p_c_max, p_d_max, eta_c, eta_d, e0.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        models: String,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cumulative solved fraction against runtime from a report.
    PerfCurve {
        report: PathBuf,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        bess_count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-model averages of a report.
    Summarize {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// `3`, `1,2` or `1..5`.
    #[arg(long, default_value = "1..5")]
    bess_count: String,
    /// Comma list of Exc, LP, NA, RelYZ, ExtLP, or `all`.
    #[arg(long, default_value = "all")]
    models: String,
    #[arg(long, default_value_t = 50)]
    days: usize,
    /// Profile CSV (`day,h1..h24`) or `synthetic`.
    #[arg(long, default_value = "synthetic")]
    profiles: String,
    /// TEP dataset TOML.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    mip_gap: f64,
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Branch-and-bound nodes per solve.
    #[arg(long)]
    max_nodes: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let defaults = SolveConfig::default();
        Ok(RunConfig {
            seed: self.seed,
            n_instances: self.instances,
            bess_counts: parse_counts(&self.bess_count)?,
            models: parse_models(&self.models)?,
            days: self.days,
            profiles: match self.profiles.as_str() {
                "synthetic" => ProfileSource::Synthetic,
                p => ProfileSource::File(p.into()),
            },
            dataset: self.dataset.clone(),
            solve: SolveConfig {
                mip_rel_gap: self.mip_gap,
                time_limit: self.time_limit,
                max_nodes: self.max_nodes.unwrap_or(defaults.max_nodes),
                ..defaults
            },
            workers: self.workers,
        })
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> Result<ExperimentReport> {
    ExperimentReport::load(path).with_context(|| format!("reading report {}", path.display()))
}

/// Exit code 2 when any row failed to reach optimality.
fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::RunSpt(a) => {
            let report = run_spt(&a.config()?)?;
            report.write_csv(sink(&a.out)?)?;
            Ok(if report.failures() > 0 { 2 } else { 0 })
        }
        Command::RunTep(a) => {
            let report = run_tep(&a.config()?)?;
            report.write_csv(sink(&a.out)?)?;
            Ok(if report.failures() > 0 { 2 } else { 0 })
        }
        Command::Region {
            params,
            models,
            grid,
            out,
        } => {
            let spec = match params {
                Some(p) => RegionSpec::load(&p)?,
                None => RegionSpec::default(),
            };
            emit_region(&spec, &parse_models(&models)?, grid, sink(&out)?)?;
            Ok(0)
        }
        Command::PerfCurve {
            report,
            model,
            bess_count,
            out,
        } => {
            let curve = report_curve(&load(&report)?, model, bess_count);
            write_perf_curve(sink(&out)?, &curve)?;
            Ok(0)
        }
        Command::Summarize { report, out } => {
            write_summary(sink(&out)?, &summarize(&load(&report)?))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
