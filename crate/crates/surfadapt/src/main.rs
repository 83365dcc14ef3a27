use std::fs::File;
use std::io::BufWriter;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use surfadapt::core::adaptive::AdaptiveConfig;
use surfadapt::core::refinement::{Criterion, Strategy};
use surfadapt::experiments::{self, ProblemName, RunLogSink, SurfaceName};
use surfadapt::io;

#[derive(Parser)]
#[command(name = "surfadapt", version, about = "Adaptive surface finite elements for the heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Bulk,
    Doerfler,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Nvb,
    Rgb,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform meshes and constant time steps against the exact solution.
    Convergence {
        #[arg(long, value_enum)]
        problem: ProblemName,
        /// Icosphere levels, `N` for 0..=N or `A..B`.
        #[arg(long, value_parser = parse_levels)]
        levels: RangeInclusive<u32>,
        /// Comma separated time steps.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Space-time adaptive run on the unit sphere.
    Run {
        #[arg(long, value_enum)]
        problem: ProblemName,
        #[arg(long)]
        tol: f64,
        #[arg(long)]
        tau0: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 0.1)]
        theta_star: f64,
        #[arg(long, value_enum, default_value = "bulk")]
        criterion: CriterionArg,
        #[arg(long, value_enum, default_value = "nvb")]
        strategy: StrategyArg,
        #[arg(long)]
        t_end: f64,
        /// Icosphere level the initial mesh starts from.
        #[arg(long, default_value_t = 1)]
        initial_level: u32,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-step VTK snapshots.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Geometric approximation errors and their orders.
    VerifyGeometry {
        #[arg(long, value_enum)]
        surface: SurfaceName,
        #[arg(long, value_parser = parse_levels)]
        levels: RangeInclusive<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refinement and coarsening strategies on the moving peak.
    Timing {
        #[arg(long, default_value_t = 2)]
        initial_level: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_levels(s: &str) -> Result<RangeInclusive<u32>, String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("invalid level `{t}`"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty level range {s}"));
            }
            Ok(a..=b)
        }
        None => Ok(0..=parse(s)?),
    }
}

fn create(path: &PathBuf) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Convergence { problem, levels, taus, t_end, out } => {
            let problem = problem.build(t_end);
            let rows = experiments::convergence_sweep(problem.as_ref(), levels, &taus, t_end)?;
            let mut w = io::convergence_writer(create(&out)?)?;
            for r in &rows {
                io::write_convergence_row(&mut w, r)?;
            }
            w.flush()?;
        }
        Command::Run {
            problem,
            tol,
            tau0,
            theta,
            theta_star,
            criterion,
            strategy,
            t_end,
            initial_level,
            out,
            snapshots,
        } => {
            let problem = problem.build(t_end);
            let mut config = AdaptiveConfig::new(tol, tau0, t_end, theta, theta_star);
            config.criterion = match criterion {
                CriterionArg::Bulk => Criterion::Bulk,
                CriterionArg::Doerfler => Criterion::Doerfler,
            };
            config.strategy = match strategy {
                StrategyArg::Nvb => Strategy::Nvb,
                StrategyArg::Rgb => Strategy::Rgb,
            };
            let mut sink = RunLogSink::new(create(&out)?, snapshots)?;
            let result = experiments::adaptive_run(problem.as_ref(), &config, initial_level, &mut sink);
            if let Some(e) = sink.error.take() {
                return Err(e.into());
            }
            result?;
            sink.finish()?;
        }
        Command::VerifyGeometry { surface, levels, out } => {
            let report = experiments::verify_geometry(surface, levels)?;
            experiments::write_geometry(create(&out)?, &report)?;
            let [d, mu, p] = report.orders;
            println!("fitted orders: max_abs_d {d:.3}, max_abs_one_minus_mu {mu:.3}, max_norm_P_minus_Atilde {p:.3}");
        }
        Command::Timing { initial_level, out } => {
            let rows = experiments::timing_comparison(initial_level)?;
            experiments::write_timing(create(&out)?, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("surfadapt: {message}");
            ExitCode::from(2)
        }
    }
}
