use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinvi::commands::ablate::{self, AblateOptions, Mode};
use kinvi::commands::report::ReportOptions;
use kinvi::commands::{fit, report, synth};
use kinvi::formats::session::Overrides;
use kinvi::CliError;
use kinvi_core::calibration::ScaleAveraging;
use kinvi_core::Family;

#[derive(Parser)]
#[command(
    name = "kinvi",
    version,
    about = "Variational joint-angle trajectories from multiview keypoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct FitOverrides {
    /// Posterior covariance rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Likelihood family: exponential, half_cauchy or half_normal.
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    /// Total optimization steps; milestones scale along.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl From<FitOverrides> for Overrides {
    fn from(o: FitOverrides) -> Self {
        Overrides {
            rank: o.rank,
            family: o.family,
            steps: o.steps,
            seed: o.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and a session file for it.
    Synth {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a session.
    Fit {
        session: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        overrides: FitOverrides,
        /// No progress output.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Summaries of a fitted checkpoint.
    Report {
        checkpoint: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// σ clipping levels (px) for the calibration error.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,5")]
        ece_clips: Vec<f64>,
        /// Posterior samples per frame for spatial spreads.
        #[arg(long, default_value_t = 250)]
        samples: usize,
        /// Fraction of lowest-score keypoints used as pseudo ground truth.
        #[arg(long, default_value_t = 0.05)]
        fraction: f64,
        /// Average standard deviations instead of variances in the
        /// predictive scale.
        #[arg(long)]
        std_averaging: bool,
        /// Directory with ground_truth_<trial>.csv files for band coverage.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep a setting across fits on one dataset.
    Ablate {
        session: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// noise, cameras or rank.
        #[arg(long)]
        mode: Mode,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        grid: Vec<f64>,
        /// Seeds per grid value.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 100)]
        spatial_samples: usize,
        #[command(flatten)]
        overrides: FitOverrides,
    },
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s)
        .ok_or_else(|| format!("unknown family {s:?} (exponential, half_cauchy, half_normal)"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out } => {
            let session = synth::run(&config, &out)?;
            println!("{}", session.display());
        }
        Command::Fit {
            session,
            out,
            overrides,
            quiet,
        } => {
            fit::run(&session, &out, &overrides.into(), quiet)?;
        }
        Command::Report {
            checkpoint,
            out,
            ece_clips,
            samples,
            fraction,
            std_averaging,
            truth,
            seed,
        } => {
            let opts = ReportOptions {
                clips: ece_clips,
                fraction,
                samples,
                averaging: if std_averaging {
                    ScaleAveraging::StdDev
                } else {
                    ScaleAveraging::Variance
                },
                seed,
            };
            report::run(&checkpoint, &out, &opts, truth.as_deref())?;
        }
        Command::Ablate {
            session,
            out,
            mode,
            grid,
            seeds,
            spatial_samples,
            overrides,
        } => {
            let opts = AblateOptions {
                mode,
                grid,
                seeds,
                overrides: overrides.into(),
                threads: ablate::threads_from_env()?,
                spatial_samples,
            };
            ablate::run(&session, &out, &opts)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
