//! `finsler-kit` command-line front end.
//!
//! Exit codes: 0 success, 1 axiom/check failure, non_berwald verdict or a
//! numerical error, 2 configuration error, 3 inconclusive classification.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{IntegrationArgs, Outcome, ReportArgs};
use config::{Overrides, RunConfig};
use error::{CliError, EXIT_CONFIG};
use output::Sink;

#[derive(Parser)]
#[command(name = "finsler-kit", version, about = "Numerical toolkit for Finsler and Berwald geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Registry metric: euclidean2, quartic2, randers_flat, randers_curved,
    /// conformal_exp, sphere_stereo
    #[arg(long)]
    metric: Option<String>,
    /// TOML run configuration (sections metric, diff, quadrature,
    /// transport, output, validate, classify, loewner)
    #[arg(long)]
    metric_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; beats FINSLER_KIT_OUT_DIR and output.dir
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Finite-difference step (diff.step)
    #[arg(long)]
    diff_step: Option<f64>,
    /// Richardson levels (diff.richardson)
    #[arg(long)]
    richardson: Option<usize>,
    /// Step for differentiating derived quantities (diff.nested_step)
    #[arg(long)]
    nested_step: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    chart_lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    chart_upper: Option<String>,
    /// Skip CSV artifacts
    #[arg(long)]
    no_csv: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            metric: self.metric.clone(),
            metric_file: self.metric_file.clone(),
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            diff_step: self.diff_step,
            richardson: self.richardson,
            nested_step: self.nested_step,
            chart_lower: self.chart_lower.clone(),
            chart_upper: self.chart_upper.clone(),
            no_csv: self.no_csv,
        }
    }
}

#[derive(Args)]
struct Integrate {
    /// RK4 step
    #[arg(long)]
    step: Option<f64>,
    /// canonical (nonlinear) or extracted (linear base connection)
    #[arg(long)]
    connection: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the Finsler axioms on random samples of the chart
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Berwald / non-Berwald verdict from curvature and linearity statistics
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        num_x: Option<usize>,
        #[arg(long)]
        num_y: Option<usize>,
    },
    /// Integrate a geodesic with fixed-step RK4
    Geodesic {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y0: Option<String>,
        /// Final time
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[command(flatten)]
        integrate: Integrate,
    },
    /// Parallel-transport a vector along a curve
    Transport {
        #[command(flatten)]
        common: Common,
        /// segment:a;b | polyline:p1;...;pk | square:c1,..,cn,side | circle:c1,c2,r
        #[arg(long, allow_hyphen_values = true)]
        curve: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        v0: Option<String>,
        #[command(flatten)]
        integrate: Integrate,
    },
    /// Averaged Riemannian metric at a point
    Metrize {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Sphere-grid resolution
        #[arg(long, conflicts_with = "mc_samples")]
        resolution: Option<usize>,
        /// Use Monte-Carlo quadrature with this many samples
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Centred Loewner ellipsoid of the unit ball at a point
    Loewner {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Indicatrix sample count
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// validate, classify, metrize, loewner and compatibility checks in one document
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// Validation sample count
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        loewner_samples: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate { common, .. }
            | Command::Classify { common, .. }
            | Command::Geodesic { common, .. }
            | Command::Transport { common, .. }
            | Command::Metrize { common, .. }
            | Command::Loewner { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

fn run(cmd: &Command) -> Result<(Outcome, Sink), CliError> {
    let rc = RunConfig::resolve(&cmd.common().overrides())?;
    let mut sink = Sink::new(&rc.out_dir)?;
    let outcome = match cmd {
        Command::Validate { samples, .. } => commands::cmd_validate(&rc, *samples, &mut sink),
        Command::Classify { num_x, num_y, .. } => commands::cmd_classify(&rc, *num_x, *num_y, &mut sink),
        Command::Geodesic {
            x0,
            y0,
            t_end,
            integrate,
            ..
        } => commands::cmd_geodesic(
            &rc,
            x0.as_deref(),
            y0.as_deref(),
            *t_end,
            &IntegrationArgs {
                step: integrate.step,
                connection: integrate.connection.as_deref(),
            },
            &mut sink,
        ),
        Command::Transport {
            curve, v0, integrate, ..
        } => commands::cmd_transport(
            &rc,
            curve.as_deref(),
            v0.as_deref(),
            &IntegrationArgs {
                step: integrate.step,
                connection: integrate.connection.as_deref(),
            },
            &mut sink,
        ),
        Command::Metrize {
            x,
            resolution,
            mc_samples,
            ..
        } => commands::cmd_metrize(&rc, x.as_deref(), *resolution, *mc_samples, &mut sink),
        Command::Loewner {
            x, samples, tolerance, ..
        } => commands::cmd_loewner(&rc, x.as_deref(), *samples, *tolerance, &mut sink),
        Command::Report {
            x,
            samples,
            loewner_samples,
            ..
        } => commands::cmd_report(
            &rc,
            &ReportArgs {
                x: x.as_deref(),
                samples: *samples,
                loewner_samples: *loewner_samples,
            },
            &mut sink,
        ),
    }?;
    Ok((outcome, sink))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli.command) {
        Ok((outcome, sink)) => {
            println!("{}", outcome.summary);
            for p in &sink.written {
                println!("wrote {}", p.display());
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
