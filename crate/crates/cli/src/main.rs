use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hagedorn::basis::PositionSign;
use hagedorn::validate::ValidateOptions;
use hagedorn_cli::config;
use hagedorn_cli::runs::{self, Outputs};
use hagedorn_cli::{CliError, EXIT_OK};

#[derive(Parser)]
#[command(name = "hagedorn", version, about = "Semiclassical wavepacket propagation with optimally truncated Hagedorn expansions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of concurrent hbar runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Adds wall-clock columns (outputs are then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory, hierarchy, assembled states and oracle errors per hbar.
    Propagate(Common),
    /// Coefficient limits and the S-matrix action on the incoming state.
    Scatter(Common),
    /// Ehrenfest-time schedule and runs to T = T' ln(1/hbar).
    Ehrenfest(Common),
    /// Outside masses at the configured radii.
    Localize(Common),
    /// Runs the invariant suite.
    Validate {
        /// Output directory for validate.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Divides every upper-bound threshold by this factor.
        #[arg(long, default_value_t = 1.0)]
        tighten: f64,
        /// Flips the sign of the lowering part of the position operator.
        #[arg(long)]
        mutate_position_sign: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, which) = match cli.command {
        Command::Validate {
            out,
            jobs,
            seed,
            tighten,
            mutate_position_sign,
        } => {
            if !(tighten > 0.0) {
                return Err(CliError::Config(config::ConfigError {
                    field: "--tighten".into(),
                    line: None,
                    message: "must be positive".into(),
                }));
            }
            let mut opts = ValidateOptions {
                threshold_scale: 1.0 / tighten,
                ..ValidateOptions::default()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            if mutate_position_sign {
                opts.position_sign = PositionSign::Flipped;
            }
            let outputs = out.map(|dir| Outputs {
                dir,
                timing: false,
                jobs,
            });
            return runs::run_validate(&opts, outputs.as_ref()).map(|_| ());
        }
        Command::Propagate(c) => (c, "propagate"),
        Command::Scatter(c) => (c, "scatter"),
        Command::Ehrenfest(c) => (c, "ehrenfest"),
        Command::Localize(c) => (c, "localize"),
    };
    let mut cfg = config::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    let out = Outputs {
        dir: common.out,
        timing: common.timing,
        jobs: common.jobs,
    };
    match which {
        "propagate" => runs::run_propagate(&cfg, &out),
        "scatter" => runs::run_scatter(&cfg, &out),
        "ehrenfest" => runs::run_ehrenfest(&cfg, &out),
        _ => runs::run_localize(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
