use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdpower_cli::commands::{self, CliError, Outcome, Overrides, Status};
use hdpower_cli::config::{Scenario, Target};

#[derive(Parser)]
#[command(
    name = "hdpower",
    version,
    about = "Deadline-constrained transmit power over fading channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed form against simulation over a range of frame lengths.
    Singlehop(Run),
    /// Closed form against backward induction on a grid.
    DpVerify(Run),
    /// Route, schedule and simulate flows over a network.
    Multihop(Run),
    /// Recompute a published table.
    Reproduce {
        /// Taken from the config when omitted.
        #[arg(value_enum, required_unless_present = "config")]
        target: Option<Target>,
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Run {
    /// JSON experiment config.
    #[arg(long, short)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Base seed of every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Frames per single-hop simulation.
    #[arg(long)]
    frames: Option<u64>,
    /// Cycles per network simulation.
    #[arg(long)]
    cycles: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tolerance; exceeding it exits with status 2.
    #[arg(long)]
    tolerance: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            frames: self.frames,
            cycles: self.cycles,
            out: self.out.clone(),
            tolerance: self.tolerance,
        }
    }
}

fn run(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Singlehop(r) => {
            let (cfg, src) = commands::load(&r.config, Scenario::Singlehop, &r.common.overrides())?;
            commands::run_singlehop(&cfg, &src)
        }
        Command::DpVerify(r) => {
            let (cfg, src) = commands::load(&r.config, Scenario::DpVerify, &r.common.overrides())?;
            commands::run_dp_verify(&cfg, &src)
        }
        Command::Multihop(r) => {
            let (cfg, src) = commands::load(&r.config, Scenario::Multihop, &r.common.overrides())?;
            commands::run_multihop(&cfg, &src)
        }
        Command::Reproduce {
            target,
            config,
            common,
        } => {
            let cfg = match config {
                Some(path) => commands::load(&path, Scenario::Reproduce, &common.overrides())?.0,
                None => {
                    let mut cfg = commands::reproduce_config(target.expect("clap requires one"));
                    common.overrides().apply(&mut cfg)?;
                    cfg
                }
            };
            let configured = cfg.reproduce.as_ref().expect("validated").target;
            let target = target.unwrap_or(configured);
            if target != configured {
                return Err(CliError::Usage(format!(
                    "target {target} does not match the config's target {configured}"
                )));
            }
            commands::run_reproduce(&cfg, target)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation failures; 2 is reserved for tolerance
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.status == Status::Tolerance {
                eprintln!("error: results outside tolerance");
            }
            ExitCode::from(out.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}
