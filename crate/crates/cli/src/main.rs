use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iiblab_cli::config::RunConfig;
use iiblab_cli::run::Session;
use iiblab_cli::snapshot::Snapshot;
use iiblab_cli::{CliError, ExitStatus};

/// Type IIB flow laboratory on flat complex tori.
#[derive(Parser)]
#[command(name = "iiblab", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Integrate the flow, streaming diagnostics, snapshots and reports.
    Run(RunArgs),
    /// Run the identity checks on the configured initial data.
    Verify(RunArgs),
    /// Print the header of a snapshot file and check its data block.
    SnapshotInfo { path: PathBuf },
    /// Print the JSON schema of the config format.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of a random initial metric.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("IIBLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("IIBLAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn session(args: &RunArgs) -> Result<Session, CliError> {
    let cfg = RunConfig::load(&args.config)?.with_overrides(args.seed, args.resolution);
    Session::new(cfg)
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn dispatch(cli: Cli) -> Result<ExitStatus, CliError> {
    init_threads()?;
    match cli.verb {
        Verb::Run(args) => {
            let s = session(&args)?;
            let out = args
                .out
                .clone()
                .or_else(|| s.config.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("iiblab-out"));
            let summary = s.run(&out)?;
            print(&summary);
            Ok(summary.status)
        }
        Verb::Verify(args) => {
            let s = session(&args)?;
            let (reports, status) = s.verify(args.out.as_deref())?;
            print(&reports);
            Ok(status)
        }
        Verb::SnapshotInfo { path } => {
            let snap = Snapshot::load(&path)?;
            print(&snap.header);
            Ok(ExitStatus::Ok)
        }
        Verb::Schema => {
            print(&iiblab_cli::config::schema());
            Ok(ExitStatus::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.status().code() as u8)
        }
    }
}
