use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use c2r::cli::{commands, overrides};

#[derive(Parser)]
#[command(name = "c2r", about = "Cooperative classification and rationalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// dotted overrides, e.g. --set optim.lr=0.005
    #[arg(long = "set")]
    sets: Vec<String>,
    /// output directory; overrides the config's `out`
    #[arg(long)]
    out: Option<PathBuf>,
    /// overwrite an existing non-empty output directory
    #[arg(long)]
    force: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> c2r::cli::Result<(c2r::config::RunConfig, PathBuf)> {
        let cfg = overrides::load_config(self.config.as_deref(), &self.sets)?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test Spurious-Motif splits plus a manifest
    GenData(ConfigArgs),
    /// Train one model per seed; writes metrics, checkpoints, and a summary
    Train(ConfigArgs),
    /// Evaluate a checkpoint on a dataset file
    Eval {
        /// checkpoint directory written by `train`
        #[arg(long)]
        checkpoint: PathBuf,
        /// dataset JSONL file
        #[arg(long)]
        data: PathBuf,
        /// optional report output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run full C2R plus the three w/o variants on shared seeds
    Ablate(ConfigArgs),
    /// Train across a grid of values for one config key
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// dotted config key to vary, e.g. `k` or `loss.alpha`
        #[arg(long)]
        param: String,
        /// comma-separated values, e.g. 2,3,5,10
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

fn run(cli: Cli) -> c2r::cli::Result<()> {
    match cli.command {
        Command::GenData(args) => {
            let (cfg, out) = args.resolve()?;
            commands::gen_data(&cfg, &out, args.force)?;
            println!("wrote dataset to {}", out.display());
        }
        Command::Train(args) => {
            let (cfg, out) = args.resolve()?;
            let summary = commands::train(&cfg, &out, args.force)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval { checkpoint, data, out } => {
            let report = commands::eval(&checkpoint, &data, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Ablate(args) => {
            let (cfg, out) = args.resolve()?;
            let table = commands::ablate(&cfg, &out, args.force)?;
            println!("{}", serde_json::to_string_pretty(&table.aggregates)?);
        }
        Command::Sweep { config, param, values } => {
            let (cfg, out) = config.resolve()?;
            let parsed: Vec<serde_json::Value> =
                values.iter().map(|v| overrides::parse_scalar(v)).collect();
            let points = commands::sweep(&cfg, &param, &parsed, &out, config.force)?;
            println!("{}", serde_json::to_string_pretty(&points)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
