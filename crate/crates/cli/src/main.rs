use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use peakloc::harness::{self, HarnessConfig};
use serde_json::json;

/// Peak localization experiments.
#[derive(Parser, Debug)]
#[command(name = "peakloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One-step localization width against accuracy for several profiles.
    Tradeoff(Common),
    /// Detection probability over window sizes and field spreads.
    Sweep(Common),
    /// Localization error against samples on synthetic fields.
    Bench(Common),
    /// Localization error against samples on an elevation point cloud.
    Elevation(Common),
    /// Numeric against closed-form coherence of discretized profiles.
    Coherence(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with one section per experiment; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

type Runner = fn(&HarnessConfig, u64, &Path) -> peakloc::Result<Vec<PathBuf>>;

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "status": "error", "kind": kind, "message": message })
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "));
        }
    };

    let (name, common, run): (&str, Common, Runner) = match cli.command {
        Command::Tradeoff(c) => ("tradeoff", c, harness::run_tradeoff),
        Command::Sweep(c) => ("sweep", c, harness::run_sweep),
        Command::Bench(c) => ("bench", c, harness::run_bench),
        Command::Elevation(c) => ("elevation", c, harness::run_elevation),
        Command::Coherence(c) => ("coherence", c, harness::run_coherence),
    };

    let config = match &common.config {
        Some(path) => HarnessConfig::load(path),
        None => Ok(HarnessConfig::default()),
    };
    let result = config.and_then(|cfg| run(&cfg, common.seed, &common.out));
    match result {
        Ok(files) => {
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!(
                "{}",
                json!({ "status": "ok", "command": name, "seed": common.seed, "files": files })
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string().replace('\n', " ")),
    }
}
