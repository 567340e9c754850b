//! `noisy-circuit`: characterize a device, fit composite noise models and
//! score them against application runs.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use output::CliError;

#[derive(Parser)]
#[command(name = "noisy-circuit", version, about = "Noise characterization and composite noise modeling")]
struct Cli {
    /// Directory that receives every file a command writes.
    #[arg(long, global = true, env = "NOISY_CIRCUIT_OUT", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the characterization suite on a backend and archive the counts.
    Characterize(CharacterizeArgs),
    /// Fit a composite noise model from a characterization archive.
    Fit(FitArgs),
    /// Run an application and score noise models against it.
    Evaluate(EvaluateArgs),
    /// Canned end-to-end runs on the mock backend.
    Demo(DemoArgs),
}

#[derive(Args, Serialize)]
pub struct BackendArgs {
    /// Device topology JSON, or `builtin:poughkeepsie` / `builtin:line:<n>`.
    #[arg(long)]
    pub device: String,
    /// `mock:<truth.json>` or `file:<counts.json>`.
    #[arg(long)]
    pub backend: String,
    #[arg(long, default_value_t = 8192)]
    pub shots: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct CharacterizeArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    /// `per-element`, `register` or `subset:<q,...>`.
    #[arg(long, default_value = "per-element")]
    pub granularity: String,
    /// Even Hadamard-sequence lengths, comma separated. Empty skips them.
    #[arg(long, value_delimiter = ',')]
    pub hadamard_lengths: Vec<usize>,
    /// Calibration-window tag stored with the archive.
    #[arg(long)]
    pub window: Option<String>,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Model variant: noiseless, sro, aro, dp, sro+dp or aro+dp.
    #[arg(long, default_value = "aro+dp")]
    pub flags: String,
    #[arg(long, default_value = "per-element")]
    pub granularity: String,
    /// Also fit X and Hadamard depolarizing channels.
    #[arg(long)]
    pub single_qubit_dp: bool,
    /// Topology whose qubits and links must all be covered.
    #[arg(long)]
    pub device: Option<String>,
    /// Base name of the model file, without extension.
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    /// `ghz:<n>`, `ghz:<a>..<b>` or `bv:<secret>@<d1,d2,...>/<oracle>`.
    #[arg(long)]
    pub app: String,
    /// Model file, optionally as `<id>=<path>`. Repeat for several models.
    #[arg(long = "model", required = true)]
    pub models: Vec<String>,
    /// Rank all models by TVD (the default mode).
    #[arg(long)]
    pub compare: bool,
    /// Walk the models in the given order until one meets the threshold.
    #[arg(long, conflicts_with_all = ["compare", "scaling"])]
    pub select: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Report TVD per CNOT across GHZ sizes.
    #[arg(long, conflicts_with = "compare")]
    pub scaling: bool,
    /// Shots per simulated resample.
    #[arg(long, default_value_t = 8192)]
    pub sim_shots: u64,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
    /// Score against exact model distributions instead of sampling.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Args, Serialize)]
pub struct DemoArgs {
    #[arg(value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 8192)]
    pub shots: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub resamples: usize,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// GHZ and Bernstein-Vazirani reproduction on the poughkeepsie layout.
    FullPaper,
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::from(noisy_circuit::Error::from(e)))?;
    match &cli.command {
        Command::Characterize(a) => commands::characterize(a, &cli.out),
        Command::Fit(a) => commands::fit(a, &cli.out),
        Command::Evaluate(a) => commands::evaluate(a, &cli.out),
        Command::Demo(a) => commands::demo(a, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
