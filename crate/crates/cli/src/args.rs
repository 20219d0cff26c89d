use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tagchain::experiments::{CloningMode, ExperimentName};
use tagchain::{ProtocolMutant, Scheme};

use crate::config::parse_seed;

#[derive(Debug, Parser)]
#[command(name = "tagchain", version, about = "RFID batch mutual-authentication simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Emit JSON lines even on a terminal.
    #[arg(long, global = true)]
    pub json: bool,

    /// TOML file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice (decimal or 0x-hex).
    #[arg(long, global = true, env = "TAGCHAIN_SEED", value_parser = parse_seed)]
    pub seed: Option<u64>,

    /// Log verbosity; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run batch sessions and write the transcript.
    Simulate(SimulateArgs),
    /// Run one security experiment and report its verdict.
    Experiment(ExperimentArgs),
    /// Print the time and communication cost model.
    Cost(CostArgs),
    /// Check or rewrite the pinned digest file.
    Golden(GoldenArgs),
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn parse_mutant(s: &str) -> Result<ProtocolMutant, String> {
    s.parse()
}

fn parse_experiment(s: &str) -> Result<ExperimentName, String> {
    s.parse().map_err(|e: tagchain::experiments::ExperimentError| e.to_string())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub tags: Option<u32>,
    #[arg(long)]
    pub sessions: Option<u32>,
    /// Built-in hook program name or a JSON hook file.
    #[arg(long)]
    pub hooks: Option<String>,
    /// Where to write the JSON-lines transcript.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_parser = parse_mutant)]
    pub mutant: Option<ProtocolMutant>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_parser = parse_experiment)]
    pub name: ExperimentName,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, value_parser = parse_mutant)]
    pub mutant: Option<ProtocolMutant>,
    #[arg(long)]
    pub adversary: Option<String>,
    /// Cloning only: let the adversary corrupt other tags.
    #[arg(long)]
    pub active: bool,
    /// Backward security only: show the adversary the withheld nonce.
    #[arg(long)]
    pub lift_restriction: bool,
}

impl ExperimentArgs {
    pub fn cloning_mode(&self) -> CloningMode {
        if self.active {
            CloningMode::Active
        } else {
            CloningMode::Passive
        }
    }
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    /// Batch size for the reader-to-server figures.
    #[arg(long)]
    pub tags: Option<u32>,
    #[arg(long)]
    pub no_aggregate: bool,
}

#[derive(Debug, Args)]
pub struct GoldenArgs {
    /// Rewrite the file with this build's digests.
    #[arg(long)]
    pub regen_golden: bool,
    #[arg(long, default_value = tagchain::golden::GOLDEN_PATH)]
    pub path: PathBuf,
}
