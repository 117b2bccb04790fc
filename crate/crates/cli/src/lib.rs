//! Command-line driver for the visual homing benchmark.
//!
//! Every command reads one experiment configuration (a file or a built-in
//! preset), writes its artifacts to the output directory and records them,
//! with SHA-256 hashes, in `<command>.manifest.toml`.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration (exit 2).
    Config(String),
    /// A stage input such as a model file is missing (exit 3).
    MissingInput(String),
    /// Training diverged or produced non-finite values (exit 4).
    Numeric(String),
    /// Anything else, e.g. an unwritable output directory (exit 1).
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<homing_core::Error> for CliError {
    fn from(e: homing_core::Error) -> Self {
        use homing_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            E::InvalidArgument(_) | E::Shape(_) | E::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "homing-bench", version, about = "Visual homing benchmark")]
pub struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration; see `homing-bench presets`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Overrides the configuration's global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sets a configuration value, e.g. `train.learning_rate=0.001`.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads; falls back to HOMING_BENCH_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the world description and sample images at the nest.
    World,
    /// Render the learning flight and write the dataset manifest.
    Dataset,
    /// Build the dataset and train a network.
    Train,
    /// Bearing map of a trained network on the evaluation grid.
    Eval,
    /// Stream-field integration from perimeter starts.
    Stream,
    /// Output gradients with respect to the last convolution's activations.
    Gradcam,
    /// Full missions: training, outbound, inbound and visual homing.
    Home,
    /// List the built-in presets.
    Presets,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::World => "world",
            Command::Dataset => "dataset",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Stream => "stream",
            Command::Gradcam => "gradcam",
            Command::Home => "home",
            Command::Presets => "presets",
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("HOMING_BENCH_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| {
                CliError::Config(format!("HOMING_BENCH_THREADS={v:?} is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        // a pool configured earlier in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Loads the configuration selected by the flags.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let (text, source) = match (&cli.config, &cli.preset) {
        (Some(path), _) => (
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?,
            path.clone(),
        ),
        (None, Some(name)) => (
            config::preset_text(name)
                .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}; run `homing-bench presets`")))?
                .to_string(),
            PathBuf::from(format!("preset:{name}")),
        ),
        (None, None) => (String::new(), PathBuf::from("defaults")),
    };
    config::load(&text, &source, &cli.overrides, cli.seed, cli.out.as_deref())
}

/// Runs a parsed command line and returns the report printed on success.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    if cli.command == Command::Presets {
        return Ok(config::PRESETS
            .iter()
            .map(|(n, d, _)| format!("{n:22} {d}\n"))
            .collect());
    }
    configure_threads(cli.threads)?;
    let cfg = load_config(cli)?;
    commands::run(cli.command, &cfg, &cli.overrides)
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("homing-bench {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
