//! Command-line pipeline around `nhpg-core`: `fit`, `tests`, `simulate` and
//! `report`. Every command reads one TOML config and writes its artifacts
//! under a single output directory, all at once after everything has been
//! computed.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod battery;
pub mod config;
pub mod fit;
pub mod report;
pub mod simulate;

#[derive(Debug, Parser)]
#[command(name = "nhpg", version, about = "Two-regime NHPG hidden Markov model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write posterior summaries.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Override the MCMC seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of chains.
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Descriptive statistics and the test battery, optionally per state.
    Tests {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset from a scenario file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render the coefficient table of a finished fit.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// A failed command. Each kind has its own exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Config(String),
    Ingest(String),
    Numerical(String),
    Io(String),
    /// Missing or unusable artifacts from an earlier command.
    Artifact(String),
}

impl Failure {
    pub fn code(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Ingest(_) => "ingest",
            Failure::Numerical(_) => "numerical",
            Failure::Io(_) => "io",
            Failure::Artifact(_) => "artifact",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 3,
            Failure::Ingest(_) => 4,
            Failure::Numerical(_) => 5,
            Failure::Io(_) => 6,
            Failure::Artifact(_) => 7,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m)
            | Failure::Ingest(m)
            | Failure::Numerical(m)
            | Failure::Io(m)
            | Failure::Artifact(m) => m,
        }
    }

    pub(crate) fn ingest(e: nhpg_core::Error) -> Self {
        Failure::Ingest(e.to_string())
    }

    pub(crate) fn numerical(e: nhpg_core::Error) -> Self {
        Failure::Numerical(e.to_string())
    }

    pub(crate) fn config(e: nhpg_core::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

/// `error[<code>]: <message>` on a single line.
impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg: String = self
            .message()
            .chars()
            .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        write!(f, "error[{}]: {}", self.code(), msg)
    }
}

impl std::error::Error for Failure {}

/// Files produced by a command, held in memory until all are ready.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file to a temporary name first and renames them only once
    /// all writes succeeded, then reads each back to check its length.
    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let io = |what: &str, p: &Path, e: std::io::Error| Failure::Io(format!("{what} {}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
        let staged: Vec<(PathBuf, PathBuf)> = self
            .files
            .iter()
            .map(|(n, _)| (dir.join(format!(".{n}.partial")), dir.join(n)))
            .collect();
        let cleanup = || {
            for (tmp, _) in &staged {
                let _ = std::fs::remove_file(tmp);
            }
        };
        for ((_, bytes), (tmp, _)) in self.files.iter().zip(&staged) {
            if let Err(e) = std::fs::write(tmp, bytes) {
                cleanup();
                return Err(io("cannot write", tmp, e));
            }
        }
        for (tmp, dst) in &staged {
            if let Err(e) = std::fs::rename(tmp, dst) {
                cleanup();
                return Err(io("cannot move into place", dst, e));
            }
        }
        for ((_, bytes), (_, dst)) in self.files.iter().zip(&staged) {
            let len = std::fs::metadata(dst).map_err(|e| io("cannot stat", dst, e))?.len();
            if len != bytes.len() as u64 {
                return Err(Failure::Io(format!("{} has {len} bytes, expected {}", dst.display(), bytes.len())));
            }
        }
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Fit { common, seed, chains } => {
            let mut cfg = config::RunConfig::load(&common.config)?;
            if let Some(s) = seed {
                cfg.mcmc.seed = s;
            }
            if let Some(c) = chains {
                cfg.mcmc.chains = c;
            }
            if let Some(o) = common.out {
                cfg.output_dir = o;
            }
            let out = fit::run(&cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            out.artifacts.write(&cfg.output_dir)
        }
        Command::Tests { common } => {
            let mut cfg = config::RunConfig::load(&common.config)?;
            if let Some(o) = common.out {
                cfg.output_dir = o;
            }
            let out = battery::run(&cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            out.artifacts.write(&cfg.output_dir)?;
            print!("{}", String::from_utf8_lossy(out.artifacts.get(battery::MARKDOWN).unwrap_or_default()));
            Ok(())
        }
        Command::Simulate { common, seed } => {
            let mut cfg = config::ScenarioConfig::load(&common.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = common.out {
                cfg.output_dir = o;
            }
            simulate::run(&cfg)?.write(&cfg.output_dir)
        }
        Command::Report { common } => {
            let mut cfg = config::RunConfig::load(&common.config)?;
            if let Some(o) = common.out {
                cfg.output_dir = o;
            }
            let text = report::render(&cfg.output_dir)?;
            let mut artifacts = Artifacts::default();
            artifacts.add(report::REPORT_FILE, text.clone().into_bytes());
            artifacts.write(&cfg.output_dir)?;
            print!("{text}");
            Ok(())
        }
    }
}
