mod commands;
mod csvio;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equicity::engine::EngineError;
use equicity::pooling::PoolingError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "equicity", version, about = "Participatory spatial-allocation game toolkit")]
struct Cli {
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    json: bool,
    /// Matrix CSV files carry a header row (read and written).
    #[arg(long, global = true)]
    header: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pool interests through the control network into site fractions per colour.
    Pool {
        /// Long CSV `actor,site,colour,value`.
        #[arg(long)]
        interests: PathBuf,
        /// Long CSV `site,actor,colour,value`.
        #[arg(long)]
        controls: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a seed matrix to row and column totals.
    Ipf {
        #[arg(long)]
        seed: PathBuf,
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        cols: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// How to reconcile unequal totals: strict, scale-rows or scale-cols.
        #[arg(long, default_value = "strict")]
        reconcile: String,
        /// Round the fit to integer volumes with exact column totals.
        #[arg(long)]
        quantize: bool,
        /// Fitted matrix; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit diagnostics as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Select and zone voxels for given volumes.
    Mass {
        #[arg(long)]
        config: PathBuf,
        /// Integer voxels per (site, colour).
        #[arg(long)]
        volumes: PathBuf,
        /// Criteria weights; the actors' averaged defaults when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a massing produced by `mass`.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        voxels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Issue round badges for interests, controls and a collective decision.
    Badges {
        #[arg(long)]
        interests: PathBuf,
        #[arg(long)]
        controls: PathBuf,
        /// Site fractions per colour, sites × colours.
        #[arg(long)]
        decision: PathBuf,
        /// Leave out the loser badge and gain distances.
        #[arg(long)]
        public: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play a game headlessly with scripted actor policies.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// JSON array with one policy per actor; all stubborn when omitted.
        #[arg(long)]
        policies: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute stored rounds and check they match.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        records: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// Create a game from this config at startup and print its tokens.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "EQUICITY_STATE_DIR")]
        state_dir: Option<PathBuf>,
        /// Require this bearer token for creating games.
        #[arg(long, env = "EQUICITY_ADMIN_TOKEN")]
        admin_token: Option<String>,
    },
    /// Statistics over a decision history.
    Analyze {
        /// Directory of round records written by `simulate`.
        #[arg(long, conflicts_with = "decisions", required_unless_present = "decisions")]
        records: Option<PathBuf>,
        /// Long CSV `round,actor,site,colour,value`.
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub validation: bool,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        CliError {
            validation: true,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn runtime(code: &str, message: impl Into<String>) -> Self {
        CliError {
            validation: false,
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::runtime("Io", format!("{}: {e}", path.display()))
    }

    pub fn from_csv(path: &Path, e: csv::Error) -> Self {
        if e.is_io_error() {
            Self::io(path, e)
        } else {
            Self::validation("Csv", format!("{}: {e}", path.display()))
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let runtime = matches!(
            e,
            EngineError::Io(_) | EngineError::CorruptState(_) | EngineError::Pooling(PoolingError::NoConvergence { .. })
        );
        CliError {
            validation: !runtime,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    code: &'a str,
    message: &'a str,
    exit: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command, cli.header) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let exit = if e.validation { 2 } else { 1 };
            if cli.json {
                let body = ErrorJson {
                    code: &e.code,
                    message: &e.message,
                    exit,
                };
                eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
            } else {
                eprintln!("error [{}]: {}", e.code, e.message);
            }
            ExitCode::from(exit)
        }
    }
}
