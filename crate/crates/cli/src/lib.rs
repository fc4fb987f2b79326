//! The `slg` command line and HTTP service.

pub mod args;
mod commands;
pub mod config;
pub mod service;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

pub use commands::load_graph;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command, LogLevel};
use config::FileConfig;

pub const OUT_DIR_ENV: &str = "SLG_OUT_DIR";

/// A failed command and the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, unreadable or invalid input, backend failures.
    Input(anyhow::Error),
    /// An audit found what it was asked to fail on.
    Audit(String),
    /// The orchestrator named no registered expert.
    Routing(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Audit(_) => 2,
            Failure::Routing(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "{e:#}"),
            Failure::Audit(m) | Failure::Routing(m) => f.write_str(m),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

/// Settings shared by every command after flags, environment and config
/// file are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Globals {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub log_level: LogLevel,
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => return clap_exit(e),
    };
    let file = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => Some(f),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        },
        None => None,
    };
    let cli = match &file {
        Some(file) => {
            let path = command_path(&cli.command);
            let merged = match file.splice(&argv, &path) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(1);
                }
            };
            match Cli::try_parse_from(&merged) {
                Ok(cli) => cli,
                Err(e) => return clap_exit(e),
            }
        }
        None => cli,
    };

    let globals = Globals {
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| file.as_ref().and_then(|f| f.out_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.as_ref().and_then(|f| f.seed)).unwrap_or(0),
        log_level: cli.log_level.or(file.as_ref().and_then(|f| f.log_level)).unwrap_or(LogLevel::Warn),
    };
    init_logging(globals.log_level);
    tracing::debug!(?globals, command = ?cli.command, "effective configuration");

    match commands::dispatch(cli.command, &globals) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

fn command_path(command: &Command) -> Vec<&'static str> {
    match command {
        Command::Audit(sub) => vec!["audit", sub.name()],
        other => vec![other.name()],
    }
}

fn clap_exit(e: clap::Error) -> ExitCode {
    let _ = e.print();
    if e.use_stderr() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn init_logging(level: LogLevel) {
    let filter = EnvFilter::try_from_env("SLG_LOG").unwrap_or_else(|_| EnvFilter::new(level.as_str()));
    let ansi = std::io::IsTerminal::is_terminal(&std::io::stderr());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_ansi(ansi).with_writer(std::io::stderr).try_init();
}
