//! Command-line front-end. [`run`] parses arguments, dispatches to a
//! subcommand and maps failures to exit codes.

mod args;
mod commands;
mod output;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;
use idiolens_core::ErrorKind;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const SEED_ENV: &str = "IDIOLENS_SEED";

/// Bad flag values found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<idiolens_core::Error>() {
            return match e.kind() {
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Data => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // a second call (tests run many commands in one process) is harmless
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn resolve_seed(flag: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => match v.trim().parse() {
            Ok(s) => Ok(s),
            Err(_) => usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        },
        Err(_) => Ok(flag),
    }
}

/// Run with the given arguments (program name first); returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    let result = resolve_seed(cli.seed).and_then(|seed| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build()?;
        pool.install(|| commands::dispatch(&cli.command, seed))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
