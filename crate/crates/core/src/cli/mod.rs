//! Command-line entry point: configuration, execution and output plumbing.

pub mod config;
pub mod plot;
pub mod run;

use std::io::Write;

pub use config::{parse_args, Cli, CliCommand, Command, Flags, RunConfig};
pub use run::{load_field_csv, run, ExitStatus, OperationRecord, RunManifest, ARTIFACT_VERSION};

use crate::error::ConfigError;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "BERNSTEIN_LAB_THREADS";

/// Sizes the global worker pool from `BERNSTEIN_LAB_THREADS`, if set.
pub fn configure_threads() -> Result<Option<usize>, ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::single(THREADS_ENV, format!("expected a positive integer, got `{raw}`")))?;
    // a pool built earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Parses `args`, runs the pipeline, writes the manifest (to `--manifest` or
/// stdout) and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitStatus::ConfigError.code();
    }
    let cli = match Cli::try_parse_from_args(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::ConfigError.code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match cli.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::ConfigError.code();
        }
    };
    let manifest = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&config))) {
        Ok(m) => m,
        Err(_) => {
            eprintln!("error: internal failure");
            return ExitStatus::Internal.code();
        }
    };
    if let Some(message) = &manifest.message {
        eprintln!("error: {message}");
    }
    let mut text = manifest.to_json();
    text.push('\n');
    let written = match &config.manifest {
        Some(path) => std::fs::write(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e}");
        return ExitStatus::Internal.code();
    }
    manifest.exit_code
}

impl Cli {
    fn try_parse_from_args<I, T>(args: I) -> Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        <Self as clap::Parser>::try_parse_from(args)
    }
}
