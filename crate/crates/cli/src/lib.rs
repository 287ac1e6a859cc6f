//! `untangle` command line: one subcommand per pipeline stage. Every stage
//! reads and writes plain files so stages compose through the shell, and
//! each run leaves a manifest (config, input digests, tool version) next
//! to its outputs.
//!
//! Exit status: 0 on success, 1 on a validation error (bad flags, bad
//! config, malformed input), 2 on a runtime failure.

mod args;
mod commands;
mod config;
mod manifest;
mod server;

use std::ffi::OsString;
use std::fmt;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

/// Marks an error as the caller's fault rather than a runtime failure.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub(crate) fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// Parse `argv` (program name first), run the subcommand and return the
/// exit status.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    init_tracing(cli.verbose);
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code(&err)
        }
    }
}

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("UNTANGLE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// 1 when anything in the error chain is a validation failure, else 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(is_validation) {
        EXIT_INVALID
    } else {
        EXIT_RUNTIME
    }
}

fn is_validation(e: &(dyn std::error::Error + 'static)) -> bool {
    use untangle_core::classifier::ClassifierError as C;
    use untangle_core::code_metrics::CodeMetricsError as M;
    use untangle_core::denoise::DenoiseError as D;
    use untangle_core::embedding::EmbedError as E;
    use untangle_core::goldset::GoldsetError as G;
    use untangle_core::llm::LlmError as L;
    use untangle_core::mining::MiningError as Mi;
    use untangle_core::prompt::PromptError;
    use untangle_core::stats::StatsError;

    if e.is::<Invalid>()
        || e.is::<PromptError>()
        || e.is::<StatsError>()
        || e.is::<serde_json::Error>()
        || e.is::<toml::de::Error>()
        || e.is::<csv::Error>()
    {
        return true;
    }
    if let Some(e) = e.downcast_ref::<Mi>() {
        return matches!(e, Mi::RepoNotFound(_) | Mi::InvalidRule(..) | Mi::Malformed { .. });
    }
    if let Some(e) = e.downcast_ref::<G>() {
        return !matches!(e, G::IoFailure(_));
    }
    if let Some(e) = e.downcast_ref::<L>() {
        return matches!(e, L::Config(_) | L::EmptyPrompt);
    }
    if let Some(e) = e.downcast_ref::<E>() {
        return matches!(e, E::EmptyDiff | E::Config(_) | E::Malformed { .. });
    }
    if let Some(e) = e.downcast_ref::<C>() {
        return !matches!(e, C::NonFiniteLoss { .. } | C::Io(_));
    }
    if let Some(e) = e.downcast_ref::<M>() {
        return !matches!(e, M::Io(_));
    }
    if let Some(e) = e.downcast_ref::<D>() {
        return matches!(e, D::MissingMetrics(_) | D::Stats(_));
    }
    false
}
