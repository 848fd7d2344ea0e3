//! The `tinycnn` command-line driver. `main` only parses and maps errors to
//! exit codes; the commands live here so tests can call them in-process.
//!
//! Exit codes: 0 success, 1 domain failure (design does not fit, emit
//! refused), 2 usage or I/O error.

pub mod args;
mod commands;
mod format;

pub use args::{Cli, Command, GlobalArgs};
pub use format::thousands;

/// Verification images drawn when neither `--random` nor `--images` is given.
pub const DEFAULT_VERIF_IMAGES: usize = 32;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DOMAIN: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Run one command. `Ok` carries the exit code of a command that completed
/// (a failed fit check is a completed command).
pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Check => commands::check(g),
        Command::Verifset(a) => commands::verifset(g, a),
        Command::Tune(a) => commands::tune(g, a),
        Command::Simulate(a) => commands::simulate(g, a),
        Command::Perf => commands::perf(g),
        Command::Emit(a) => commands::emit(g, a),
        Command::Report => commands::report(g),
        Command::InitWeights(a) => commands::init_weights(g, a),
    }
}

/// Exit code for an error that escaped [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tinycnn_core::Error>() {
        Some(tinycnn_core::Error::DoesNotFit(_)) => EXIT_DOMAIN,
        _ => EXIT_USAGE,
    }
}
