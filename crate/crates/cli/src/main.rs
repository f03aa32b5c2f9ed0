//! `hyflow`: run workflows from the terminal, directly or through the
//! workflow service.

mod args;
mod local;
mod output;
mod service;

use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::Parser;
use hyflow_core::StateStore;
use tracing_subscriber::EnvFilter;

use crate::args::{CcCommand, Cli, Top, GRAMMAR};
use crate::local::Context;

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(2);
        }
    };
    init_logging(cli.verbose);
    let ctx = Context {
        root: cli.root.clone().unwrap_or_else(StateStore::default_root),
        poll: cli.poll.map(Duration::from_secs_f64),
        service_url: cli.service_url.clone(),
        verbose: cli.verbose,
    };
    let Top::Cc(cc) = cli.command;
    let result = match cc.command {
        CcCommand::Workflow(command) => local::workflow(&ctx, command),
        CcCommand::Start(args) => service::start(&ctx, args),
        CcCommand::Stop => service::stop(&ctx),
        CcCommand::Status => service::status(&ctx),
        CcCommand::View => service::view(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
