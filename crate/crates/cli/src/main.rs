mod args;
mod commands;
mod manifest;

use clap::Parser;

/// Config, input and I/O failures.
const EXIT_ERROR: i32 = 2;

fn init_logging() {
    let level = std::env::var("AIRCATCH_LOG").ok();
    let valid = ["error", "warn", "info", "debug"];
    let filter = match level.as_deref() {
        Some(l) if valid.contains(&l) => l,
        _ => "warn",
    };
    env_logger::Builder::new().parse_filters(filter).format_timestamp(None).init();
    if let Some(l) = level.filter(|l| !valid.contains(&l.as_str())) {
        log::warn!("AIRCATCH_LOG={l:?} is not one of {valid:?}; using warn");
    }
}

fn main() {
    init_logging();
    let cli = args::Cli::parse();
    let code = match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    std::process::exit(code);
}
