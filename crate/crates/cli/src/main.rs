use std::io::IsTerminal;
use std::process::ExitCode;

use clap::Parser;
use tagchain_cli::commands::{run, Style};
use tagchain_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let style = if !cli.json && std::io::stdout().is_terminal() { Style::Text } else { Style::Json };
    let mut stdout = std::io::stdout().lock();
    match run(&cli, style, &mut stdout) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tagchain: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
