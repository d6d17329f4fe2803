mod args;
mod commands;
mod error;
mod io;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("paraseg: {e}");
        std::process::exit(e.exit_code());
    }
}
