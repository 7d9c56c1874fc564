use clap::Parser;

use ppm_cli::args::Cli;
use ppm_cli::{apply_seed_env, run, SEED_ENV};

fn main() {
    let mut cli = Cli::parse();
    let result = apply_seed_env(&mut cli, std::env::var(SEED_ENV).ok()).and_then(|_| run(cli));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
