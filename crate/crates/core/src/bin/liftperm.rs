use clap::Parser;
use liftperm::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
