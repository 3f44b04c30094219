use clap::Parser;

use dualgraph_core::cli::{main_with, Cli};

fn main() {
    if let Err(e) = main_with(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
